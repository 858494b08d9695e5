#pragma once

// Paragraph context networks fused into the backbone memory: the
// linguistics-aware network (paragraph text encoder + multi-head attention),
// the prosody-aware network (prosody encoder + attention, with a prosody
// predictor trained behind a stop-gradient) and the sentence-position
// embedding.

#include <span>

#include "paratts/corpus.hpp"
#include "paratts/layers.hpp"
#include "paratts/model_config.hpp"

namespace paratts {

struct ParagraphLinguistic {
  ag::Var h_p;   // m x d
  ag::Var h_pm;  // 1 x d, last row of h_p
};

struct ParagraphProsodic {
  ag::Var h_q;   // m x d
  ag::Var h_qm;  // 1 x d, last row of h_q
};

class LinguisticsAware {
 public:
  LinguisticsAware(ag::ParamSet& ps, const ModelConfig& cfg, Rng& init);

  ParagraphLinguistic encode_paragraph_text(ag::Graph& g, std::span<const int> paragraph_ids,
                                            const RunMode& mode) const;
  // multihead(Q = h_s, K = V = h_p) + broadcast(h_pm).
  ag::Var forward(ag::Graph& g, const ag::Var& h_s, const ParagraphLinguistic& pl,
                  std::vector<Mat>* weights = nullptr) const;
  const MultiHeadAttention& attention() const { return mha_; }

 private:
  ag::Parameter* embedding_ = nullptr;
  Prenet prenet_;
  Cbhg cbhg_;
  MultiHeadAttention mha_;
};

class ProsodyAware {
 public:
  ProsodyAware(ag::ParamSet& ps, const ModelConfig& cfg, Rng& init);

  // prosody: m x 3 normalised phone-level features.
  ParagraphProsodic encode_paragraph_prosody(ag::Graph& g, const ag::Var& prosody, bool training) const;
  // multihead(Q = query, K = V = h_q) + broadcast(h_qm).
  ag::Var forward(ag::Graph& g, const ag::Var& query, const ParagraphProsodic& pp,
                  std::vector<Mat>* weights = nullptr) const;
  const MultiHeadAttention& attention() const { return mha_; }

 private:
  std::vector<ConvBnAct> convs_;
  Gru gru_;
  MultiHeadAttention mha_;
};

// Maps (len x d) queries to (len x 3) prosody. The input is detached first
// so the predictor loss never reaches the encoders that produced it.
class ProsodyPredictor {
 public:
  ProsodyPredictor(ag::ParamSet& ps, const ModelConfig& cfg, Rng& init);

  ag::Var forward(ag::Graph& g, const ag::Var& query, const RunMode& mode) const;

 private:
  PredictorKind kind_;
  double dropout_ = 0.0;
  Conv1d conv1_, conv2_;
  LayerNorm ln1_, ln2_;
  Gru gru_;
  Linear out_;
};

// One-hot position codes replicated per phone, then a 3 -> d linear layer.
class PositionEmbedding {
 public:
  PositionEmbedding(ag::ParamSet& ps, const ModelConfig& cfg, Rng& init);

  ag::Var forward(ag::Graph& g, std::span<const PositionCode> codes,
                  std::span<const std::size_t> phone_counts) const;

 private:
  Linear proj_;
};

// Elementwise enc + ling + pros + pos; invalid Vars count as zero.
ag::Var fuse_memory(const ag::Var& enc, const ag::Var& ling, const ag::Var& pros, const ag::Var& pos);

}  // namespace paratts
