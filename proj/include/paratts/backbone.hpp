#pragma once

// Sequence-to-sequence acoustic backbone: phoneme embedding, encoder pre-net
// and CBHG; an autoregressive decoder with Gaussian-mixture attention, a
// two-layer LSTM stack, mel and stop-token projections and a residual
// convolutional post-net. One mel frame per decoder step.

#include <span>

#include "paratts/layers.hpp"
#include "paratts/model_config.hpp"

namespace paratts {

struct BackboneOutput {
  ag::Var mel_before;   // T x n_mels
  ag::Var mel_after;    // mel_before + postnet(mel_before)
  ag::Var stop_logits;  // T x 1
  Mat alignments;       // T x memory length
  Mat gmm_means;        // T x mixtures, after each step
  Mat gmm_weights;      // T x mixtures
  bool truncated = false;

  Eigen::Index frames() const { return mel_before.rows(); }
  // Mixture-weighted mean position after the last step.
  double final_mean_position() const;
};

struct DecodeLimits {
  int max_frames = 2000;
  double stop_threshold = 0.5;
  int min_frames = 1;
};

class Backbone {
 public:
  Backbone(ag::ParamSet& ps, const ModelConfig& cfg, Rng& init);

  // Embedding -> pre-net -> CBHG; (len x model_dim).
  ag::Var encode_text(ag::Graph& g, std::span<const int> ids, const RunMode& mode) const;

  // memory: (len x model_dim) attention memory; target: T x n_mels.
  BackboneOutput forward_teacher_forced(ag::Graph& g, const ag::Var& memory, const Mat& target,
                                        const RunMode& mode) const;

  // Feeds back its own predictions until the stop probability exceeds the
  // threshold or max_frames is reached (truncated flag set).
  BackboneOutput decode_autoregressive(ag::Graph& g, const ag::Var& memory, const DecodeLimits& limits,
                                       const RunMode& mode) const;

  const ModelConfig& config() const { return cfg_; }

 private:
  struct StepOut {
    ag::Var s;
    ag::Var means;
    Mat alignment;
    Mat weights;
  };
  struct DecoderState {
    std::vector<LstmState> lstm;
    ag::Var means;
    ag::Var s;  // top-layer output of the previous step
  };
  DecoderState initial_state(ag::Graph& g) const;
  StepOut step(ag::Graph& g, DecoderState& st, const ag::Var& prenet_row, const ag::Var& memory) const;
  ag::Var postnet(ag::Graph& g, const ag::Var& mel, bool training) const;

  ModelConfig cfg_;
  ag::Parameter* embedding_ = nullptr;
  Prenet encoder_prenet_;
  Cbhg cbhg_;
  Prenet decoder_prenet_;
  GmmAttention attention_;
  std::vector<LstmCell> lstm_;
  Linear mel_proj_;
  Linear stop_proj_;
  std::vector<ConvBnAct> postnet_;
};

}  // namespace paratts
