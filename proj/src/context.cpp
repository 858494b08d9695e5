#include "paratts/context.hpp"

#include "paratts/error.hpp"

namespace paratts {

LinguisticsAware::LinguisticsAware(ag::ParamSet& ps, const ModelConfig& cfg, Rng& init) {
  embedding_ = &ps.add("ling.embedding",
                       glorot(cfg.n_symbols, cfg.embed_dim, cfg.n_symbols, cfg.embed_dim, init));
  prenet_ = Prenet(ps, "ling.prenet", cfg.embed_dim, cfg.encoder_prenet, cfg.encoder_dropout, false, init);
  CbhgConfig cc = cfg.cbhg;
  cc.in_dim = cfg.encoder_prenet.back();
  cbhg_ = Cbhg(ps, "ling.cbhg", cc, init);
  mha_ = MultiHeadAttention(ps, "ling.attention", cfg.model_dim(), cfg.attention_heads, init);
}

ParagraphLinguistic LinguisticsAware::encode_paragraph_text(ag::Graph& g,
                                                            std::span<const int> paragraph_ids,
                                                            const RunMode& mode) const {
  if (paragraph_ids.empty()) throw ValidationError("paragraph text encoder: empty sequence");
  ag::Var e = ag::embedding(g.param(*embedding_), paragraph_ids);
  ParagraphLinguistic pl;
  pl.h_p = cbhg_.forward(g, prenet_.forward(g, e, mode));
  pl.h_pm = ag::slice_rows(pl.h_p, pl.h_p.rows() - 1, 1);
  return pl;
}

ag::Var LinguisticsAware::forward(ag::Graph& g, const ag::Var& h_s, const ParagraphLinguistic& pl,
                                  std::vector<Mat>* weights) const {
  if (h_s.cols() != pl.h_p.cols()) throw ShapeError("linguistics-aware: width mismatch");
  auto att = mha_.forward(g, h_s, pl.h_p, pl.h_p);
  if (weights) *weights = std::move(att.weights);
  return ag::add(att.context, ag::broadcast_rows(pl.h_pm, h_s.rows()));
}

ProsodyAware::ProsodyAware(ag::ParamSet& ps, const ModelConfig& cfg, Rng& init) {
  int in = 3;
  for (std::size_t i = 0; i < cfg.prosody_channels.size(); ++i) {
    convs_.emplace_back(ps, "pros.encoder.conv" + std::to_string(i), in, cfg.prosody_channels[i],
                        cfg.prosody_kernel, Activation::kRelu, init);
    in = cfg.prosody_channels[i];
  }
  gru_ = Gru(ps, "pros.encoder.gru", in, cfg.prosody_gru, init);
  mha_ = MultiHeadAttention(ps, "pros.attention", cfg.model_dim(), cfg.attention_heads, init);
}

ParagraphProsodic ProsodyAware::encode_paragraph_prosody(ag::Graph& g, const ag::Var& prosody,
                                                         bool training) const {
  if (prosody.rows() == 0) throw ShapeError("prosody encoder: empty sequence");
  if (prosody.cols() != 3) throw ShapeError("prosody encoder: expected 3 feature columns");
  ag::Var h = prosody;
  for (const auto& c : convs_) h = c.forward(g, h, training);
  ParagraphProsodic pp;
  pp.h_q = gru_.forward(g, h);
  pp.h_qm = ag::slice_rows(pp.h_q, pp.h_q.rows() - 1, 1);
  return pp;
}

ag::Var ProsodyAware::forward(ag::Graph& g, const ag::Var& query, const ParagraphProsodic& pp,
                              std::vector<Mat>* weights) const {
  if (query.cols() != pp.h_q.cols()) throw ShapeError("prosody-aware: width mismatch");
  auto att = mha_.forward(g, query, pp.h_q, pp.h_q);
  if (weights) *weights = std::move(att.weights);
  return ag::add(att.context, ag::broadcast_rows(pp.h_qm, query.rows()));
}

ProsodyPredictor::ProsodyPredictor(ag::ParamSet& ps, const ModelConfig& cfg, Rng& init)
    : kind_(cfg.predictor), dropout_(cfg.predictor_dropout) {
  if (kind_ == PredictorKind::kConv) {
    conv1_ = Conv1d(ps, "pros.predictor.conv0", cfg.model_dim(), cfg.predictor_channels,
                    cfg.predictor_kernel, init);
    ln1_ = LayerNorm(ps, "pros.predictor.ln0", cfg.predictor_channels);
    conv2_ = Conv1d(ps, "pros.predictor.conv1", cfg.predictor_channels, cfg.predictor_channels,
                    cfg.predictor_kernel, init);
    ln2_ = LayerNorm(ps, "pros.predictor.ln1", cfg.predictor_channels);
    out_ = Linear(ps, "pros.predictor.out", cfg.predictor_channels, 3, init);
  } else {
    gru_ = Gru(ps, "pros.predictor.gru", cfg.model_dim(), cfg.predictor_gru, init);
    out_ = Linear(ps, "pros.predictor.out", cfg.predictor_gru, 3, init);
  }
}

ag::Var ProsodyPredictor::forward(ag::Graph& g, const ag::Var& query, const RunMode& mode) const {
  ag::Var x = ag::detach(query);
  if (kind_ == PredictorKind::kGru) return out_.forward(g, gru_.forward(g, x));
  const bool drop = mode.training && dropout_ > 0.0;
  if (drop && !mode.rng) throw Error("prosody predictor: dropout is active but no rng was supplied");
  x = ln1_.forward(g, conv1_.forward(g, x));
  if (drop) x = ag::dropout(x, dropout_, *mode.rng);
  x = ln2_.forward(g, conv2_.forward(g, x));
  if (drop) x = ag::dropout(x, dropout_, *mode.rng);
  return out_.forward(g, x);
}

PositionEmbedding::PositionEmbedding(ag::ParamSet& ps, const ModelConfig& cfg, Rng& init)
    : proj_(ps, "pos.proj", 3, cfg.model_dim(), init) {}

ag::Var PositionEmbedding::forward(ag::Graph& g, std::span<const PositionCode> codes,
                                   std::span<const std::size_t> phone_counts) const {
  if (codes.size() != phone_counts.size())
    throw ShapeError("position embedding: " + std::to_string(codes.size()) + " codes for " +
                     std::to_string(phone_counts.size()) + " phone counts");
  std::size_t n = 0;
  for (auto c : phone_counts) n += c;
  if (n == 0) throw ShapeError("position embedding: no phones");
  Mat onehot = Mat::Zero(static_cast<Eigen::Index>(n), 3);
  Eigen::Index row = 0;
  for (std::size_t s = 0; s < codes.size(); ++s) {
    const auto oh = codes[s].one_hot();
    for (std::size_t k = 0; k < phone_counts[s]; ++k, ++row)
      for (int c = 0; c < 3; ++c) onehot(row, c) = oh[static_cast<std::size_t>(c)];
  }
  return proj_.forward(g, g.constant(std::move(onehot)));
}

ag::Var fuse_memory(const ag::Var& enc, const ag::Var& ling, const ag::Var& pros, const ag::Var& pos) {
  ag::Var m = enc;
  for (const ag::Var* v : {&ling, &pros, &pos}) {
    if (!v->valid()) continue;
    if (v->rows() != enc.rows() || v->cols() != enc.cols())
      throw ShapeError("fuse_memory: context length " + std::to_string(v->rows()) +
                       " does not match encoder length " + std::to_string(enc.rows()));
    m = ag::add(m, *v);
  }
  return m;
}

}  // namespace paratts
