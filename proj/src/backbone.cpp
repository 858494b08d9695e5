#include "paratts/backbone.hpp"

#include <cmath>

#include "paratts/error.hpp"

namespace paratts {

double BackboneOutput::final_mean_position() const {
  if (gmm_means.rows() == 0) return 0.0;
  const Eigen::Index last = gmm_means.rows() - 1;
  return gmm_means.row(last).dot(gmm_weights.row(last));
}

Backbone::Backbone(ag::ParamSet& ps, const ModelConfig& cfg, Rng& init) : cfg_(cfg) {
  cfg_.validate();
  embedding_ = &ps.add("encoder.embedding",
                       glorot(cfg.n_symbols, cfg.embed_dim, cfg.n_symbols, cfg.embed_dim, init));
  encoder_prenet_ = Prenet(ps, "encoder.prenet", cfg.embed_dim, cfg.encoder_prenet, cfg.encoder_dropout,
                           false, init);
  CbhgConfig cc = cfg.cbhg;
  cc.in_dim = cfg.encoder_prenet.back();
  cbhg_ = Cbhg(ps, "encoder.cbhg", cc, init);

  decoder_prenet_ = Prenet(ps, "decoder.prenet", cfg.n_mels, cfg.decoder_prenet, cfg.decoder_dropout,
                           true, init);
  attention_ = GmmAttention(ps, "decoder.attention", cfg.decoder_lstm, cfg.gmm_dim, cfg.gmm_mixtures,
                            init, cfg.gmm_delta_bias, cfg.gmm_scale_bias);
  int in = cfg.decoder_prenet.back() + cfg.model_dim();
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    lstm_.emplace_back(ps, "decoder.lstm" + std::to_string(l), in, cfg.decoder_lstm, init);
    in = cfg.decoder_lstm;
  }
  mel_proj_ = Linear(ps, "decoder.mel_proj", cfg.decoder_lstm, cfg.n_mels, init);
  stop_proj_ = Linear(ps, "decoder.stop_proj", cfg.decoder_lstm, 1, init);

  int ch = cfg.n_mels;
  for (int l = 0; l < cfg.postnet_layers; ++l) {
    const bool last = l + 1 == cfg.postnet_layers;
    const int out = last ? cfg.n_mels : cfg.postnet_channels;
    postnet_.emplace_back(ps, "postnet.conv" + std::to_string(l), ch, out, cfg.postnet_kernel,
                          last ? Activation::kNone : Activation::kRelu, init);
    ch = out;
  }
}

ag::Var Backbone::encode_text(ag::Graph& g, std::span<const int> ids, const RunMode& mode) const {
  if (ids.empty()) throw ValidationError("encode_text: empty phoneme sequence");
  ag::Var e = ag::embedding(g.param(*embedding_), ids);
  return cbhg_.forward(g, encoder_prenet_.forward(g, e, mode));
}

Backbone::DecoderState Backbone::initial_state(ag::Graph& g) const {
  DecoderState st;
  for (const auto& l : lstm_) st.lstm.push_back(l.zero_state(g));
  st.means = attention_.initial_means(g);
  st.s = g.constant(Mat::Zero(1, cfg_.decoder_lstm));
  return st;
}

Backbone::StepOut Backbone::step(ag::Graph& g, DecoderState& st, const ag::Var& prenet_row,
                                 const ag::Var& memory) const {
  GmmStep a = attention_.step(g, st.s, st.means, memory.rows());
  ag::Var context = ag::matmul(a.alignment, memory);
  std::vector<ag::Var> in{prenet_row, context};
  ag::Var x = ag::concat_cols(in);
  for (std::size_t l = 0; l < lstm_.size(); ++l) {
    st.lstm[l] = lstm_[l].step(g, x, st.lstm[l]);
    x = st.lstm[l].h;
  }
  st.s = x;
  st.means = a.means;
  return {x, a.means, a.alignment.value(), a.mixture_weights.value()};
}

ag::Var Backbone::postnet(ag::Graph& g, const ag::Var& mel, bool training) const {
  ag::Var h = mel;
  for (const auto& c : postnet_) h = c.forward(g, h, training);
  return ag::add(mel, h);
}

BackboneOutput Backbone::forward_teacher_forced(ag::Graph& g, const ag::Var& memory, const Mat& target,
                                                const RunMode& mode) const {
  if (memory.rows() == 0) throw ShapeError("teacher forcing: empty memory");
  if (memory.cols() != cfg_.model_dim()) throw ShapeError("teacher forcing: memory width mismatch");
  if (target.rows() == 0 || target.cols() != cfg_.n_mels)
    throw ShapeError("teacher forcing: target must be T x n_mels with T >= 1");
  const Eigen::Index T = target.rows();
  Mat prev = Mat::Zero(T, cfg_.n_mels);
  if (T > 1) prev.bottomRows(T - 1) = target.topRows(T - 1);
  ag::Var pre = decoder_prenet_.forward(g, g.constant(std::move(prev)), mode);

  BackboneOutput out;
  out.alignments.resize(T, memory.rows());
  out.gmm_means.resize(T, cfg_.gmm_mixtures);
  out.gmm_weights.resize(T, cfg_.gmm_mixtures);
  DecoderState st = initial_state(g);
  std::vector<ag::Var> states;
  states.reserve(static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) {
    StepOut so = step(g, st, ag::slice_rows(pre, t, 1), memory);
    states.push_back(so.s);
    out.alignments.row(t) = so.alignment;
    out.gmm_means.row(t) = so.means.value();
    out.gmm_weights.row(t) = so.weights;
  }
  ag::Var s = ag::concat_rows(states);
  out.mel_before = mel_proj_.forward(g, s);
  out.stop_logits = stop_proj_.forward(g, s);
  out.mel_after = postnet(g, out.mel_before, mode.training);
  return out;
}

BackboneOutput Backbone::decode_autoregressive(ag::Graph& g, const ag::Var& memory,
                                               const DecodeLimits& limits, const RunMode& mode) const {
  if (memory.rows() == 0) throw ShapeError("decode: empty memory");
  if (memory.cols() != cfg_.model_dim()) throw ShapeError("decode: memory width mismatch");
  if (limits.max_frames < 1) throw ValidationError("decode: max_frames must be >= 1");
  DecoderState st = initial_state(g);
  ag::Var prev = g.constant(Mat::Zero(1, cfg_.n_mels));
  std::vector<ag::Var> frames, stops;
  std::vector<Mat> align, means, weights;
  BackboneOutput out;
  out.truncated = true;
  for (int t = 0; t < limits.max_frames; ++t) {
    StepOut so = step(g, st, decoder_prenet_.forward(g, prev, mode), memory);
    ag::Var frame = mel_proj_.forward(g, so.s);
    ag::Var stop = stop_proj_.forward(g, so.s);
    frames.push_back(frame);
    stops.push_back(stop);
    align.push_back(so.alignment);
    means.push_back(so.means.value());
    weights.push_back(so.weights);
    prev = frame;
    const double p = 1.0 / (1.0 + std::exp(-stop.value()(0, 0)));
    if (t + 1 >= limits.min_frames && p > limits.stop_threshold) {
      out.truncated = false;
      break;
    }
  }
  const auto T = static_cast<Eigen::Index>(frames.size());
  out.alignments.resize(T, memory.rows());
  out.gmm_means.resize(T, cfg_.gmm_mixtures);
  out.gmm_weights.resize(T, cfg_.gmm_mixtures);
  for (Eigen::Index t = 0; t < T; ++t) {
    out.alignments.row(t) = align[t];
    out.gmm_means.row(t) = means[t];
    out.gmm_weights.row(t) = weights[t];
  }
  out.mel_before = ag::concat_rows(frames);
  out.stop_logits = ag::concat_rows(stops);
  out.mel_after = postnet(g, out.mel_before, false);
  return out;
}

}  // namespace paratts
