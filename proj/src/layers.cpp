#include "paratts/layers.hpp"

#include <cmath>
#include <numbers>

#include "paratts/error.hpp"

namespace paratts {

Mat glorot(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

double inverse_softplus(double y) { return std::log(std::expm1(y)); }

ag::Var activate(const ag::Var& x, Activation a) {
  switch (a) {
    case Activation::kRelu: return ag::relu(x);
    case Activation::kTanh: return ag::tanh(x);
    case Activation::kNone: break;
  }
  return x;
}

// ---------------------------------------------------------------------------

Linear::Linear(ag::ParamSet& ps, const std::string& name, int in, int out, Rng& rng, bool bias)
    : in_(in), out_(out) {
  w_ = &ps.add(name + ".w", glorot(in, out, in, out, rng));
  if (bias) b_ = &ps.add(name + ".b", Mat::Zero(1, out));
}

ag::Var Linear::forward(ag::Graph& g, const ag::Var& x) const {
  if (x.cols() != in_)
    throw ShapeError("linear " + w_->name + ": expected " + std::to_string(in_) + " input columns, got " +
                     std::to_string(x.cols()));
  ag::Var y = ag::matmul(x, g.param(*w_));
  return b_ ? ag::add_row(y, g.param(*b_)) : y;
}

Prenet::Prenet(ag::ParamSet& ps, const std::string& name, int in, const std::vector<int>& widths,
               double dropout, bool always_dropout, Rng& rng)
    : dropout_(dropout), always_dropout_(always_dropout) {
  for (std::size_t i = 0; i < widths.size(); ++i) {
    layers_.emplace_back(ps, name + ".fc" + std::to_string(i), in, widths[i], rng);
    in = widths[i];
  }
}

ag::Var Prenet::forward(ag::Graph& g, const ag::Var& x, const RunMode& mode) const {
  const bool drop = dropout_ > 0.0 && (mode.training || always_dropout_);
  if (drop && !mode.rng) throw Error("prenet: dropout is active but no rng was supplied");
  ag::Var h = x;
  for (const auto& l : layers_) {
    h = ag::relu(l.forward(g, h));
    if (drop) h = ag::dropout(h, dropout_, *mode.rng);
  }
  return h;
}

Conv1d::Conv1d(ag::ParamSet& ps, const std::string& name, int in, int out, int kernel, Rng& rng,
               bool bias)
    : kernel_(kernel), out_(out) {
  w_ = &ps.add(name + ".w", glorot(static_cast<Eigen::Index>(kernel) * in, out, kernel * in, out, rng));
  if (bias) b_ = &ps.add(name + ".b", Mat::Zero(1, out));
}

ag::Var Conv1d::forward(ag::Graph& g, const ag::Var& x) const {
  return ag::conv1d(x, g.param(*w_), b_ ? g.param(*b_) : ag::Var(), kernel_);
}

BatchNorm::BatchNorm(ag::ParamSet& ps, const std::string& name, int channels) {
  gamma_ = &ps.add(name + ".gamma", Mat::Ones(1, channels));
  beta_ = &ps.add(name + ".beta", Mat::Zero(1, channels));
  mean_ = &ps.add(name + ".running_mean", Mat::Zero(1, channels), false);
  var_ = &ps.add(name + ".running_var", Mat::Ones(1, channels), false);
}

ag::Var BatchNorm::forward(ag::Graph& g, const ag::Var& x, bool training) const {
  return ag::batch_norm(x, g.param(*gamma_), g.param(*beta_), ag::BatchNormBuffers{mean_, var_},
                        training);
}

LayerNorm::LayerNorm(ag::ParamSet& ps, const std::string& name, int channels) {
  gamma_ = &ps.add(name + ".gamma", Mat::Ones(1, channels));
  beta_ = &ps.add(name + ".beta", Mat::Zero(1, channels));
}

ag::Var LayerNorm::forward(ag::Graph& g, const ag::Var& x) const {
  return ag::layer_norm(x, g.param(*gamma_), g.param(*beta_));
}

ConvBnAct::ConvBnAct(ag::ParamSet& ps, const std::string& name, int in, int out, int kernel,
                     Activation act, Rng& rng)
    : conv_(ps, name + ".conv", in, out, kernel, rng, false), bn_(ps, name + ".bn", out), act_(act) {}

ag::Var ConvBnAct::forward(ag::Graph& g, const ag::Var& x, bool training) const {
  return activate(bn_.forward(g, conv_.forward(g, x), training), act_);
}

Highway::Highway(ag::ParamSet& ps, const std::string& name, int dim, Rng& rng)
    : h_(ps, name + ".h", dim, dim, rng), t_(ps, name + ".t", dim, dim, rng) {
  // Start close to the carry path.
  t_.bias()->value.setConstant(-1.0);
}

ag::Var Highway::forward(ag::Graph& g, const ag::Var& x) const {
  ag::Var h = ag::relu(h_.forward(g, x));
  ag::Var t = ag::sigmoid(t_.forward(g, x));
  // h * t + x * (1 - t) == x + t * (h - x)
  return ag::add(x, ag::mul(t, ag::sub(h, x)));
}

Gru::Gru(ag::ParamSet& ps, const std::string& name, int in, int hidden, Rng& rng)
    : x_(ps, name + ".x", in, 3 * hidden, rng), h_(ps, name + ".h", hidden, 3 * hidden, rng),
      hidden_(hidden) {}

ag::Var Gru::forward(ag::Graph& g, const ag::Var& x) const {
  const Eigen::Index T = x.rows();
  if (T == 0) throw ShapeError("gru: empty sequence");
  ag::Var xg = x_.forward(g, x);
  ag::Var h = g.constant(Mat::Zero(1, hidden_));
  std::vector<ag::Var> steps;
  steps.reserve(static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) {
    h = ag::gru_cell(ag::slice_rows(xg, t, 1), h_.forward(g, h), h);
    steps.push_back(h);
  }
  return ag::concat_rows(steps);
}

BiGru::BiGru(ag::ParamSet& ps, const std::string& name, int in, int hidden, Rng& rng)
    : fwd_(ps, name + ".fwd", in, hidden, rng), bwd_(ps, name + ".bwd", in, hidden, rng) {}

ag::Var BiGru::forward(ag::Graph& g, const ag::Var& x) const {
  std::vector<ag::Var> parts{fwd_.forward(g, x), ag::reverse_rows(bwd_.forward(g, ag::reverse_rows(x)))};
  return ag::concat_cols(parts);
}

LstmCell::LstmCell(ag::ParamSet& ps, const std::string& name, int in, int hidden, Rng& rng)
    : gates_(ps, name, in + hidden, 4 * hidden, rng), hidden_(hidden) {
  gates_.bias()->value.middleCols(hidden, hidden).setOnes();  // forget gate
}

LstmState LstmCell::zero_state(ag::Graph& g) const {
  return {g.constant(Mat::Zero(1, hidden_)), g.constant(Mat::Zero(1, hidden_))};
}

LstmState LstmCell::step(ag::Graph& g, const ag::Var& x, const LstmState& s) const {
  std::vector<ag::Var> in{x, s.h};
  ag::Var hc = ag::lstm_cell(gates_.forward(g, ag::concat_cols(in)), s.c);
  return {ag::slice_cols(hc, 0, hidden_), ag::slice_cols(hc, hidden_, hidden_)};
}

// ---------------------------------------------------------------------------

Cbhg::Cbhg(ag::ParamSet& ps, const std::string& name, const CbhgConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.bank_k < 1 || cfg.bank_channels < 1 || cfg.proj_channels < 1 || cfg.highway_dim < 1 ||
      cfg.gru_dim < 1 || cfg.in_dim < 1 || cfg.highway_layers < 0)
    throw ValidationError("cbhg " + name + ": every width must be positive");
  for (int k = 1; k <= cfg.bank_k; ++k)
    bank_.emplace_back(ps, name + ".bank" + std::to_string(k), cfg.in_dim, cfg.bank_channels, k, rng);
  proj1_ = Conv1d(ps, name + ".proj1", cfg.bank_k * cfg.bank_channels, cfg.proj_channels, 3, rng);
  proj2_ = Conv1d(ps, name + ".proj2", cfg.proj_channels, cfg.proj_channels, 3, rng);
  if (cfg.in_dim != cfg.proj_channels)
    residual_ = Linear(ps, name + ".residual", cfg.in_dim, cfg.proj_channels, rng, false);
  if (cfg.proj_channels != cfg.highway_dim)
    pre_highway_ = Linear(ps, name + ".pre_highway", cfg.proj_channels, cfg.highway_dim, rng, false);
  for (int i = 0; i < cfg.highway_layers; ++i)
    highways_.emplace_back(ps, name + ".highway" + std::to_string(i), cfg.highway_dim, rng);
  gru_ = BiGru(ps, name + ".gru", cfg.highway_dim, cfg.gru_dim, rng);
}

ag::Var Cbhg::forward(ag::Graph& g, const ag::Var& x) const {
  if (x.rows() == 0) throw ShapeError("cbhg: empty sequence");
  if (x.cols() != cfg_.in_dim)
    throw ShapeError("cbhg: expected " + std::to_string(cfg_.in_dim) + " input columns, got " +
                     std::to_string(x.cols()));
  std::vector<ag::Var> banks;
  for (const auto& c : bank_) banks.push_back(ag::relu(c.forward(g, x)));
  ag::Var h = ag::maxpool2_same(ag::concat_cols(banks));
  h = ag::relu(proj1_.forward(g, h));
  h = proj2_.forward(g, h);
  h = ag::add(h, cfg_.in_dim != cfg_.proj_channels ? residual_.forward(g, x) : x);
  if (cfg_.proj_channels != cfg_.highway_dim) h = pre_highway_.forward(g, h);
  for (const auto& hw : highways_) h = hw.forward(g, h);
  return gru_.forward(g, h);
}

// ---------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(ag::ParamSet& ps, const std::string& name, int d_model,
                                       int heads, Rng& rng)
    : wq_(ps, name + ".wq", d_model, d_model, rng, false),
      wk_(ps, name + ".wk", d_model, d_model, rng, false),
      wv_(ps, name + ".wv", d_model, d_model, rng, false),
      wo_(ps, name + ".wo", d_model, d_model, rng, false),
      d_model_(d_model),
      heads_(heads) {
  if (heads < 1 || d_model % heads != 0)
    throw ValidationError("attention " + name + ": heads must divide the model dimension");
}

AttentionOutput MultiHeadAttention::forward(ag::Graph& g, const ag::Var& q, const ag::Var& k,
                                            const ag::Var& v) const {
  if (q.rows() == 0 || k.rows() == 0) throw ShapeError("attention: empty query or key sequence");
  if (k.rows() != v.rows()) throw ShapeError("attention: keys and values differ in length");
  const int dk = d_model_ / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  ag::Var qp = wq_.forward(g, q), kp = wk_.forward(g, k), vp = wv_.forward(g, v);
  AttentionOutput out;
  std::vector<ag::Var> heads;
  for (int h = 0; h < heads_; ++h) {
    ag::Var qh = ag::slice_cols(qp, h * dk, dk);
    ag::Var kh = ag::slice_cols(kp, h * dk, dk);
    ag::Var vh = ag::slice_cols(vp, h * dk, dk);
    ag::Var a = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt));
    out.weights.push_back(a.value());
    heads.push_back(ag::matmul(a, vh));
  }
  out.context = wo_.forward(g, ag::concat_cols(heads));
  return out;
}

// ---------------------------------------------------------------------------

Mat gmm_alignment_weights(const Mat& means, const Mat& scales, const Mat& weights, Eigen::Index m) {
  ag::Graph g;
  return ag::gmm_alignment(g.constant(means), g.constant(scales), g.constant(weights), m).value();
}

GmmAttention::GmmAttention(ag::ParamSet& ps, const std::string& name, int query_dim, int hidden,
                           int mixtures, Rng& rng, double delta_bias, double scale_bias)
    : hidden_(ps, name + ".hidden", query_dim, hidden, rng),
      out_(ps, name + ".out", hidden, 3 * mixtures, rng),
      mixtures_(mixtures),
      delta_bias_(delta_bias),
      scale_bias_(scale_bias) {
  if (mixtures < 1) throw ValidationError("gmm attention: need at least one mixture");
}

ag::Var GmmAttention::initial_means(ag::Graph& g) const { return g.constant(Mat::Zero(1, mixtures_)); }

GmmStep GmmAttention::step(ag::Graph& g, const ag::Var& query, const ag::Var& means,
                           Eigen::Index m) const {
  if (m <= 0) throw ShapeError("gmm attention: empty memory");
  const int K = mixtures_;
  ag::Var raw = out_.forward(g, ag::tanh(hidden_.forward(g, query)));
  GmmStep s;
  s.deltas = ag::softplus(ag::add_row(ag::slice_cols(raw, 0, K), g.constant(Mat::Constant(1, K, delta_bias_))));
  s.scales = ag::softplus(ag::add_row(ag::slice_cols(raw, K, K), g.constant(Mat::Constant(1, K, scale_bias_))));
  s.mixture_weights = ag::softmax_rows(ag::slice_cols(raw, 2 * K, K));
  s.means = ag::add(means, s.deltas);
  s.alignment = ag::gmm_alignment(s.means, s.scales, s.mixture_weights, m);
  return s;
}

}  // namespace paratts
