#pragma once

// Neural building blocks on top of the autodiff graph: dense and
// convolutional layers, normalisation, highway, recurrent cells, CBHG,
// multi-head attention and Gaussian-mixture monotonic attention.
//
// Every layer registers its tensors in a ParamSet under a dotted prefix at
// construction time and builds graph nodes in forward().

#include <string>
#include <vector>

#include "paratts/autograd.hpp"

namespace paratts {

// Dropout randomness and train/eval switch for one forward pass.
struct RunMode {
  bool training = false;
  Rng* rng = nullptr;  // required whenever a dropout layer is active
};

// Glorot-uniform matrix.
Mat glorot(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ag::ParamSet& ps, const std::string& name, int in, int out, Rng& rng, bool bias = true);

  ag::Var forward(ag::Graph& g, const ag::Var& x) const;
  int in() const { return in_; }
  int out() const { return out_; }
  ag::Parameter& weight() const { return *w_; }
  ag::Parameter* bias() const { return b_; }

 private:
  ag::Parameter* w_ = nullptr;
  ag::Parameter* b_ = nullptr;
  int in_ = 0;
  int out_ = 0;
};

// FC-ReLU-Dropout stack. With always_dropout the dropout stays on in eval
// mode (decoder pre-net).
class Prenet {
 public:
  Prenet() = default;
  Prenet(ag::ParamSet& ps, const std::string& name, int in, const std::vector<int>& widths,
         double dropout, bool always_dropout, Rng& rng);

  ag::Var forward(ag::Graph& g, const ag::Var& x, const RunMode& mode) const;
  int out() const { return layers_.empty() ? 0 : layers_.back().out(); }

 private:
  std::vector<Linear> layers_;
  double dropout_ = 0.0;
  bool always_dropout_ = false;
};

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ag::ParamSet& ps, const std::string& name, int in, int out, int kernel, Rng& rng,
         bool bias = true);

  ag::Var forward(ag::Graph& g, const ag::Var& x) const;
  int out() const { return out_; }

 private:
  ag::Parameter* w_ = nullptr;
  ag::Parameter* b_ = nullptr;
  int kernel_ = 1;
  int out_ = 0;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ag::ParamSet& ps, const std::string& name, int channels);

  ag::Var forward(ag::Graph& g, const ag::Var& x, bool training) const;

 private:
  ag::Parameter* gamma_ = nullptr;
  ag::Parameter* beta_ = nullptr;
  ag::Parameter* mean_ = nullptr;
  ag::Parameter* var_ = nullptr;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ag::ParamSet& ps, const std::string& name, int channels);

  ag::Var forward(ag::Graph& g, const ag::Var& x) const;

 private:
  ag::Parameter* gamma_ = nullptr;
  ag::Parameter* beta_ = nullptr;
};

enum class Activation { kNone, kRelu, kTanh };
ag::Var activate(const ag::Var& x, Activation a);

// Convolution (no bias) -> batch norm -> activation.
class ConvBnAct {
 public:
  ConvBnAct() = default;
  ConvBnAct(ag::ParamSet& ps, const std::string& name, int in, int out, int kernel, Activation act,
            Rng& rng);

  ag::Var forward(ag::Graph& g, const ag::Var& x, bool training) const;

 private:
  Conv1d conv_;
  BatchNorm bn_;
  Activation act_ = Activation::kNone;
};

// y = relu(x W_h + b_h) * t + x * (1 - t), t = sigmoid(x W_t + b_t).
class Highway {
 public:
  Highway() = default;
  Highway(ag::ParamSet& ps, const std::string& name, int dim, Rng& rng);

  ag::Var forward(ag::Graph& g, const ag::Var& x) const;

 private:
  Linear h_;
  Linear t_;
};

// Unidirectional GRU over the rows of x, zero initial state; returns every
// step's hidden state (T x hidden).
class Gru {
 public:
  Gru() = default;
  Gru(ag::ParamSet& ps, const std::string& name, int in, int hidden, Rng& rng);

  ag::Var forward(ag::Graph& g, const ag::Var& x) const;
  int hidden() const { return hidden_; }

 private:
  Linear x_;
  Linear h_;
  int hidden_ = 0;
};

// Forward and backward GRUs concatenated per step (T x 2*hidden).
class BiGru {
 public:
  BiGru() = default;
  BiGru(ag::ParamSet& ps, const std::string& name, int in, int hidden, Rng& rng);

  ag::Var forward(ag::Graph& g, const ag::Var& x) const;

 private:
  Gru fwd_;
  Gru bwd_;
};

struct LstmState {
  ag::Var h;
  ag::Var c;
};

class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ag::ParamSet& ps, const std::string& name, int in, int hidden, Rng& rng);

  LstmState zero_state(ag::Graph& g) const;
  LstmState step(ag::Graph& g, const ag::Var& x, const LstmState& s) const;
  int hidden() const { return hidden_; }

 private:
  Linear gates_;
  int hidden_ = 0;
};

struct CbhgConfig {
  int in_dim = 512;
  int bank_k = 16;
  int bank_channels = 256;
  int proj_channels = 256;  // both conv projections; also the residual width
  int highway_layers = 4;
  int highway_dim = 128;
  int gru_dim = 128;  // per direction

  int out_dim() const { return 2 * gru_dim; }
};

// Conv bank (widths 1..K, ReLU) -> max-pool (width 2, stride 1) -> conv3 ReLU
// -> conv3 linear -> residual -> highway stack -> bidirectional GRU.
class Cbhg {
 public:
  Cbhg() = default;
  Cbhg(ag::ParamSet& ps, const std::string& name, const CbhgConfig& cfg, Rng& rng);

  ag::Var forward(ag::Graph& g, const ag::Var& x) const;
  const CbhgConfig& config() const { return cfg_; }

 private:
  CbhgConfig cfg_;
  std::vector<Conv1d> bank_;
  Conv1d proj1_;
  Conv1d proj2_;
  Linear residual_;  // only when in_dim != proj_channels
  Linear pre_highway_;  // only when proj_channels != highway_dim
  std::vector<Highway> highways_;
  BiGru gru_;
};

struct AttentionOutput {
  ag::Var context;           // n x d_model
  std::vector<Mat> weights;  // one n x m matrix per head
};

// Scaled dot-product attention over `heads` subspaces with bias-free
// projections W_Q, W_K, W_V and W_O.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ag::ParamSet& ps, const std::string& name, int d_model, int heads, Rng& rng);

  AttentionOutput forward(ag::Graph& g, const ag::Var& q, const ag::Var& k, const ag::Var& v) const;
  int heads() const { return heads_; }
  int d_model() const { return d_model_; }
  ag::Parameter& wq() const { return wq_.weight(); }
  ag::Parameter& wk() const { return wk_.weight(); }
  ag::Parameter& wv() const { return wv_.weight(); }
  ag::Parameter& wo() const { return wo_.weight(); }

 private:
  Linear wq_, wk_, wv_, wo_;
  int d_model_ = 0;
  int heads_ = 1;
};

// Discretised mixture alignment on plain matrices (1 x K rows):
// a[j] = sum_i w_i * (Phi((j + 0.5 - mu_i) / s_i) - Phi((j - 0.5 - mu_i) / s_i)).
Mat gmm_alignment_weights(const Mat& means, const Mat& scales, const Mat& weights, Eigen::Index m);

struct GmmStep {
  ag::Var alignment;  // 1 x m
  ag::Var means;      // 1 x K, after the update
  ag::Var deltas;
  ag::Var scales;
  ag::Var mixture_weights;
};

// Gaussian-mixture monotonic attention: a two-layer head maps the query to
// 3K raw values; deltas and scales pass through softplus after a fixed
// offset, mixture weights through softmax, and means only move forward.
class GmmAttention {
 public:
  GmmAttention() = default;
  GmmAttention(ag::ParamSet& ps, const std::string& name, int query_dim, int hidden, int mixtures,
               Rng& rng, double delta_bias, double scale_bias);

  ag::Var initial_means(ag::Graph& g) const;
  GmmStep step(ag::Graph& g, const ag::Var& query, const ag::Var& means, Eigen::Index m) const;
  int mixtures() const { return mixtures_; }

 private:
  Linear hidden_;
  Linear out_;
  int mixtures_ = 8;
  double delta_bias_ = 0.0;
  double scale_bias_ = 0.0;
};

// softplus^-1(1) = log(e - 1)
double inverse_softplus(double y);

}  // namespace paratts
