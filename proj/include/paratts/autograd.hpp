#pragma once

// Tape-based reverse-mode automatic differentiation over dense row-major
// double matrices. A Graph is built fresh for every forward pass; Parameters
// live in a ParamSet and collect gradients when Graph::backward runs.

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace paratts {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

namespace ag {

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  // Buffers (batch-norm running statistics) are stored and checkpointed
  // alongside weights but never receive gradients or optimizer updates.
  bool trainable = true;
};

// Owns every tensor of a model in insertion order. Pointers returned by add()
// stay valid for the lifetime of the set.
class ParamSet {
 public:
  Parameter& add(std::string name, Mat init, bool trainable = true);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  const Parameter* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> trainable();

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return graph_ != nullptr; }
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Graph& graph() const { return *graph_; }
  int id() const { return id_; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, const Mat& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Mat value);
  // A leaf that records its gradient (used to differentiate w.r.t. inputs).
  Var input(Mat value);
  // The same Parameter always maps to the same node within one graph.
  Var param(Parameter& p);

  Var op(Mat value, std::initializer_list<Var> parents, Backward backward);
  Var op(Mat value, std::span<const Var> parents, Backward backward);

  bool needs_grad(const Var& v) const { return nodes_[v.id_].needs_grad; }

  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& delta) {
    Node& n = nodes_[v.id_];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }
  // Zero-initialised gradient buffer for block-wise accumulation.
  Mat& grad_buffer(const Var& v);

  // Seeds d(root)/d(root) = 1 and propagates; parameter nodes add their
  // gradient into Parameter::grad.
  void backward(const Var& root);

  const Mat& value(int id) const { return nodes_[id].value; }
  // Gradient of a node after backward(); empty if nothing flowed into it.
  const Mat& grad(const Var& v) const { return nodes_[v.id_].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

// ---- elementwise and linear algebra ---------------------------------------
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // Hadamard
Var scale(const Var& a, double s);
Var add_row(const Var& a, const Var& row);        // broadcast 1xC over rows
Var broadcast_rows(const Var& row, Eigen::Index n);
Var relu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var softmax_rows(const Var& a);
Var detach(const Var& a);

// ---- shape -----------------------------------------------------------------
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var reverse_rows(const Var& a);
Var embedding(const Var& table, std::span<const int> ids);

// ---- reductions and losses (all return 1x1) --------------------------------
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var mse(const Var& pred, const Mat& target);
Var l1(const Var& pred, const Mat& target);
Var bce_with_logits(const Var& logits, const Mat& targets);

// ---- sequence layers -------------------------------------------------------
// 1-D convolution over rows (time) with 'same' padding. weight is
// (kernel * in_channels) x out_channels with tap-major rows; bias may be invalid.
Var conv1d(const Var& x, const Var& weight, const Var& bias, int kernel);
// Max-pool of width 2 and stride 1, padded on the right so length is kept.
Var maxpool2_same(const Var& x);

struct BatchNormBuffers {
  Parameter* running_mean = nullptr;
  Parameter* running_var = nullptr;
  double momentum = 0.1;
  double eps = 1e-5;
};
// Normalises each column over rows. Training mode uses the batch statistics
// and updates the running buffers; inference uses the buffers.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, const BatchNormBuffers& buffers,
               bool training);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// Inverted dropout; p == 0 returns x unchanged.
Var dropout(const Var& x, double p, Rng& rng);

// Fused LSTM cell update. gates holds the pre-activations (i, f, g, o) as
// R x 4H blocks; returns [h | c] as R x 2H.
Var lstm_cell(const Var& gates, const Var& c_prev);
// Fused GRU update in the form h = (1 - z) * n + z * h_prev with
// n = tanh(x_n + r * h_n). x_gates and h_gates are R x 3H blocks (r, z, n)
// that already include their biases.
Var gru_cell(const Var& x_gates, const Var& h_gates, const Var& h_prev);

// Discretised Gaussian-mixture alignment over m memory positions:
// out[j] = sum_i w_i * (Phi((j + 0.5 - mu_i) / s_i) - Phi((j - 0.5 - mu_i) / s_i)).
// means, scales and weights are 1xK; the result is 1xm.
Var gmm_alignment(const Var& means, const Var& scales, const Var& weights, Eigen::Index m);

}  // namespace ag
}  // namespace paratts
