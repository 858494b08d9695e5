#include "paratts/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "paratts/error.hpp"

namespace paratts::ag {

// ---------------------------------------------------------------------------
// ParamSet

Parameter& ParamSet::add(std::string name, Mat init, bool trainable) {
  if (index_.count(name)) throw ValidationError("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Mat::Zero(init.rows(), init.cols());
  p->value = std::move(init);
  p->trainable = trainable;
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParamSet::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ValidationError("unknown parameter: " + std::string(name));
  return *params_[it->second];
}

const Parameter& ParamSet::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ValidationError("unknown parameter: " + std::string(name));
  return *params_[it->second];
}

const Parameter* ParamSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

std::vector<Parameter*> ParamSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParamSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParamSet::trainable() {
  std::vector<Parameter*> out;
  for (auto& p : params_)
    if (p->trainable) out.push_back(p.get());
  return out;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p->grad.setZero(p->value.rows(), p->value.cols());
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p->trainable) n += static_cast<std::size_t>(p->value.size());
  return n;
}

// ---------------------------------------------------------------------------
// Graph

const Mat& Var::value() const { return graph_->value(id_); }

Var Graph::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), nullptr, nullptr, false});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::input(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), nullptr, nullptr, true});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, Mat(), nullptr, p.trainable ? &p : nullptr, p.trainable});
  int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Graph::op(Mat value, std::initializer_list<Var> parents, Backward backward) {
  return op(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
            std::move(backward));
}

Var Graph::op(Mat value, std::span<const Var> parents, Backward backward) {
  if (!value.allFinite()) throw NumericError("non-finite value produced in forward pass");
  bool needs = false;
  for (const Var& p : parents) {
    if (&p.graph() != this) throw ShapeError("operands belong to different graphs");
    needs = needs || nodes_[p.id_].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), Mat(), needs ? std::move(backward) : nullptr, nullptr,
                        needs});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Mat& Graph::grad_buffer(const Var& v) {
  Node& n = nodes_[v.id_];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward() needs a scalar root");
  if (!nodes_[root.id_].needs_grad) return;
  nodes_[root.id_].grad = Mat::Ones(1, 1);
  for (int i = root.id_; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) n.param->grad += n.grad;
  }
}

// ---------------------------------------------------------------------------
// helpers

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw ShapeError(what);
}

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
}

double stable_softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise and linear algebra

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Graph& g = a.graph();
  return g.op(a.value() * b.value(), {a, b}, [a, b](Graph& g, const Mat& dy) {
    if (g.needs_grad(a)) g.accumulate(a, dy * b.value().transpose());
    if (g.needs_grad(b)) g.accumulate(b, a.value().transpose() * dy);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), "matmul_nt: column counts differ");
  Graph& g = a.graph();
  return g.op(a.value() * b.value().transpose(), {a, b}, [a, b](Graph& g, const Mat& dy) {
    if (g.needs_grad(a)) g.accumulate(a, dy * b.value());
    if (g.needs_grad(b)) g.accumulate(b, dy.transpose() * a.value());
  });
}

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  return a.graph().op(a.value() + b.value(), {a, b}, [a, b](Graph& g, const Mat& dy) {
    g.accumulate(a, dy);
    g.accumulate(b, dy);
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  return a.graph().op(a.value() - b.value(), {a, b}, [a, b](Graph& g, const Mat& dy) {
    g.accumulate(a, dy);
    g.accumulate(b, -dy);
  });
}

Var mul(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  return a.graph().op(a.value().cwiseProduct(b.value()), {a, b},
                      [a, b](Graph& g, const Mat& dy) {
                        if (g.needs_grad(a)) g.accumulate(a, dy.cwiseProduct(b.value()));
                        if (g.needs_grad(b)) g.accumulate(b, dy.cwiseProduct(a.value()));
                      });
}

Var scale(const Var& a, double s) {
  return a.graph().op(a.value() * s, {a}, [a, s](Graph& g, const Mat& dy) {
    g.accumulate(a, dy * s);
  });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: bias must be 1 x cols");
  Mat out = a.value().rowwise() + row.value().row(0);
  return a.graph().op(std::move(out), {a, row}, [a, row](Graph& g, const Mat& dy) {
    g.accumulate(a, dy);
    if (g.needs_grad(row)) g.accumulate(row, dy.colwise().sum());
  });
}

Var broadcast_rows(const Var& row, Eigen::Index n) {
  require(row.rows() == 1, "broadcast_rows: expects a single row");
  require(n >= 1, "broadcast_rows: n must be positive");
  Mat out = row.value().replicate(n, 1);
  return row.graph().op(std::move(out), {row}, [row](Graph& g, const Mat& dy) {
    g.accumulate(row, dy.colwise().sum());
  });
}

Var relu(const Var& a) {
  Mat out = a.value().cwiseMax(0.0);
  return a.graph().op(std::move(out), {a}, [a](Graph& g, const Mat& dy) {
    g.accumulate(a, (a.value().array() > 0.0).select(dy, 0.0));
  });
}

Var tanh(const Var& a) {
  Mat out = a.value().array().tanh().matrix();
  return a.graph().op(out, {a}, [a, out](Graph& g, const Mat& dy) {
    g.accumulate(a, dy.cwiseProduct((1.0 - out.array().square()).matrix()));
  });
}

Var sigmoid(const Var& a) {
  Mat out = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  return a.graph().op(out, {a}, [a, out](Graph& g, const Mat& dy) {
    g.accumulate(a, dy.cwiseProduct(out.cwiseProduct((1.0 - out.array()).matrix())));
  });
}

Var softplus(const Var& a) {
  Mat out = a.value().unaryExpr([](double x) { return stable_softplus(x); });
  return a.graph().op(std::move(out), {a}, [a](Graph& g, const Mat& dy) {
    g.accumulate(a, dy.cwiseProduct(a.value().unaryExpr([](double x) { return stable_sigmoid(x); })));
  });
}

Var softmax_rows(const Var& a) {
  Mat out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double mx = a.value().row(r).maxCoeff();
    auto e = (a.value().row(r).array() - mx).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  return a.graph().op(out, {a}, [a, out](Graph& g, const Mat& dy) {
    Mat dx(out.rows(), out.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      double dot = dy.row(r).dot(out.row(r));
      dx.row(r) = out.row(r).cwiseProduct((dy.row(r).array() - dot).matrix());
    }
    g.accumulate(a, dx);
  });
}

Var detach(const Var& a) { return a.graph().constant(a.value()); }

// ---------------------------------------------------------------------------
// shape

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Eigen::Index rows = parts[0].rows(), cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].graph().op(std::move(out), parts, [ps](Graph& g, const Mat& dy) {
    Eigen::Index c = 0;
    for (const Var& p : ps) {
      if (g.needs_grad(p)) g.accumulate(p, dy.middleCols(c, p.cols()));
      c += p.cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Eigen::Index cols = parts[0].cols(), rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, "concat_rows: column counts differ");
    rows += p.rows();
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].graph().op(std::move(out), parts, [ps](Graph& g, const Mat& dy) {
    Eigen::Index r = 0;
    for (const Var& p : ps) {
      if (g.needs_grad(p)) g.accumulate(p, dy.middleRows(r, p.rows()));
      r += p.rows();
    }
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  return a.graph().op(a.value().middleRows(start, count), {a},
                      [a, start, count](Graph& g, const Mat& dy) {
                        g.grad_buffer(a).middleRows(start, count) += dy;
                      });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  return a.graph().op(a.value().middleCols(start, count), {a},
                      [a, start, count](Graph& g, const Mat& dy) {
                        g.grad_buffer(a).middleCols(start, count) += dy;
                      });
}

Var reverse_rows(const Var& a) {
  return a.graph().op(a.value().colwise().reverse(), {a}, [a](Graph& g, const Mat& dy) {
    g.accumulate(a, dy.colwise().reverse());
  });
}

Var embedding(const Var& table, std::span<const int> ids) {
  Mat out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < table.rows(), "embedding: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return table.graph().op(std::move(out), {table}, [table, idv](Graph& g, const Mat& dy) {
    Mat& gt = g.grad_buffer(table);
    for (std::size_t i = 0; i < idv.size(); ++i) gt.row(idv[i]) += dy.row(static_cast<Eigen::Index>(i));
  });
}

// ---------------------------------------------------------------------------
// reductions and losses

Var sum_all(const Var& a) {
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return a.graph().op(std::move(out), {a}, [a](Graph& g, const Mat& dy) {
    g.accumulate(a, Mat::Constant(a.rows(), a.cols(), dy(0, 0)));
  });
}

Var mean_all(const Var& a) {
  require(a.value().size() > 0, "mean_all: empty input");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mse(const Var& pred, const Mat& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), "mse: shape mismatch");
  require(target.size() > 0, "mse: empty input");
  Mat diff = pred.value() - target;
  double n = static_cast<double>(diff.size());
  Mat out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return pred.graph().op(std::move(out), {pred}, [pred, diff, n](Graph& g, const Mat& dy) {
    g.accumulate(pred, diff * (2.0 * dy(0, 0) / n));
  });
}

Var l1(const Var& pred, const Mat& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), "l1: shape mismatch");
  require(target.size() > 0, "l1: empty input");
  Mat diff = pred.value() - target;
  double n = static_cast<double>(diff.size());
  Mat out(1, 1);
  out(0, 0) = diff.cwiseAbs().sum() / n;
  return pred.graph().op(std::move(out), {pred}, [pred, diff, n](Graph& g, const Mat& dy) {
    Mat sign = diff.unaryExpr([](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); });
    g.accumulate(pred, sign * (dy(0, 0) / n));
  });
}

Var bce_with_logits(const Var& logits, const Mat& targets) {
  require(logits.rows() == targets.rows() && logits.cols() == targets.cols(),
          "bce_with_logits: shape mismatch");
  require(targets.size() > 0, "bce_with_logits: empty input");
  const Mat& z = logits.value();
  double n = static_cast<double>(z.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      double x = z(i, j), y = targets(i, j);
      total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
  Mat out(1, 1);
  out(0, 0) = total / n;
  return logits.graph().op(std::move(out), {logits}, [logits, targets, n](Graph& g, const Mat& dy) {
    Mat p = logits.value().unaryExpr([](double x) { return stable_sigmoid(x); });
    g.accumulate(logits, (p - targets) * (dy(0, 0) / n));
  });
}

// ---------------------------------------------------------------------------
// sequence layers

Var conv1d(const Var& x, const Var& weight, const Var& bias, int kernel) {
  const Eigen::Index T = x.rows(), cin = x.cols();
  require(kernel >= 1, "conv1d: kernel must be positive");
  require(weight.rows() == kernel * cin, "conv1d: weight rows must equal kernel * in_channels");
  if (bias.valid()) require(bias.rows() == 1 && bias.cols() == weight.cols(), "conv1d: bad bias");
  const int left = (kernel - 1) / 2;

  auto cols = std::make_shared<Mat>(Mat::Zero(T, kernel * cin));
  for (Eigen::Index t = 0; t < T; ++t)
    for (int j = 0; j < kernel; ++j) {
      Eigen::Index src = t + j - left;
      if (src >= 0 && src < T) cols->block(t, j * cin, 1, cin) = x.value().row(src);
    }
  Mat out = (*cols) * weight.value();
  if (bias.valid()) out.rowwise() += bias.value().row(0);

  Graph& g = x.graph();
  auto backward = [x, weight, bias, kernel, left, cols](Graph& g, const Mat& dy) {
    const Eigen::Index T = x.rows(), cin = x.cols();
    if (g.needs_grad(weight)) g.accumulate(weight, cols->transpose() * dy);
    if (bias.valid() && g.needs_grad(bias)) g.accumulate(bias, dy.colwise().sum());
    if (g.needs_grad(x)) {
      Mat dcols = dy * weight.value().transpose();
      Mat& dx = g.grad_buffer(x);
      for (Eigen::Index t = 0; t < T; ++t)
        for (int j = 0; j < kernel; ++j) {
          Eigen::Index src = t + j - left;
          if (src >= 0 && src < T) dx.row(src) += dcols.block(t, j * cin, 1, cin);
        }
    }
  };
  if (bias.valid()) return g.op(std::move(out), {x, weight, bias}, backward);
  return g.op(std::move(out), {x, weight}, backward);
}

Var maxpool2_same(const Var& x) {
  const Eigen::Index T = x.rows();
  Mat out = x.value();
  // argmax source row for every output element
  auto src = std::make_shared<Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      x.rows(), x.cols());
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      (*src)(t, c) = t;
      if (t + 1 < T && x.value()(t + 1, c) > x.value()(t, c)) {
        out(t, c) = x.value()(t + 1, c);
        (*src)(t, c) = t + 1;
      }
    }
  return x.graph().op(std::move(out), {x}, [x, src](Graph& g, const Mat& dy) {
    Mat& dx = g.grad_buffer(x);
    for (Eigen::Index t = 0; t < dy.rows(); ++t)
      for (Eigen::Index c = 0; c < dy.cols(); ++c) dx((*src)(t, c), c) += dy(t, c);
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, const BatchNormBuffers& buffers,
               bool training) {
  const Eigen::Index T = x.rows(), C = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == C && beta.rows() == 1 && beta.cols() == C,
          "batch_norm: gamma/beta must be 1 x channels");
  require(buffers.running_mean && buffers.running_var, "batch_norm: missing running buffers");
  Graph& g = x.graph();

  if (!training) {
    Mat inv_std = (buffers.running_var->value.array() + buffers.eps).rsqrt().matrix();
    Mat xhat = (x.value().rowwise() - buffers.running_mean->value.row(0)).array().rowwise() *
               inv_std.row(0).array();
    Mat out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
              beta.value().row(0).array();
    return g.op(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std](Graph& g, const Mat& dy) {
      if (g.needs_grad(gamma)) g.accumulate(gamma, dy.cwiseProduct(xhat).colwise().sum());
      if (g.needs_grad(beta)) g.accumulate(beta, dy.colwise().sum());
      if (g.needs_grad(x))
        g.accumulate(x, (dy.array().rowwise() * (gamma.value().array() * inv_std.array()).row(0)).matrix());
    });
  }

  Mat mean = x.value().colwise().mean();
  Mat centered = x.value().rowwise() - mean.row(0);
  Mat var = centered.array().square().colwise().mean().matrix();
  Mat inv_std = (var.array() + buffers.eps).rsqrt().matrix();
  Mat xhat = centered.array().rowwise() * inv_std.row(0).array();
  Mat out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
            beta.value().row(0).array();

  const double m = buffers.momentum;
  const double unbias = T > 1 ? static_cast<double>(T) / static_cast<double>(T - 1) : 1.0;
  buffers.running_mean->value = (1.0 - m) * buffers.running_mean->value + m * mean;
  buffers.running_var->value = (1.0 - m) * buffers.running_var->value + (m * unbias) * var;

  return g.op(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std](Graph& g, const Mat& dy) {
    const double n = static_cast<double>(dy.rows());
    if (g.needs_grad(gamma)) g.accumulate(gamma, dy.cwiseProduct(xhat).colwise().sum());
    if (g.needs_grad(beta)) g.accumulate(beta, dy.colwise().sum());
    if (g.needs_grad(x)) {
      Mat dxhat = dy.array().rowwise() * gamma.value().row(0).array();
      Mat sum_d = dxhat.colwise().sum();
      Mat sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
      Mat dx = (n * dxhat.array() - (xhat.array().rowwise() * sum_dx.row(0).array()))
                   .rowwise() - sum_d.row(0).array();
      dx = dx.array().rowwise() * (inv_std.row(0).array() / n);
      g.accumulate(x, dx);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index C = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == C && beta.rows() == 1 && beta.cols() == C,
          "layer_norm: gamma/beta must be 1 x channels");
  Mat mean = x.value().rowwise().mean();
  Mat centered = x.value().colwise() - mean.col(0);
  Mat var = centered.array().square().rowwise().mean().matrix();
  Mat inv_std = (var.array() + eps).rsqrt().matrix();
  Mat xhat = centered.array().colwise() * inv_std.col(0).array();
  Mat out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
            beta.value().row(0).array();
  return x.graph().op(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std](Graph& g, const Mat& dy) {
    const double n = static_cast<double>(dy.cols());
    if (g.needs_grad(gamma)) g.accumulate(gamma, dy.cwiseProduct(xhat).colwise().sum());
    if (g.needs_grad(beta)) g.accumulate(beta, dy.colwise().sum());
    if (g.needs_grad(x)) {
      Mat dxhat = dy.array().rowwise() * gamma.value().row(0).array();
      Mat sum_d = dxhat.rowwise().sum();
      Mat sum_dx = dxhat.cwiseProduct(xhat).rowwise().sum();
      Mat dx = (n * dxhat.array() - (xhat.array().colwise() * sum_dx.col(0).array()))
                   .colwise() - sum_d.col(0).array();
      dx = dx.array().colwise() * (inv_std.col(0).array() / n);
      g.accumulate(x, dx);
    }
  });
}

Var dropout(const Var& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  require(p < 1.0, "dropout: p must be < 1");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = u(rng) >= p ? keep : 0.0;
  return x.graph().op(x.value().cwiseProduct(mask), {x}, [x, mask](Graph& g, const Mat& dy) {
    g.accumulate(x, dy.cwiseProduct(mask));
  });
}

Var lstm_cell(const Var& gates, const Var& c_prev) {
  const Eigen::Index H = c_prev.cols(), R = c_prev.rows();
  require(gates.rows() == R && gates.cols() == 4 * H, "lstm_cell: gates must be R x 4H");
  const Mat& pre = gates.value();
  auto sig = [](double x) { return stable_sigmoid(x); };
  Mat i = pre.middleCols(0, H).unaryExpr(sig);
  Mat f = pre.middleCols(H, H).unaryExpr(sig);
  Mat gg = pre.middleCols(2 * H, H).array().tanh().matrix();
  Mat o = pre.middleCols(3 * H, H).unaryExpr(sig);
  Mat c = f.cwiseProduct(c_prev.value()) + i.cwiseProduct(gg);
  Mat tc = c.array().tanh().matrix();
  Mat out(R, 2 * H);
  out.leftCols(H) = o.cwiseProduct(tc);
  out.rightCols(H) = c;
  return gates.graph().op(std::move(out), {gates, c_prev},
                          [gates, c_prev, i, f, gg, o, tc, H](Graph& g, const Mat& dy) {
    const auto dh = dy.leftCols(H).array();
    Mat dc = dy.rightCols(H) + (dh * o.array() * (1.0 - tc.array().square())).matrix();
    if (g.needs_grad(gates)) {
      Mat d(gates.rows(), 4 * H);
      d.middleCols(0, H) = (dc.array() * gg.array() * i.array() * (1.0 - i.array())).matrix();
      d.middleCols(H, H) =
          (dc.array() * c_prev.value().array() * f.array() * (1.0 - f.array())).matrix();
      d.middleCols(2 * H, H) = (dc.array() * i.array() * (1.0 - gg.array().square())).matrix();
      d.middleCols(3 * H, H) = (dh * tc.array() * o.array() * (1.0 - o.array())).matrix();
      g.accumulate(gates, d);
    }
    g.accumulate(c_prev, dc.cwiseProduct(f));
  });
}

Var gru_cell(const Var& x_gates, const Var& h_gates, const Var& h_prev) {
  const Eigen::Index H = h_prev.cols(), R = h_prev.rows();
  require(x_gates.rows() == R && x_gates.cols() == 3 * H, "gru_cell: x_gates must be R x 3H");
  require(h_gates.rows() == R && h_gates.cols() == 3 * H, "gru_cell: h_gates must be R x 3H");
  const Mat& xg = x_gates.value();
  const Mat& hg = h_gates.value();
  auto sig = [](double x) { return stable_sigmoid(x); };
  Mat r = (xg.middleCols(0, H) + hg.middleCols(0, H)).unaryExpr(sig);
  Mat z = (xg.middleCols(H, H) + hg.middleCols(H, H)).unaryExpr(sig);
  Mat hn = hg.middleCols(2 * H, H);
  Mat n = (xg.middleCols(2 * H, H) + r.cwiseProduct(hn)).array().tanh().matrix();
  Mat out = ((1.0 - z.array()) * n.array() + z.array() * h_prev.value().array()).matrix();
  return x_gates.graph().op(std::move(out), {x_gates, h_gates, h_prev},
                            [x_gates, h_gates, h_prev, r, z, n, hn, H](Graph& g, const Mat& dy) {
    const auto dh = dy.array();
    Mat dpre_n = (dh * (1.0 - z.array()) * (1.0 - n.array().square())).matrix();
    Mat dpre_z = (dh * (h_prev.value().array() - n.array()) * z.array() * (1.0 - z.array())).matrix();
    Mat dpre_r = (dpre_n.array() * hn.array() * r.array() * (1.0 - r.array())).matrix();
    if (g.needs_grad(x_gates)) {
      Mat d(dy.rows(), 3 * H);
      d << dpre_r, dpre_z, dpre_n;
      g.accumulate(x_gates, d);
    }
    if (g.needs_grad(h_gates)) {
      Mat d(dy.rows(), 3 * H);
      d << dpre_r, dpre_z, dpre_n.cwiseProduct(r);
      g.accumulate(h_gates, d);
    }
    g.accumulate(h_prev, dy.cwiseProduct(z));
  });
}

Var gmm_alignment(const Var& means, const Var& scales, const Var& weights, Eigen::Index m) {
  const Eigen::Index K = means.cols();
  require(m >= 1, "gmm_alignment: memory length must be positive");
  require(means.rows() == 1 && scales.rows() == 1 && weights.rows() == 1 && scales.cols() == K &&
              weights.cols() == K,
          "gmm_alignment: means/scales/weights must be 1 x K");
  auto cdf = [](double z) { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); };
  auto pdf = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); };

  Mat out = Mat::Zero(1, m);
  for (Eigen::Index i = 0; i < K; ++i) {
    const double mu = means.value()(0, i), s = scales.value()(0, i), w = weights.value()(0, i);
    for (Eigen::Index j = 0; j < m; ++j) {
      double hi = (static_cast<double>(j) + 0.5 - mu) / s;
      double lo = (static_cast<double>(j) - 0.5 - mu) / s;
      out(0, j) += w * (cdf(hi) - cdf(lo));
    }
  }
  return means.graph().op(std::move(out), {means, scales, weights},
                          [means, scales, weights, m, cdf, pdf](Graph& g, const Mat& dy) {
    const Eigen::Index K = means.cols();
    Mat dmu = Mat::Zero(1, K), ds = Mat::Zero(1, K), dw = Mat::Zero(1, K);
    for (Eigen::Index i = 0; i < K; ++i) {
      const double mu = means.value()(0, i), s = scales.value()(0, i), w = weights.value()(0, i);
      for (Eigen::Index j = 0; j < m; ++j) {
        double hi = (static_cast<double>(j) + 0.5 - mu) / s;
        double lo = (static_cast<double>(j) - 0.5 - mu) / s;
        double d = dy(0, j);
        dw(0, i) += d * (cdf(hi) - cdf(lo));
        dmu(0, i) += d * w * (pdf(lo) - pdf(hi)) / s;
        ds(0, i) += d * w * (pdf(lo) * lo - pdf(hi) * hi) / s;
      }
    }
    g.accumulate(means, dmu);
    g.accumulate(scales, ds);
    g.accumulate(weights, dw);
  });
}

}  // namespace paratts::ag
