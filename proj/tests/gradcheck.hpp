#pragma once

// Central finite-difference oracle shared by the unit and acceptance tests.
// It only ever evaluates the forward pass, so it stays independent of the
// backward implementations it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "paratts/autograd.hpp"

namespace paratts::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  int checked_entries = 0;
};

// `loss` builds a fresh graph and returns the scalar loss node. Every trainable
// tensor in `params` is checked on up to `max_entries_per_tensor` entries
// (evenly strided, deterministic).
// `numeric` is the function the finite differences see; it differs from
// `loss` only where the model stops gradients on purpose.
inline GradCheckResult grad_check(ag::ParamSet& params,
                                  const std::function<ag::Var(ag::Graph&)>& loss,
                                  const std::function<ag::Var(ag::Graph&)>& numeric,
                                  int max_entries_per_tensor = 24, double h = 1e-6,
                                  const std::vector<std::string>& only = {}) {
  params.zero_grad();
  {
    ag::Graph g;
    ag::Var l = loss(g);
    g.backward(l);
  }
  auto eval = [&]() {
    ag::Graph g;
    return numeric(g).value()(0, 0);
  };

  GradCheckResult result;
  for (ag::Parameter* p : params.trainable()) {
    if (!only.empty() && std::find(only.begin(), only.end(), p->name) == only.end()) continue;
    const Eigen::Index n = p->value.size();
    const Eigen::Index stride = std::max<Eigen::Index>(1, n / max_entries_per_tensor);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (Eigen::Index i = 0; i < n; i += stride) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + h;
      const double up = eval();
      x = saved - h;
      const double down = eval();
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad.data()[i];
      diff2 += (numeric - analytic) * (numeric - analytic);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
      ++result.checked_entries;
    }
    const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
    const double rel = denom < 1e-7 ? std::sqrt(diff2) : std::sqrt(diff2) / denom;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_param = p->name;
    }
  }
  return result;
}

inline GradCheckResult grad_check(ag::ParamSet& params,
                                  const std::function<ag::Var(ag::Graph&)>& loss,
                                  int max_entries_per_tensor = 24, double h = 1e-6,
                                  const std::vector<std::string>& only = {}) {
  return grad_check(params, loss, loss, max_entries_per_tensor, h, only);
}

inline Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

}  // namespace paratts::testing
