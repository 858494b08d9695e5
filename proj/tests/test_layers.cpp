#include <cmath>
#include <numbers>

#include "doctest.h"
#include "gradcheck.hpp"
#include "paratts/error.hpp"
#include "paratts/layers.hpp"

using namespace paratts;
using paratts::testing::grad_check;
using paratts::testing::random_mat;

namespace {

CbhgConfig tiny_cbhg(int in_dim) {
  CbhgConfig c;
  c.in_dim = in_dim;
  c.bank_k = 3;
  c.bank_channels = 3;
  c.proj_channels = 4;
  c.highway_layers = 2;
  c.highway_dim = 3;
  c.gru_dim = 2;
  return c;
}

double phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

TEST_CASE("prenet") {
  Rng init(1);
  ag::ParamSet ps;
  Prenet enc(ps, "enc", 6, {512, 512}, 0.1, false, init);
  Prenet dec(ps, "dec", 6, {16, 16}, 0.2, true, init);
  Rng drop(2);

  SUBCASE("zero input with zero biases gives zero output") {
    ag::Graph g;
    auto y = enc.forward(g, g.constant(Mat::Zero(5, 6)), RunMode{false, &drop});
    CHECK(y.value().cwiseAbs().maxCoeff() == 0.0);
    CHECK(y.rows() == 5);
    CHECK(y.cols() == 512);
  }
  SUBCASE("eval-mode encoder prenet is deterministic; decoder prenet keeps dropout") {
    Mat x = random_mat(4, 6, drop);
    ag::Graph g;
    auto a = enc.forward(g, g.constant(x), RunMode{false, &drop}).value();
    auto b = enc.forward(g, g.constant(x), RunMode{false, &drop}).value();
    CHECK(a == b);
    auto c = dec.forward(g, g.constant(x), RunMode{false, &drop}).value();
    auto d = dec.forward(g, g.constant(x), RunMode{false, &drop}).value();
    CHECK(c != d);
  }
  SUBCASE("rejects the wrong input width") {
    ag::Graph g;
    CHECK_THROWS_AS(enc.forward(g, g.constant(Mat::Zero(2, 5)), RunMode{}), ShapeError);
  }
}

TEST_CASE("CBHG shapes with the full-size configuration") {
  Rng init(3);
  ag::ParamSet ps;
  CbhgConfig cfg;  // K=16 x 256, projections 256, highway 4 x 128, BiGRU 128
  Cbhg cbhg(ps, "cbhg", cfg, init);
  ag::Graph g;
  auto y = cbhg.forward(g, g.constant(random_mat(17, 512, init)));
  CHECK(y.rows() == 17);
  CHECK(y.cols() == 256);
  auto one = cbhg.forward(g, g.constant(random_mat(1, 512, init)));
  CHECK(one.rows() == 1);
  CHECK(one.cols() == 256);
  CHECK(one.value().allFinite());
  CHECK_THROWS_AS(cbhg.forward(g, g.constant(Mat::Zero(3, 100))), ShapeError);
}

TEST_CASE("CBHG gradients match finite differences") {
  Rng init(4);
  for (int in_dim : {4, 5}) {
    ag::ParamSet ps;
    Cbhg cbhg(ps, "cbhg", tiny_cbhg(in_dim), init);
    SUBCASE("all-zero input is finite") {
      ag::Graph g;
      CHECK(cbhg.forward(g, g.constant(Mat::Zero(6, in_dim))).value().allFinite());
    }
    auto& x = ps.add("x", random_mat(6, in_dim, init));
    Mat target = random_mat(6, 4, init);
    auto res = grad_check(ps, [&](ag::Graph& g) { return ag::mse(cbhg.forward(g, g.param(x)), target); });
    INFO(res.worst_param);
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("recurrent and highway layers match finite differences") {
  Rng init(5);
  ag::ParamSet ps;
  Highway hw(ps, "hw", 3, init);
  Gru gru(ps, "gru", 3, 4, init);
  LstmCell lstm(ps, "lstm", 4, 3, init);
  auto& x = ps.add("x", random_mat(5, 3, init));
  auto res = grad_check(ps, [&](ag::Graph& g) {
    ag::Var h = gru.forward(g, hw.forward(g, g.param(x)));
    LstmState s = lstm.zero_state(g);
    for (Eigen::Index t = 0; t < h.rows(); ++t) s = lstm.step(g, ag::slice_rows(h, t, 1), s);
    return ag::sum_all(ag::mul(s.h, s.c));
  });
  INFO(res.worst_param);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("multi-head attention") {
  Rng init(6);
  ag::ParamSet ps;
  MultiHeadAttention mha(ps, "mha", 256, 4, init);

  SUBCASE("a single key gives weight exactly 1 and the projected value row") {
    ag::Graph g;
    Mat v = random_mat(1, 256, init);
    auto out = mha.forward(g, g.constant(random_mat(3, 256, init)), g.constant(random_mat(1, 256, init)),
                           g.constant(v));
    for (const auto& w : out.weights) CHECK((w.array() == 1.0).all());
    Mat expect = v * mha.wv().value * mha.wo().value;
    for (Eigen::Index i = 0; i < 3; ++i)
      CHECK((out.context.value().row(i) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("identical keys give uniform weights") {
    ag::Graph g;
    Mat k = random_mat(1, 256, init).replicate(5, 1);
    auto out = mha.forward(g, g.constant(random_mat(3, 256, init)), g.constant(k),
                           g.constant(random_mat(5, 256, init)));
    for (const auto& w : out.weights) CHECK((w.array() - 0.2).abs().maxCoeff() < 1e-6);
  }
  SUBCASE("matches a direct loop recomputation") {
    Mat q = random_mat(3, 256, init), k = random_mat(5, 256, init), v = random_mat(5, 256, init);
    ag::Graph g;
    auto out = mha.forward(g, g.constant(q), g.constant(k), g.constant(v));
    const Mat& WQ = mha.wq().value;
    const Mat& WK = mha.wk().value;
    const Mat& WV = mha.wv().value;
    const Mat& WO = mha.wo().value;
    const int dk = 64;
    Mat concat = Mat::Zero(3, 256);
    for (int h = 0; h < 4; ++h) {
      for (int i = 0; i < 3; ++i) {
        double logits[5];
        double mx = -1e300;
        for (int j = 0; j < 5; ++j) {
          double dot = 0.0;
          for (int c = h * dk; c < (h + 1) * dk; ++c) {
            double qi = 0.0, kj = 0.0;
            for (int r = 0; r < 256; ++r) {
              qi += q(i, r) * WQ(r, c);
              kj += k(j, r) * WK(r, c);
            }
            dot += qi * kj;
          }
          logits[j] = dot / std::sqrt(64.0);
          mx = std::max(mx, logits[j]);
        }
        double z = 0.0;
        for (double& l : logits) z += (l = std::exp(l - mx));
        for (int j = 0; j < 5; ++j) {
          CHECK(std::abs(logits[j] / z - out.weights[h](i, j)) < 1e-9);
          for (int c = h * dk; c < (h + 1) * dk; ++c) {
            double vj = 0.0;
            for (int r = 0; r < 256; ++r) vj += v(j, r) * WV(r, c);
            concat(i, c) += logits[j] / z * vj;
          }
        }
      }
    }
    Mat expect = Mat::Zero(3, 256);
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 256; ++c)
        for (int r = 0; r < 256; ++r) expect(i, c) += concat(i, r) * WO(r, c);
    CHECK((out.context.value() - expect).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("weight rows lie on the simplex") {
    for (int trial = 0; trial < 20; ++trial) {
      ag::Graph g;
      const int n = 1 + trial % 4, m = 1 + trial % 7;
      auto out = mha.forward(g, g.constant(random_mat(n, 256, init, 3.0)),
                             g.constant(random_mat(m, 256, init, 3.0)), g.constant(random_mat(m, 256, init)));
      for (const auto& w : out.weights) {
        CHECK(w.minCoeff() >= 0.0);
        CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-5);
      }
    }
  }
  SUBCASE("empty inputs and bad head counts are rejected") {
    ag::Graph g;
    CHECK_THROWS_AS(mha.forward(g, g.constant(Mat(0, 256)), g.constant(Mat::Zero(2, 256)),
                                g.constant(Mat::Zero(2, 256))),
                    ShapeError);
    ag::ParamSet other;
    CHECK_THROWS_AS(MultiHeadAttention(other, "bad", 10, 4, init), ValidationError);
  }
  SUBCASE("gradients match finite differences") {
    ag::ParamSet small;
    MultiHeadAttention m2(small, "m2", 8, 2, init);
    auto& q = small.add("q", random_mat(3, 8, init));
    auto& kv = small.add("kv", random_mat(4, 8, init));
    auto res = grad_check(small, [&](ag::Graph& g) {
      return ag::sum_all(ag::tanh(m2.forward(g, g.param(q), g.param(kv), g.param(kv)).context));
    });
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("GMM attention") {
  SUBCASE("single mixture matches the closed-form CDF difference") {
    Mat mu(1, 1), s(1, 1), w(1, 1);
    mu << 2.0;
    s << 0.5;
    w << 1.0;
    Mat a = gmm_alignment_weights(mu, s, w, 5);
    REQUIRE(a.cols() == 5);
    for (int j = 0; j < 5; ++j)
      CHECK(std::abs(a(0, j) - (phi((j + 0.5 - 2.0) / 0.5) - phi((j - 0.5 - 2.0) / 0.5))) < 1e-9);
  }

  Rng init(8);
  ag::ParamSet ps;
  const double b = inverse_softplus(1.0);
  CHECK(std::log1p(std::exp(b)) == doctest::Approx(1.0).epsilon(1e-14));
  GmmAttention att(ps, "gmm", 6, 5, 8, init, b, b);

  SUBCASE("forced zero deltas leave the means unchanged") {
    ag::ParamSet zps;
    GmmAttention frozen(zps, "z", 6, 5, 8, init, -1000.0, b);
    ag::Graph g;
    Mat start = random_mat(1, 8, init).cwiseAbs();
    auto st = frozen.step(g, g.constant(random_mat(1, 6, init)), g.constant(start), 9);
    CHECK(st.deltas.value().maxCoeff() == 0.0);
    CHECK(st.means.value() == start);
  }
  SUBCASE("means never decrease; weights are a sub-simplex") {
    ag::Graph g;
    ag::Var means = att.initial_means(g);
    for (int t = 0; t < 200; ++t) {
      auto st = att.step(g, g.constant(random_mat(1, 6, init, 4.0)), means, 11);
      CHECK(((st.means.value() - means.value()).array() >= 0.0).all());
      CHECK(st.scales.value().minCoeff() > 0.0);
      CHECK(st.alignment.value().minCoeff() >= 0.0);
      CHECK(st.alignment.value().sum() <= 1.0 + 1e-6);
      means = st.means;
    }
  }
  SUBCASE("an empty memory is rejected") {
    ag::Graph g;
    CHECK_THROWS_AS(att.step(g, g.constant(Mat::Zero(1, 6)), att.initial_means(g), 0), ShapeError);
  }
  SUBCASE("gradients through two steps match finite differences") {
    auto& q1 = ps.add("q1", random_mat(1, 6, init));
    auto& q2 = ps.add("q2", random_mat(1, 6, init));
    Mat target = random_mat(1, 7, init).cwiseAbs() / 7.0;
    auto res = grad_check(ps, [&](ag::Graph& g) {
      auto s1 = att.step(g, g.param(q1), att.initial_means(g), 7);
      auto s2 = att.step(g, g.param(q2), s1.means, 7);
      return ag::mse(ag::add(s1.alignment, s2.alignment), target);
    });
    INFO(res.worst_param);
    CHECK(res.max_rel_error < 1e-4);
  }
}
