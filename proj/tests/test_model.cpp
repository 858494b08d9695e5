#include <set>

#include "doctest.h"
#include "gradcheck.hpp"
#include "paratts/error.hpp"
#include "paratts/model.hpp"
#include "tiny_model.hpp"

using namespace paratts;
using paratts::testing::grad_check;
using paratts::testing::random_mat;
using paratts::testing::tiny_config;

namespace {

std::vector<int> random_ids(int n, int vocab, Rng& rng) {
  std::uniform_int_distribution<int> u(0, vocab - 1);
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int& i : ids) i = u(rng);
  return ids;
}

bool has_prefix(const ag::ParamSet& ps, const std::string& prefix) {
  for (const auto* p : ps.all())
    if (p->name.rfind(prefix, 0) == 0) return true;
  return false;
}

}  // namespace

TEST_CASE("text encoder with the full-size configuration") {
  ModelConfig cfg = ModelConfig::full();
  cfg.n_symbols = 40;
  cfg.decoder_lstm = 8;  // the decoder is not exercised here
  Rng init(1), drop(2);
  ag::ParamSet ps;
  Backbone bb(ps, cfg, init);
  Rng data(3);
  auto ids = random_ids(17, 40, data);
  ag::Graph g;
  auto h = bb.encode_text(g, ids, RunMode{false, &drop});
  CHECK(h.rows() == 17);
  CHECK(h.cols() == 256);
  auto again = bb.encode_text(g, ids, RunMode{false, &drop});
  CHECK(h.value() == again.value());
  std::vector<int> one{5};
  CHECK(bb.encode_text(g, one, RunMode{false, &drop}).rows() == 1);
  CHECK_THROWS_AS(bb.encode_text(g, std::vector<int>{}, RunMode{}), ValidationError);
}

TEST_CASE("teacher-forced decoding") {
  ModelConfig cfg = tiny_config();
  Rng init(4), drop(5);
  ag::ParamSet ps;
  Backbone bb(ps, cfg, init);
  const int d = cfg.model_dim();

  SUBCASE("emits exactly T frames and T stop logits") {
    for (int T : {1, 3, 9}) {
      ag::Graph g;
      auto out = bb.forward_teacher_forced(g, g.constant(random_mat(4, d, init)), random_mat(T, 4, init),
                                           RunMode{true, &drop});
      CHECK(out.frames() == T);
      CHECK(out.stop_logits.rows() == T);
      CHECK(out.mel_after.rows() == T);
      CHECK(out.alignments.rows() == T);
      CHECK(out.alignments.cols() == 4);
      for (Eigen::Index t = 1; t < T; ++t)
        CHECK(((out.gmm_means.row(t) - out.gmm_means.row(t - 1)).array() >= 0.0).all());
    }
  }
  SUBCASE("zero memory, zero target and zero heads give zero frames") {
    ps.at("decoder.mel_proj.w").value.setZero();
    ps.at("decoder.mel_proj.b").value.setZero();
    ag::Graph g;
    auto out = bb.forward_teacher_forced(g, g.constant(Mat::Zero(3, d)), Mat::Zero(5, 4), RunMode{true, &drop});
    CHECK(out.mel_before.value().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("bad shapes are rejected") {
    ag::Graph g;
    CHECK_THROWS_AS(bb.forward_teacher_forced(g, g.constant(Mat::Zero(3, d + 1)), Mat::Zero(5, 4), RunMode{}),
                    ShapeError);
    CHECK_THROWS_AS(bb.forward_teacher_forced(g, g.constant(Mat::Zero(3, d)), Mat::Zero(5, 3), RunMode{}),
                    ShapeError);
  }
  SUBCASE("gradients match finite differences") {
    // The go frame is zero, so zero biases would put the pre-net ReLU on its kink.
    for (auto* p : ps.all())
      if (p->name.ends_with(".b")) p->value = random_mat(p->value.rows(), p->value.cols(), init, 0.3);
    auto& mem = ps.add("memory", random_mat(3, d, init));
    Mat target = random_mat(4, 4, init);
    auto res = grad_check(ps, [&](ag::Graph& g) {
      auto out = bb.forward_teacher_forced(g, g.param(mem), target, RunMode{true, &drop});
      Mat labels = Mat::Zero(4, 1);
      labels(3, 0) = 1.0;
      std::vector<ag::Var> parts{ag::mse(out.mel_before, target), ag::mse(out.mel_after, target),
                                 ag::bce_with_logits(out.stop_logits, labels)};
      return ag::sum_all(ag::concat_cols(parts));
    });
    INFO(res.worst_param);
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("autoregressive decoding limits") {
  ModelConfig cfg = tiny_config();
  Rng init(6), drop(7);
  ag::ParamSet ps;
  Backbone bb(ps, cfg, init);
  ps.at("decoder.stop_proj.w").value.setZero();

  SUBCASE("a stop head that never fires hits the cap") {
    ps.at("decoder.stop_proj.b").value.setConstant(-50.0);
    ag::Graph g;
    auto out = bb.decode_autoregressive(g, g.constant(random_mat(4, cfg.model_dim(), init)),
                                        DecodeLimits{10}, RunMode{false, &drop});
    CHECK(out.frames() == 10);
    CHECK(out.truncated);
  }
  SUBCASE("a stop head that always fires stops after one frame") {
    ps.at("decoder.stop_proj.b").value.setConstant(50.0);
    ag::Graph g;
    auto out = bb.decode_autoregressive(g, g.constant(random_mat(4, cfg.model_dim(), init)),
                                        DecodeLimits{10}, RunMode{false, &drop});
    CHECK(out.frames() == 1);
    CHECK_FALSE(out.truncated);
  }
}

TEST_CASE("linguistics-aware network") {
  ModelConfig cfg = tiny_config();
  cfg.n_symbols = 7;
  Rng init(8), drop(9);
  ag::ParamSet ps;
  LinguisticsAware la(ps, cfg, init);
  const int d = cfg.model_dim();
  std::vector<int> para{1, 2, 3, 0, 4, 5, 6};
  ag::Graph g;
  auto pl = la.encode_paragraph_text(g, para, RunMode{false, &drop});
  CHECK(pl.h_p.rows() == 7);
  CHECK(pl.h_p.cols() == d);
  CHECK(pl.h_pm.value() == pl.h_p.value().row(6));
  CHECK(la.encode_paragraph_text(g, para, RunMode{false, &drop}).h_p.value() == pl.h_p.value());

  SUBCASE("a one-phone paragraph gives identical attention rows plus h_pm") {
    std::vector<int> one{3};
    auto p1 = la.encode_paragraph_text(g, one, RunMode{false, &drop});
    ag::Var h_s = g.constant(random_mat(4, d, init));
    auto out = la.forward(g, h_s, p1).value();
    Mat proj = p1.h_p.value() * la.attention().wv().value * la.attention().wo().value;
    for (Eigen::Index i = 0; i < 4; ++i)
      CHECK((out.row(i) - proj - p1.h_pm.value()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("zero h_pm leaves the attention context") {
    ParagraphLinguistic z{pl.h_p, g.constant(Mat::Zero(1, d))};
    ag::Var h_s = g.constant(random_mat(3, d, init));
    auto a = la.forward(g, h_s, z).value();
    auto c = la.attention().forward(g, h_s, pl.h_p, pl.h_p).context.value();
    CHECK(a == c);
  }
}

TEST_CASE("prosody-aware network and predictor") {
  ModelConfig cfg = tiny_config();
  Rng init(10), drop(11);
  ag::ParamSet ps;
  ProsodyAware pa(ps, cfg, init);
  const int d = cfg.model_dim();

  SUBCASE("the encoder keeps the sequence length") {
    for (int m : {1, 2, 7, 12}) {
      ag::Graph g;
      auto pp = pa.encode_paragraph_prosody(g, g.constant(random_mat(m, 3, init)), false);
      CHECK(pp.h_q.rows() == m);
      CHECK(pp.h_q.cols() == d);
      CHECK(pp.h_qm.value() == pp.h_q.value().row(m - 1));
    }
  }
  SUBCASE("m = 1 gives identical context rows; zero h_qm leaves the context") {
    ag::Graph g;
    auto pp = pa.encode_paragraph_prosody(g, g.constant(random_mat(1, 3, init)), false);
    auto out = pa.forward(g, g.constant(random_mat(5, d, init)), pp).value();
    for (Eigen::Index i = 1; i < 5; ++i) CHECK((out.row(i) - out.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    ParagraphProsodic z{pp.h_q, g.constant(Mat::Zero(1, d))};
    ag::Var q = g.constant(random_mat(2, d, init));
    CHECK(pa.forward(g, q, z).value() == pa.attention().forward(g, q, pp.h_q, pp.h_q).context.value());
  }
  SUBCASE("encoder gradients match finite differences") {
    auto& x = ps.add("x", random_mat(5, 3, init));
    Mat target = random_mat(5, d, init);
    auto res = grad_check(ps, [&](ag::Graph& g) {
      return ag::mse(pa.encode_paragraph_prosody(g, g.param(x), true).h_q, target);
    });
    INFO(res.worst_param);
    CHECK(res.max_rel_error < 1e-4);
  }
  SUBCASE("predictor shapes and gradients") {
    for (PredictorKind kind : {PredictorKind::kConv, PredictorKind::kGru}) {
      ModelConfig c2 = cfg;
      c2.predictor = kind;
      ag::ParamSet pps;
      ProsodyPredictor pred(pps, c2, init);
      ag::Graph g;
      CHECK(pred.forward(g, g.constant(random_mat(6, d, init)), RunMode{false, &drop}).cols() == 3);
      auto& q = pps.add("q", random_mat(5, d, init));
      q.trainable = false;
      Mat target = random_mat(5, 3, init);
      auto res = grad_check(pps, [&](ag::Graph& g) {
        return ag::mse(pred.forward(g, g.param(q), RunMode{true, &drop}), target);
      });
      INFO(res.worst_param);
      CHECK(res.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("position embedding") {
  ModelConfig cfg = tiny_config();
  Rng init(12);
  ag::ParamSet ps;
  PositionEmbedding pe(ps, cfg, init);
  ps.at("pos.proj.b").value = random_mat(1, cfg.model_dim(), init);
  ag::Graph g;

  std::vector<PositionCode> two{{0}, {2}};
  std::vector<std::size_t> counts{2, 3};
  Mat e = pe.forward(g, two, counts).value();
  REQUIRE(e.rows() == 5);
  CHECK(e.row(0) == e.row(1));
  CHECK(e.row(2) == e.row(3));
  CHECK(e.row(3) == e.row(4));
  CHECK(e.row(0) != e.row(2));

  auto codes4 = sentence_position_codes(4);
  std::vector<std::size_t> c4{2, 3, 1, 2};
  Mat e4 = pe.forward(g, codes4, c4).value();
  CHECK(e4.row(2) == e4.row(5));
  CHECK(e4.row(2) != e4.row(0));
  CHECK(e4.row(7) != e4.row(5));

  ps.at("pos.proj.w").value.setZero();
  ps.at("pos.proj.b").value.setZero();
  ag::Graph g2;
  CHECK(pe.forward(g2, two, counts).value().cwiseAbs().maxCoeff() == 0.0);
  std::vector<std::size_t> bad{2};
  CHECK_THROWS_AS(pe.forward(g2, two, bad), ShapeError);
}

TEST_CASE("fuse_memory") {
  ag::Graph g;
  Rng rng(13);
  ag::Var enc = g.constant(random_mat(4, 6, rng));
  ag::Var l = g.constant(random_mat(4, 6, rng));
  ag::Var p = g.constant(random_mat(4, 6, rng));
  ag::Var s = g.constant(random_mat(4, 6, rng));
  CHECK(fuse_memory(enc, {}, {}, {}).value() == enc.value());
  Mat fused = fuse_memory(enc, l, p, s).value();
  CHECK((fused - enc.value() - l.value() - p.value() - s.value()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(fused == ((enc.value() + l.value()) + p.value()) + s.value());
  CHECK_THROWS_AS(fuse_memory(enc, g.constant(Mat::Zero(3, 6)), {}, {}), ShapeError);
}

TEST_CASE("ablation menu and baseline equivalence") {
  auto cfg_for = [](Ablation a) { return tiny_config(a); };
  ParaTTS base(cfg_for(Ablation::kBaseline), 21);
  ParaTTS ling(cfg_for(Ablation::kLing), 21);
  ParaTTS pros(cfg_for(Ablation::kPros), 21);
  ParaTTS com(cfg_for(Ablation::kCom), 21);
  ParaTTS para(cfg_for(Ablation::kPara), 21);

  CHECK_FALSE(has_prefix(base.params(), "ling."));
  CHECK_FALSE(has_prefix(base.params(), "pros."));
  CHECK_FALSE(has_prefix(base.params(), "pos."));
  CHECK(has_prefix(ling.params(), "ling."));
  CHECK_FALSE(has_prefix(ling.params(), "pros."));
  CHECK(has_prefix(pros.params(), "pros."));
  CHECK_FALSE(has_prefix(pros.params(), "ling."));
  CHECK(has_prefix(com.params(), "ling."));
  CHECK(has_prefix(com.params(), "pros."));
  CHECK_FALSE(has_prefix(com.params(), "pos."));
  CHECK(has_prefix(para.params(), "ling."));
  CHECK(has_prefix(para.params(), "pros."));
  CHECK(has_prefix(para.params(), "pos."));

  // Shared tensors are initialised identically.
  for (const auto* p : base.params().all()) CHECK(para.params().at(p->name).value == p->value);

  Rng data(22);
  std::vector<int> sent{1, 2, 3}, paragraph{4, 5, 0, 1, 2, 3};
  Mat prosody = random_mat(6, 3, data);
  std::vector<PositionCode> codes{{2}};
  std::vector<std::size_t> counts{3};
  Mat target = random_mat(5, 4, data);
  MemoryInputs in{sent, paragraph, &prosody, codes, counts};

  auto run = [&](const ParaTTS& m, bool zero) {
    Rng b(30), c(31);
    ag::Graph g;
    ForwardModes modes{RunMode{true, &b}, RunMode{true, &c}};
    auto mem = m.build_memory(g, in, modes, zero);
    auto out = m.backbone().forward_teacher_forced(g, mem.memory, target, modes.backbone);
    return std::make_pair(mem.memory.value(), out.mel_after.value());
  };
  auto [bm, bo] = run(base, false);
  auto [pm, po] = run(para, true);
  CHECK(bm == pm);
  CHECK(bo == po);
  auto [pm2, po2] = run(para, false);
  CHECK(pm2 != bm);
}

TEST_CASE("predictor loss never reaches the encoders") {
  ParaTTS para(tiny_config(Ablation::kPara), 40);
  Rng data(41), b(42), c(43);
  std::vector<int> sent{1, 2, 3, 4}, paragraph{5, 1, 0, 1, 2, 3, 4};
  Mat prosody = random_mat(7, 3, data);
  std::vector<PositionCode> codes{{2}};
  std::vector<std::size_t> counts{4};
  MemoryInputs in{sent, paragraph, &prosody, codes, counts};
  para.params().zero_grad();
  ag::Graph g;
  auto mem = para.build_memory(g, in, ForwardModes{RunMode{true, &b}, RunMode{true, &c}});
  g.backward(ag::mse(mem.prosody_pred, prosody.bottomRows(4)));
  int checked = 0;
  for (const auto* p : para.params().all()) {
    const bool isolated = p->name.rfind("encoder.", 0) == 0 || p->name.rfind("ling.", 0) == 0;
    const bool predictor = p->name.rfind("pros.predictor.", 0) == 0;
    if (isolated) {
      CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
      ++checked;
    }
    if (predictor && p->trainable) CHECK(p->grad.cwiseAbs().maxCoeff() > 0.0);
  }
  CHECK(checked > 10);
}
