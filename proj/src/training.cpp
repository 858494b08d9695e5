#include "paratts/training.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "paratts/checkpoint.hpp"
#include "paratts/error.hpp"

namespace paratts {

LossBreakdown LossTerms::values(const LossWeights& w) const {
  LossBreakdown b;
  b.weights = w;
  b.recon = recon.value()(0, 0);
  b.stop = stop.value()(0, 0);
  b.prosody = prosody.valid() ? prosody.value()(0, 0) : 0.0;
  b.total = total.value()(0, 0);
  return b;
}

LossTerms total_loss(const BackboneOutput& out, const Mat& target_mel, const ag::Var& prosody_pred,
                     const Mat* prosody_target, const LossWeights& w, ProsodyLossKind kind,
                     const LossNormalizer* norm) {
  if (out.mel_before.rows() != target_mel.rows() || out.mel_before.cols() != target_mel.cols())
    throw ShapeError("loss: predicted mel is " + std::to_string(out.mel_before.rows()) + "x" +
                     std::to_string(out.mel_before.cols()) + ", target is " + std::to_string(target_mel.rows()) +
                     "x" + std::to_string(target_mel.cols()));
  if (out.stop_logits.rows() != target_mel.rows()) throw ShapeError("loss: one stop logit per frame expected");
  const double mel_n = static_cast<double>(target_mel.size());
  const double frames = static_cast<double>(target_mel.rows());

  LossTerms t;
  t.recon = ag::scale(ag::add(ag::mse(out.mel_before, target_mel), ag::mse(out.mel_after, target_mel)),
                      0.5 * (norm ? mel_n / norm->mel_elements : 1.0));
  Mat labels = Mat::Zero(target_mel.rows(), 1);
  labels(target_mel.rows() - 1, 0) = 1.0;
  t.stop = ag::scale(ag::bce_with_logits(out.stop_logits, labels), norm ? frames / norm->frames : 1.0);
  t.total = ag::add(ag::scale(t.recon, w.recon), ag::scale(t.stop, w.stop));
  if (prosody_pred.valid()) {
    if (!prosody_target) throw ShapeError("loss: a prosody prediction needs a target");
    if (prosody_pred.rows() != prosody_target->rows() || prosody_pred.cols() != prosody_target->cols())
      throw ShapeError("loss: prosody prediction has " + std::to_string(prosody_pred.rows()) +
                       " rows, target has " + std::to_string(prosody_target->rows()));
    const double pn = static_cast<double>(prosody_target->size());
    ag::Var p = kind == ProsodyLossKind::kMse ? ag::mse(prosody_pred, *prosody_target)
                                              : ag::l1(prosody_pred, *prosody_target);
    t.prosody = ag::scale(p, norm ? pn / norm->prosody_elements : 1.0);
    t.total = ag::add(t.total, ag::scale(t.prosody, w.prosody));
  }
  return t;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("train config: batch_size must be >= 1");
  if (steps < 1) throw ValidationError("train config: steps must be >= 1");
  if (learning_rate < 0.0 || final_learning_rate < 0.0)
    throw ValidationError("train config: learning rates must be non-negative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ValidationError("train config: Adam betas must lie in [0, 1)");
  if (epsilon <= 0.0) throw ValidationError("train config: epsilon must be positive");
  if (checkpoint_every < 0) throw ValidationError("train config: checkpoint_every must be >= 0");
}

double TrainConfig::lr_at(int step) const {
  if (steps <= 1 || learning_rate == 0.0 || final_learning_rate == 0.0) return learning_rate;
  const double frac = std::clamp(static_cast<double>(step) / (steps - 1), 0.0, 1.0);
  return learning_rate * std::pow(final_learning_rate / learning_rate, frac);
}

Adam::Adam(ag::ParamSet& params, const TrainConfig& cfg)
    : params_(params.trainable()), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.epsilon) {
  for (const auto* p : params_) {
    state_.m.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    state_.v.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(double lr) {
  if (state_.m.size() != params_.size()) throw IntegrityError("optimizer state does not match the parameters");
  ++state_.t;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.t));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.t));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ag::Parameter& p = *params_[i];
    Mat& m = state_.m[i];
    Mat& v = state_.v[i];
    m = beta1_ * m + (1.0 - beta1_) * p.grad;
    v = beta2_ * v + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

double clip_gradients(ag::ParamSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params.trainable()) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm)
    for (auto* p : params.trainable()) p->grad *= max_norm / norm;
  return norm;
}

// ---------------------------------------------------------------------------

namespace {

Rng step_rng(std::uint64_t seed, int step, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), stream};
  return Rng(seq);
}

}  // namespace

Trainer::Trainer(ParaTTS& model, const TrainConfig& cfg, std::vector<TrainingExample> examples)
    : model_(model), cfg_(cfg), examples_(std::move(examples)), adam_(model.params(), cfg) {
  cfg_.validate();
  if (examples_.empty()) throw ValidationError("training: no examples");
}

std::vector<std::size_t> Trainer::batch_indices(int step) const {
  Rng rng = step_rng(cfg_.seed, step, 0);
  std::vector<std::size_t> perm(examples_.size());
  std::vector<std::size_t> out;
  for (int k = 0; k < cfg_.batch_size; ++k) {
    const std::size_t j = static_cast<std::size_t>(k) % perm.size();
    if (j == 0) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
    }
    out.push_back(perm[j]);
  }
  return out;
}

StepReport Trainer::step() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto batch = batch_indices(step_);
  LossNormalizer norm;
  for (std::size_t i : batch) {
    const auto& ex = examples_[i];
    norm.mel_elements += static_cast<double>(ex.target_mel.size());
    norm.frames += static_cast<double>(ex.target_mel.rows());
    norm.prosody_elements += static_cast<double>(ex.prosody_target.size());
  }
  Rng backbone_rng = step_rng(cfg_.seed, step_, 1);
  Rng context_rng = step_rng(cfg_.seed, step_, 2);
  const ForwardModes modes{RunMode{true, &backbone_rng}, RunMode{true, &context_rng}};

  model_.params().zero_grad();
  StepReport rep;
  rep.step = step_;
  rep.loss.weights = cfg_.weights;
  auto describe = [&](const std::string& what) {
    std::ostringstream os;
    os << what << " at step " << step_ << "; batch:";
    for (std::size_t j : batch) os << ' ' << examples_[j].paragraph_id << '/' << examples_[j].sentence;
    return os.str();
  };
  for (std::size_t i : batch) {
    const auto& ex = examples_[i];
    ag::Graph g;
    LossBreakdown b;
    try {
      MemoryInputs in{ex.query_ids, ex.paragraph_ids, &ex.paragraph_prosody, ex.codes, ex.phone_counts};
      MemoryOutput mem = model_.build_memory(g, in, modes);
      BackboneOutput out =
          model_.backbone().forward_teacher_forced(g, mem.memory, ex.target_mel, modes.backbone);
      LossTerms terms = total_loss(out, ex.target_mel, mem.prosody_pred, &ex.prosody_target, cfg_.weights,
                                   cfg_.prosody_loss, &norm);
      b = terms.values(cfg_.weights);
      g.backward(terms.total);
    } catch (const NumericError& e) {
      throw NumericError(describe(std::string("non-finite loss (") + e.what() + ")"));
    }
    rep.loss.recon += b.recon;
    rep.loss.stop += b.stop;
    rep.loss.prosody += b.prosody;
  }
  const LossWeights& w = cfg_.weights;
  rep.loss.total = w.recon * rep.loss.recon + w.stop * rep.loss.stop + w.prosody * rep.loss.prosody;
  rep.grad_norm = clip_gradients(model_.params(), cfg_.clip_norm);
  rep.lr = cfg_.lr_at(step_);
  adam_.step(rep.lr);
  ++step_;
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::string metrics_record(const StepReport& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["recon"] = r.loss.recon;
  j["stop"] = r.loss.stop;
  j["prosody"] = r.loss.prosody;
  j["total"] = r.loss.total;
  j["lr"] = r.lr;
  j["wall_ms"] = std::round(r.wall_ms * 1000.0) / 1000.0;
  return j.dump();
}

FitResult fit(ParaTTS& model, const TrainConfig& cfg, std::vector<TrainingExample> examples,
              const FitOptions& opts) {
  Trainer trainer(model, cfg, std::move(examples));
  if (!opts.resume_from.empty()) {
    Checkpoint ck = read_checkpoint(opts.resume_from);
    restore_parameters(model, ck);
    if (!ck.has_optimizer) throw ValidationError("cannot resume from " + opts.resume_from.string() +
                                                 ": it holds no optimizer state");
    AdamState& st = trainer.optimizer().state();
    if (ck.optimizer.m.size() != st.m.size())
      throw ValidationError("cannot resume: optimizer state does not match the model");
    st = ck.optimizer;
    trainer.set_next_step(ck.step);
  }
  std::filesystem::create_directories(opts.out_dir);
  std::ofstream log(opts.out_dir / "metrics.jsonl", opts.resume_from.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot write " + (opts.out_dir / "metrics.jsonl").string());

  FitResult res;
  auto save = [&](const std::filesystem::path& path) {
    write_checkpoint(path, make_checkpoint(model, cfg.seed, trainer.next_step(), opts.mel_stats,
                                           opts.prosody_stats, &trainer.optimizer().state()));
  };
  const int end = opts.stop_at > 0 ? std::min(opts.stop_at, cfg.steps) : cfg.steps;
  while (trainer.next_step() < end) {
    StepReport r = trainer.step();
    log << metrics_record(r) << '\n';
    if (opts.on_step) opts.on_step(r);
    res.reports.push_back(r);
    if (cfg.checkpoint_every > 0 && trainer.next_step() % cfg.checkpoint_every == 0 &&
        trainer.next_step() < end) {
      log.flush();
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_%06d.bin", trainer.next_step());
      save(opts.out_dir / name);
    }
  }
  log.flush();
  res.final_checkpoint = opts.out_dir / "final.bin";
  save(res.final_checkpoint);
  return res;
}

}  // namespace paratts
