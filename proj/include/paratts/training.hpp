#pragma once

// Composite loss, Adam, and the teacher-forced training loop over sentences
// with their paragraph context.

#include <filesystem>
#include <functional>
#include <ostream>

#include "paratts/features.hpp"
#include "paratts/model.hpp"

namespace paratts {

enum class ProsodyLossKind { kMse, kL1 };

struct LossWeights {
  double recon = 1.0;
  double stop = 1.0;
  double prosody = 1.0;
};

struct LossBreakdown {
  double recon = 0.0;
  double stop = 0.0;
  double prosody = 0.0;
  double total = 0.0;
  LossWeights weights;
};

// Element counts the loss sums are divided by. A batch passes its totals so
// that per-example pieces add up to the masked batch mean.
struct LossNormalizer {
  double mel_elements = 0.0;
  double frames = 0.0;
  double prosody_elements = 0.0;
};

struct LossTerms {
  ag::Var recon;
  ag::Var stop;
  ag::Var prosody;  // invalid when there is no predictor
  ag::Var total;

  LossBreakdown values(const LossWeights& w) const;
};

// recon averages the squared error of both mel outputs; the stop target is 1
// on the last frame only. prosody_pred may be invalid (no prosody branch).
LossTerms total_loss(const BackboneOutput& out, const Mat& target_mel, const ag::Var& prosody_pred,
                     const Mat* prosody_target, const LossWeights& w,
                     ProsodyLossKind kind = ProsodyLossKind::kMse, const LossNormalizer* norm = nullptr);

struct TrainConfig {
  int batch_size = 16;
  int steps = 1000;
  double learning_rate = 1e-3;
  double final_learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
  std::uint64_t seed = 1;
  LossWeights weights;
  ProsodyLossKind prosody_loss = ProsodyLossKind::kMse;
  int checkpoint_every = 500;  // 0: final checkpoint only

  void validate() const;
  // Exponential decay from learning_rate at step 0 to final_learning_rate at
  // the last step.
  double lr_at(int step) const;
};

struct AdamState {
  std::vector<Mat> m;
  std::vector<Mat> v;
  long long t = 0;
};

class Adam {
 public:
  Adam(ag::ParamSet& params, const TrainConfig& cfg);

  // Applies one update from the accumulated gradients.
  void step(double lr);
  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

 private:
  std::vector<ag::Parameter*> params_;
  double beta1_, beta2_, eps_;
  AdamState state_;
};

// Global L2 norm of trainable gradients; rescales them to max_norm when above.
double clip_gradients(ag::ParamSet& params, double max_norm);

struct StepReport {
  int step = 0;
  LossBreakdown loss;
  double lr = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

class Trainer {
 public:
  Trainer(ParaTTS& model, const TrainConfig& cfg, std::vector<TrainingExample> examples);

  // One optimiser step on the batch chosen by (seed, step). Throws
  // NumericError naming the batch when the loss is not finite.
  StepReport step();

  // Batch indices for a given step; a pure function of (seed, step).
  std::vector<std::size_t> batch_indices(int step) const;

  int next_step() const { return step_; }
  void set_next_step(int s) { step_ = s; }
  Adam& optimizer() { return adam_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<TrainingExample>& examples() const { return examples_; }

 private:
  ParaTTS& model_;
  TrainConfig cfg_;
  std::vector<TrainingExample> examples_;
  Adam adam_;
  int step_ = 0;
};

// One JSON object per line: step, recon, stop, prosody, total, lr, wall_ms.
std::string metrics_record(const StepReport& r);

struct FitOptions {
  std::filesystem::path out_dir;
  std::filesystem::path resume_from;  // empty: start from scratch
  int stop_at = 0;  // pause before this step; 0 runs to cfg.steps
  MelStats mel_stats;
  ProsodyStats prosody_stats;
  std::function<void(const StepReport&)> on_step;
};

struct FitResult {
  std::vector<StepReport> reports;  // this run only
  std::filesystem::path final_checkpoint;
};

// Trains until cfg.steps (or opts.stop_at), writing metrics.jsonl (appended
// on resume) and checkpoints ckpt_<step>.bin under out_dir; final.bin holds
// the state where the run stopped.
FitResult fit(ParaTTS& model, const TrainConfig& cfg, std::vector<TrainingExample> examples,
              const FitOptions& opts);

}  // namespace paratts
