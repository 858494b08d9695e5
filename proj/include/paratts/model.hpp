#pragma once

// The assembled paragraph-aware model: the backbone plus whichever context
// networks the ablation enables, and the shared memory-construction path
// used by training and inference.

#include <memory>
#include <optional>
#include <span>

#include "paratts/backbone.hpp"
#include "paratts/context.hpp"

namespace paratts {

// Backbone and context layers draw dropout masks from separate streams, so a
// disabled context never shifts the backbone's randomness.
struct ForwardModes {
  RunMode backbone;
  RunMode context;
};

struct MemoryInputs {
  std::span<const int> query_ids;      // sentence (training) or paragraph (inference)
  std::span<const int> paragraph_ids;  // m
  // m x 3 normalised prosody fed to the prosody encoder; when null the
  // predictor's output is used instead.
  const Mat* paragraph_prosody = nullptr;
  std::span<const PositionCode> codes;
  std::span<const std::size_t> phone_counts;  // per code; sums to query length
};

struct MemoryOutput {
  ag::Var enc;
  ag::Var ling;           // invalid when the branch is disabled
  ag::Var pros;
  ag::Var pos;
  ag::Var prosody_pred;   // query length x 3; invalid without the prosody branch
  ag::Var memory;
  std::vector<Mat> ling_weights;
  std::vector<Mat> pros_weights;
};

class ParaTTS {
 public:
  ParaTTS(const ModelConfig& cfg, std::uint64_t seed);

  // zero_context evaluates every enabled branch but adds exact zeros in
  // place of its output.
  MemoryOutput build_memory(ag::Graph& g, const MemoryInputs& in, const ForwardModes& modes,
                            bool zero_context = false) const;

  const ModelConfig& config() const { return cfg_; }
  BranchFlags flags() const { return branches(cfg_.ablation); }
  ag::ParamSet& params() { return params_; }
  const ag::ParamSet& params() const { return params_; }
  const Backbone& backbone() const { return *backbone_; }
  const LinguisticsAware* ling() const { return ling_.get(); }
  const ProsodyAware* pros() const { return pros_.get(); }
  const ProsodyPredictor* predictor() const { return predictor_.get(); }
  const PositionEmbedding* position() const { return pos_.get(); }

 private:
  ModelConfig cfg_;
  ag::ParamSet params_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<LinguisticsAware> ling_;
  std::unique_ptr<ProsodyAware> pros_;
  std::unique_ptr<ProsodyPredictor> predictor_;
  std::unique_ptr<PositionEmbedding> pos_;
};

// Seed for the context networks' initialisation, derived from the model seed.
std::uint64_t context_seed(std::uint64_t seed);

}  // namespace paratts
