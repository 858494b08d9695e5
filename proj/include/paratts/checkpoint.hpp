#pragma once

// Single-file checkpoints: model configuration, seed, step, normalisation
// statistics, every tensor and the optimiser moments, sealed by a CRC-32.

#include <filesystem>

#include "paratts/features.hpp"
#include "paratts/training.hpp"

namespace paratts {

struct Checkpoint {
  std::string config_text;
  std::uint32_t config_hash = 0;
  std::uint64_t seed = 0;
  int step = 0;  // next step to run
  MelStats mel_stats;
  ProsodyStats prosody_stats;
  std::vector<std::pair<std::string, Mat>> tensors;
  bool has_optimizer = false;
  AdamState optimizer;

  ModelConfig config() const { return ModelConfig::from_text(config_text); }
};

Checkpoint make_checkpoint(const ParaTTS& model, std::uint64_t seed, int step, const MelStats& mel,
                           const ProsodyStats& prosody, const AdamState* optimizer);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
// Throws IntegrityError for truncated or corrupted files.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies the tensors into a model built from the same configuration. A
// configuration mismatch (for example another ablation) is a ValidationError.
void restore_parameters(ParaTTS& model, const Checkpoint& ck);

}  // namespace paratts
