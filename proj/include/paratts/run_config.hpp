#pragma once

// Run configuration: a "key = value" file with [data] [signal] [model]
// [train] [eval] sections plus a top-level seed. Values resolve as
// command-line override > config file > built-in default, and every key
// remembers where its value came from.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "paratts/backbone.hpp"
#include "paratts/corpus.hpp"
#include "paratts/model_config.hpp"
#include "paratts/signal.hpp"
#include "paratts/synth_corpus.hpp"
#include "paratts/training.hpp"

namespace paratts {

struct EvalSettings {
  Split split = Split::kTest;
  int griffin_lim_iterations = 60;
  DecodeLimits limits;
};

struct KeyInfo {
  std::string name;  // "section.key", or "seed"
  std::string doc;
};

struct RunConfig {
  std::uint64_t seed = 1;
  SynthConfig data;
  FrameConfig signal;
  // The preset key picks the starting point; the other model keys edit it.
  std::string model_preset = "toy";
  ModelConfig model = ModelConfig::toy();
  TrainConfig train;
  EvalSettings eval;

  // "default", "file" or "cli" per key.
  std::map<std::string, std::string> sources;

  // Sets "section.key" (or "seed"); throws ValidationError for unknown keys
  // and malformed values.
  void set(std::string_view key, std::string_view value, std::string_view source);
  std::string get(std::string_view key) const;

  // Effective configuration in file syntax, loadable by load_run_config.
  std::string to_text() const;
  // One line per key: name = value [source].
  std::string describe() const;

  static const std::vector<KeyInfo>& keys();
};

// Defaults, then the file (when non-empty), then the overrides in order.
RunConfig load_run_config(const std::filesystem::path& file,
                          const std::vector<std::pair<std::string, std::string>>& overrides = {});

// Parses "[section]" headers, "key = value" lines and '#' comments.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text, std::string_view origin);

}  // namespace paratts
