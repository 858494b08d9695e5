#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "paratts/layers.hpp"

namespace paratts {

// Which context networks are active.
enum class Ablation { kBaseline, kLing, kPros, kCom, kPara };

std::string_view ablation_name(Ablation a);
Ablation parse_ablation(std::string_view name);  // throws ValidationError

struct BranchFlags {
  bool ling = false;
  bool pros = false;
  bool pos = false;
};
BranchFlags branches(Ablation a);

enum class PredictorKind { kConv, kGru };

struct ModelConfig {
  int n_symbols = 0;  // filled from the corpus symbol table
  int n_mels = 80;

  int embed_dim = 512;
  std::vector<int> encoder_prenet{512, 512};
  double encoder_dropout = 0.1;
  CbhgConfig cbhg;  // in_dim follows encoder_prenet.back()

  int attention_heads = 4;

  std::vector<int> prosody_channels{32, 32, 64, 64, 128, 128};
  int prosody_kernel = 3;
  int prosody_gru = 256;  // must equal model_dim()

  PredictorKind predictor = PredictorKind::kConv;
  int predictor_channels = 256;
  int predictor_kernel = 3;
  double predictor_dropout = 0.1;
  int predictor_gru = 64;

  int gmm_mixtures = 8;
  int gmm_dim = 128;
  double gmm_delta_bias = 0.5413248546129181;  // softplus^-1(1)
  double gmm_scale_bias = 0.5413248546129181;

  std::vector<int> decoder_prenet{256, 256};
  double decoder_dropout = 0.2;
  int decoder_lstm = 1024;
  int decoder_layers = 2;

  int postnet_channels = 512;
  int postnet_kernel = 5;
  int postnet_layers = 5;  // the last one is linear and emits n_mels

  Ablation ablation = Ablation::kPara;

  int model_dim() const { return cbhg.out_dim(); }

  // Full-size network; the member defaults.
  static ModelConfig full();
  // Same topology at widths that train in minutes on one core.
  static ModelConfig toy();

  void validate() const;  // throws ValidationError
  // Canonical "key = value" listing used for checkpoints and hashing.
  std::string to_text() const;
  std::uint32_t hash() const;
  // Sets one key of the to_text() listing; throws ValidationError for
  // unknown keys or malformed values.
  void set(std::string_view key, std::string_view value);
  // Inverse of to_text(), starting from the default configuration.
  static ModelConfig from_text(std::string_view text);
};

}  // namespace paratts
