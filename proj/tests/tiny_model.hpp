#pragma once

// Smallest configuration that still exercises every block, for gradient
// checks and structural tests.

#include "paratts/model_config.hpp"

namespace paratts::testing {

inline ModelConfig tiny_config(Ablation ablation = Ablation::kPara) {
  ModelConfig c;
  c.n_symbols = 6;
  c.n_mels = 4;
  c.embed_dim = 5;
  c.encoder_prenet = {6};
  c.encoder_dropout = 0.0;
  c.cbhg.bank_k = 2;
  c.cbhg.bank_channels = 3;
  c.cbhg.proj_channels = 4;
  c.cbhg.highway_layers = 1;
  c.cbhg.highway_dim = 3;
  c.cbhg.gru_dim = 2;
  c.attention_heads = 2;
  c.prosody_channels = {3, 3, 4, 4, 5, 5};
  c.prosody_gru = 4;
  c.predictor_channels = 4;
  c.predictor_dropout = 0.0;
  c.predictor_gru = 3;
  c.gmm_mixtures = 2;
  c.gmm_dim = 3;
  c.decoder_prenet = {5};
  c.decoder_dropout = 0.0;
  c.decoder_lstm = 4;
  c.decoder_layers = 2;
  c.postnet_channels = 3;
  c.postnet_kernel = 3;
  c.postnet_layers = 2;
  c.ablation = ablation;
  return c;
}

}  // namespace paratts::testing
