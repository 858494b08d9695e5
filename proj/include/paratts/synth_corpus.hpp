#pragma once

// Seeded generator of a toy paragraph corpus. Each phone is a harmonic tone
// whose F0, level and duration follow per-symbol values plus paragraph-level
// declination, paragraph-initial reset and edge lengthening, so alignments
// and prosody patterns are known exactly.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "paratts/corpus.hpp"

namespace paratts {

struct SynthConfig {
  int paragraphs = 8;
  int test_paragraphs = 0;  // the last ones are tagged "test"
  int sentences_min = 3;
  int sentences_max = 3;
  int phones_min = 4;
  int phones_max = 7;
  int phones_per_syllable_min = 1;
  int phones_per_syllable_max = 3;
  int symbols = 12;  // excluding the boundary symbol
  int sample_rate = 16000;

  double base_f0_hz = 160.0;
  double symbol_f0_spread_hz = 12.0;  // per-symbol offsets drawn in +-spread
  double declination_hz = -6.0;        // added per sentence index
  double reset_hz = 8.0;               // extra on the first sentence
  double base_db = -18.0;
  double symbol_db_spread = 2.0;
  double intensity_declination_db = -1.0;
  double intensity_reset_db = 1.0;

  double phone_duration_min_s = 0.06;
  double phone_duration_max_s = 0.10;
  double tempo_declination = 0.08;  // duration scale grows by this per sentence
  double edge_lengthening = 1.05;   // extra duration scale on first and last sentence
  double pause_s = 0.25;
  double pause_jitter_s = 0.03;
  double edge_silence_s = 0.1;  // before the first and after the last sentence
  double noise_db = -60.0;

  // Throws ValidationError for empty or inverted ranges.
  void validate() const;
};

struct SynthPhoneTrace {
  int symbol = 0;
  double f0_hz = 0.0;
  double level_db = 0.0;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct SynthSentenceTrace {
  double f0_hz = 0.0;     // sentence base before per-symbol offsets
  double level_db = 0.0;  // sentence base before per-symbol offsets
  double duration_scale = 1.0;
  std::vector<SynthPhoneTrace> phones;
};

struct SynthParagraphTrace {
  std::vector<SynthSentenceTrace> sentences;
};

// Everything the generator decided, for independent checks.
struct SynthTrace {
  std::vector<double> symbol_f0_offset_hz;  // indexed by symbol id
  std::vector<double> symbol_db_offset;
  std::vector<double> symbol_duration_s;
  std::vector<SynthParagraphTrace> paragraphs;
};

struct SynthCorpus {
  CorpusManifest manifest;
  SynthTrace trace;
  std::filesystem::path manifest_path;
};

// Writes <out_dir>/manifest.jsonl and <out_dir>/wav/<id>.wav.
SynthCorpus generate_synthetic_corpus(const SynthConfig& cfg, std::uint64_t seed,
                                      const std::filesystem::path& out_dir);

}  // namespace paratts
