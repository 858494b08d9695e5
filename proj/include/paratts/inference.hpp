#pragma once

// Paragraph synthesis: both encoders read the whole paragraph sequence, the
// predictor supplies prosody (or ground truth is substituted), the branches
// are fused and the decoder runs until its stop token fires.

#include <filesystem>
#include <optional>

#include "paratts/features.hpp"
#include "paratts/model.hpp"

namespace paratts {

struct SynthesisOptions {
  DecodeLimits limits;
  // Normalised m x 3 prosody used instead of the prediction.
  const Mat* gt_prosody = nullptr;
  // Seeds the decoder pre-net dropout, which stays on at inference.
  std::uint64_t seed = 1;
};

struct SynthesisResult {
  Mat mel;                // T x n_mels log-mel (denormalised, post-net output)
  Mat alignments;         // T x m
  Mat gmm_means;          // T x mixtures
  Mat predicted_prosody;  // m x 3 normalised; empty without the prosody branch
  bool truncated = false;
  double final_mean_position = 0.0;
  Eigen::Index memory_length = 0;
};

SynthesisResult synthesize_paragraph(const ParaTTS& model, const ParagraphInput& input, const MelStats& mel_stats,
                                     const SynthesisOptions& opts = {});

// Griffin-Lim phase reconstruction through the pseudo-inverse filterbank,
// starting from zero phase so the output is deterministic.
Waveform invert_mel(const Mat& log_mel, const FrameConfig& frame, int iterations = 60);

// index, symbol, lf0, intensity_db, duration_s; denormalised values.
void write_prosody_csv(const std::filesystem::path& path, const Mat& prosody, const std::vector<int>& ids,
                       const SymbolTable& symbols);

// Phone boundaries implied by an alignment: phone k starts at the first frame
// whose running argmax reaches k. Returns one span per memory row.
std::vector<PhoneSpan> alignment_phone_spans(const Mat& alignments, double hop_s);

}  // namespace paratts
