#pragma once

// Objective metrics (MCD after DTW, syllable-level Pearson correlation of
// prosody, pause RMSE) and the intra-/inter-paragraph prosody pattern
// analysis of a corpus.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "paratts/features.hpp"
#include "paratts/inference.hpp"

namespace paratts {

// 10 * sqrt(2) / ln(10)
inline constexpr double kMcdScale = 6.141851463713754;

// Orthonormal DCT-II of each log-mel frame, coefficients [first, last].
Mat mel_cepstrum(const Mat& log_mel, int first = 1, int last = 13);

struct DtwPath {
  double cost = 0.0;  // summed Euclidean distance along the path
  std::vector<std::pair<Eigen::Index, Eigen::Index>> steps;

  double mean_cost() const { return cost / static_cast<double>(steps.size()); }
};

// Minimum-cost monotonic path with steps (1,0), (0,1), (1,1) between the rows
// of a and b. Among equal costs the shorter path wins.
DtwPath dtw(const Mat& a, const Mat& b);

// Mel-cepstral distortion of two log-mel spectrograms along the DTW path.
double mcd_dtw(const Mat& pred_log_mel, const Mat& ref_log_mel);

struct Correlation {
  double r = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

// Two-sided p-value from Student's t with n - 2 degrees of freedom. Throws
// ValidationError for n < 3 or unequal lengths and NumericError when either
// input has zero variance.
Correlation pearson(std::span<const double> x, std::span<const double> y);

// Per column of two S x 3 syllable feature matrices.
std::array<Correlation, 3> prosody_correlation(const Mat& pred_syllables, const Mat& ref_syllables);

struct SentenceTiming {
  double start_s = 0.0;
  double end_s = 0.0;
};

// One inner vector per paragraph. Pause = next.start - current.end.
struct PauseErrors {
  double rmse = 0.0;
  std::size_t gaps = 0;
};
PauseErrors pause_rmse(const std::vector<std::vector<SentenceTiming>>& pred,
                       const std::vector<std::vector<SentenceTiming>>& ref);

std::vector<SentenceTiming> sentence_timings(const ParagraphRecord& p);
// Sentence timings implied by per-element spans of the paragraph sequence.
std::vector<SentenceTiming> sentence_timings(const ParagraphRecord& p, std::span<const PhoneSpan> sequence_spans,
                                             bool with_boundary);

// Syllable-level (LF0, intensity, duration) of frame prosody over time spans.
// LF0 averages log F0 over voiced frames (0 when none).
Mat syllable_features(const FrameProsody& fp, std::span<const PhoneSpan> syllable_spans);
std::vector<PhoneSpan> syllable_spans(const ParagraphRecord& p);

// Maps reference spans onto predicted frames through a DTW path computed on
// (pred, ref) frame sequences.
std::vector<PhoneSpan> project_spans(const DtwPath& path, std::span<const PhoneSpan> ref_spans,
                                     double ref_offset_s, double hop_s, Eigen::Index pred_frames);

// ---------------------------------------------------------------------------

struct ParagraphMetrics {
  std::string id;
  double mcd = 0.0;
  Eigen::Index frames = 0;
  Eigen::Index reference_frames = 0;
  bool truncated = false;
  double final_mean_position = 0.0;
  Eigen::Index memory_length = 0;
};

struct MetricReport {
  std::string ablation;
  bool gt_prosody = false;
  double mcd = 0.0;  // mean over paragraphs
  Correlation lf0;
  Correlation intensity;
  Correlation duration;
  double pause_rmse = 0.0;
  std::size_t pauses = 0;
  // RMSE of the predicted against the extracted normalised phone prosody;
  // only for models with a prosody predictor.
  std::optional<Eigen::Vector3d> predictor_rmse;
  std::vector<ParagraphMetrics> paragraphs;

  std::string to_key_value() const;
  std::string to_table() const;
};

struct EvalOptions {
  bool gt_prosody = false;
  int griffin_lim_iterations = 60;
  DecodeLimits limits;
  std::uint64_t seed = 1;
  // When set, per-paragraph artefacts (wav, mel, alignment, prosody csv,
  // pitch contour csv) are written here.
  std::filesystem::path dump_dir;
};

MetricReport evaluate(const ParaTTS& model, const CorpusManifest& manifest, const FeatureSet& features,
                      Split split, const EvalOptions& opts);

// ---------------------------------------------------------------------------

struct PositionStats {
  double lf0 = 0.0;           // mean log F0 of voiced frames
  double intensity_db = 0.0;
  double speech_rate = 0.0;   // syllables per second
  std::size_t sentences = 0;
};

struct PatternDiff {
  double lf0 = 0.0;
  double intensity_db = 0.0;
  double speech_rate = 0.0;
  std::size_t pairs = 0;
};

struct PatternReport {
  std::array<PositionStats, 3> by_position;  // first, middle, last
  // Mean of (current sentence - next sentence) within paragraphs.
  PatternDiff no_break;
  // Mean of (last sentence of a paragraph - first of the next paragraph).
  std::optional<PatternDiff> paragraph_break;
  std::string notice;

  std::string to_key_value() const;
  std::string to_table() const;
};

struct SentenceProsody {
  double lf0 = 0.0;
  double intensity_db = 0.0;
  double speech_rate = 0.0;
};

std::vector<SentenceProsody> sentence_prosody(const ParagraphRecord& p, const FrameProsody& fp);

// Paragraphs are taken as consecutive in manifest order.
PatternReport paragraph_pattern_analysis(const CorpusManifest& manifest, const FrameConfig& frame);
PatternReport pattern_report(const std::vector<std::vector<SentenceProsody>>& paragraphs);

// time_s, f0_hz (0 when unvoiced)
void write_pitch_contour_csv(const std::filesystem::path& path, const FrameProsody& fp);

}  // namespace paratts
