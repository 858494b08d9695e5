#pragma once

// Acoustic features for a whole corpus: per-paragraph log-mel frames and
// phone-level prosody over the paragraph sequence, the normalisation
// statistics of the training split, and the sentence-level training examples
// cut from them.

#include <filesystem>
#include <string>
#include <vector>

#include "paratts/corpus.hpp"
#include "paratts/model_config.hpp"

namespace paratts {

// Single scalar mean/std over every training log-mel entry.
struct MelStats {
  double mean = 0.0;
  double std = 1.0;

  Mat normalize(const Mat& log_mel) const;
  Mat denormalize(const Mat& normalized) const;
};

struct ParagraphFeatures {
  std::string id;
  Mat mel;                // T x n_mels, natural-log mel power
  ProsodyMatrix prosody;  // raw, one row per paragraph-sequence element
};

struct FeatureSet {
  FrameConfig frame;
  MelStats mel_stats;
  ProsodyStats prosody_stats;
  std::vector<ParagraphFeatures> paragraphs;  // manifest order

  const ParagraphFeatures& paragraph(std::string_view id) const;
};

// Stats use the train split only.
FeatureSet extract_features(const CorpusManifest& manifest, const FrameConfig& frame);

// Directory layout: features.json plus <id>.mel and <id>.prosody arrays.
void save_features(const std::filesystem::path& dir, const FeatureSet& fs);
FeatureSet load_features(const std::filesystem::path& dir);

// Frame index range [begin, end) whose centres fall in [start_s, end_s).
std::pair<Eigen::Index, Eigen::Index> frame_range(double start_s, double end_s, double hop_s,
                                                  Eigen::Index total);

// One training sentence in its paragraph context. Sentences after the first
// carry the boundary symbol that precedes them, and their audio starts where
// the previous sentence ended, so the pause is learnt.
struct TrainingExample {
  std::string paragraph_id;
  int sentence = 0;
  std::vector<int> query_ids;
  std::vector<int> paragraph_ids;
  Mat paragraph_prosody;  // m x 3, normalised
  Mat prosody_target;     // query rows of paragraph_prosody
  std::vector<PositionCode> codes;         // one entry
  std::vector<std::size_t> phone_counts;   // {query length}
  Mat target_mel;         // normalised frames
};

std::vector<TrainingExample> build_training_examples(const CorpusManifest& manifest, const FeatureSet& fs,
                                                     Split split);

// What synthesis needs for a whole paragraph.
struct ParagraphInput {
  std::vector<int> ids;
  std::vector<PositionCode> codes;
  std::vector<std::size_t> phone_counts;  // sentence i > 0 includes its boundary
};

ParagraphInput paragraph_input(const ParagraphRecord& p, const SymbolTable& symbols);

// Reference frames of a paragraph: first phone onset to last phone offset.
Mat reference_mel(const ParagraphRecord& p, const ParagraphFeatures& f, double hop_s);

}  // namespace paratts
