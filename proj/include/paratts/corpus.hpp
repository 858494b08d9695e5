#pragma once

// Paragraph/sentence data model, the JSON-lines manifest, paragraph phoneme
// sequences with inter-sentence boundary symbols, sentence-position codes and
// corpus statistics.

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "paratts/signal.hpp"

namespace paratts {

struct PhonemeSequence {
  std::vector<int> ids;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const PhonemeSequence&) const = default;
};

class SymbolTable {
 public:
  SymbolTable() = default;
  // `boundary` must be one of `symbols`, or empty for no boundary symbol.
  SymbolTable(std::vector<std::string> symbols, std::string boundary);

  int id(std::string_view symbol) const;  // throws ValidationError if unknown
  const std::string& symbol(int id) const;
  bool contains(int id) const { return id >= 0 && id < size(); }
  int size() const { return static_cast<int>(symbols_.size()); }
  int boundary_id() const { return boundary_id_; }
  const std::vector<std::string>& symbols() const { return symbols_; }

  PhonemeSequence encode(const std::vector<std::string>& symbols) const;

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
  int boundary_id_ = -1;
};

enum class Split { kTrain, kTest };

std::string_view split_name(Split s);

// Half-open phone index range [begin, end).
struct SyllableSpan {
  int begin = 0;
  int end = 0;
};

struct SentenceRecord {
  PhonemeSequence phonemes;
  int char_count = 0;  // 0 when unknown
  std::vector<PhoneSpan> alignment;  // seconds within the paragraph audio
  std::vector<SyllableSpan> syllables;

  double start_s() const { return alignment.front().start_s; }
  double end_s() const { return alignment.back().end_s; }
};

struct ParagraphRecord {
  std::string id;
  Split split = Split::kTrain;
  std::filesystem::path audio_path;  // absolute once loaded
  int sample_rate = 16000;
  std::vector<SentenceRecord> sentences;
};

struct CorpusManifest {
  SymbolTable symbols;
  std::vector<ParagraphRecord> paragraphs;

  std::vector<const ParagraphRecord*> split(Split s) const;
  const ParagraphRecord& paragraph(std::string_view id) const;
};

// Checks every paragraph invariant; errors name the paragraph and sentence.
void validate_paragraph(const ParagraphRecord& p, const SymbolTable& symbols);

// Line 1 holds {"symbols": [...], "boundary": "<sym>"}; each further line is
// one paragraph record. Audio paths are resolved relative to the manifest.
CorpusManifest load_manifest(const std::filesystem::path& path, bool check_files = true);
void save_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);

// Sentence sequences concatenated in order with `boundary_id` inserted
// between consecutive sentences; boundary_id < 0 disables insertion.
PhonemeSequence build_paragraph_sequence(const ParagraphRecord& p, int boundary_id);

// Where sentence i lives inside build_paragraph_sequence(p, boundary).
struct SequenceRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
};
std::vector<SequenceRange> sentence_ranges(const ParagraphRecord& p, bool with_boundary);

// Time span of every element of the paragraph sequence; a boundary symbol
// covers the pause between the sentences it separates.
std::vector<PhoneSpan> paragraph_phone_spans(const ParagraphRecord& p, bool with_boundary);

struct PositionCode {
  static constexpr int kFirst = 0;
  static constexpr int kMiddle = 1;
  static constexpr int kLast = 2;

  int code = kFirst;

  std::array<double, 3> one_hot() const;
  bool operator==(const PositionCode&) const = default;
};

// First sentence 0, last 2, interior 1; a lone sentence takes 0.
std::vector<PositionCode> sentence_position_codes(std::size_t sentence_count);
std::vector<PositionCode> sentence_position_codes(const ParagraphRecord& p);

struct Distribution {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
  std::map<double, std::size_t> histogram;  // bin lower edge -> count
};

struct StatsReport {
  std::size_t paragraphs = 0;
  std::size_t sentences = 0;
  // True when the manifest carries no character counts and phones are used.
  bool phones_as_characters = true;
  Distribution sentences_per_paragraph;
  Distribution characters_per_sentence;
  Distribution characters_per_paragraph;
  Distribution sentence_duration_s;
  Distribution paragraph_duration_s;

  std::string to_key_value() const;
  std::string to_table() const;
};

StatsReport corpus_stats(const CorpusManifest& manifest);

}  // namespace paratts
