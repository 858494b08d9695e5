#include "paratts/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "paratts/error.hpp"

namespace paratts {

using nlohmann::json;

// ---------------------------------------------------------------------------
// SymbolTable

SymbolTable::SymbolTable(std::vector<std::string> symbols, std::string boundary)
    : symbols_(std::move(symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i].empty()) throw ValidationError("symbol table contains an empty symbol");
    if (!index_.emplace(symbols_[i], static_cast<int>(i)).second)
      throw ValidationError("duplicate symbol in symbol table: " + symbols_[i]);
  }
  if (!boundary.empty()) boundary_id_ = id(boundary);
}

int SymbolTable::id(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  if (it == index_.end()) throw ValidationError("unknown phoneme symbol: " + std::string(symbol));
  return it->second;
}

const std::string& SymbolTable::symbol(int id) const {
  if (!contains(id)) throw ValidationError("phoneme id out of range: " + std::to_string(id));
  return symbols_[id];
}

PhonemeSequence SymbolTable::encode(const std::vector<std::string>& symbols) const {
  PhonemeSequence seq;
  seq.ids.reserve(symbols.size());
  for (const auto& s : symbols) seq.ids.push_back(id(s));
  return seq;
}

std::string_view split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

std::vector<const ParagraphRecord*> CorpusManifest::split(Split s) const {
  std::vector<const ParagraphRecord*> out;
  for (const auto& p : paragraphs)
    if (p.split == s) out.push_back(&p);
  return out;
}

const ParagraphRecord& CorpusManifest::paragraph(std::string_view id) const {
  for (const auto& p : paragraphs)
    if (p.id == id) return p;
  throw ValidationError("no paragraph with id " + std::string(id));
}

// ---------------------------------------------------------------------------
// validation

void validate_paragraph(const ParagraphRecord& p, const SymbolTable& symbols) {
  if (p.id.empty()) throw ValidationError("paragraph with empty paragraph_id");
  if (p.sentences.empty()) throw ValidationError("paragraph " + p.id + ": no sentences");
  if (p.sample_rate <= 0) throw ValidationError("paragraph " + p.id + ": bad sample_rate");
  double prev_end = -1e300;
  for (std::size_t k = 0; k < p.sentences.size(); ++k) {
    const SentenceRecord& s = p.sentences[k];
    const std::string where = "paragraph " + p.id + " sentence " + std::to_string(k);
    if (s.phonemes.empty()) throw ValidationError(where + ": empty phoneme sequence");
    for (int id : s.phonemes.ids) {
      if (!symbols.contains(id)) throw ValidationError(where + ": phoneme id out of range");
      if (id == symbols.boundary_id())
        throw ValidationError(where + ": boundary symbol inside a sentence");
    }
    if (s.alignment.size() != s.phonemes.size())
      throw ValidationError(where + ": alignment has " + std::to_string(s.alignment.size()) +
                            " spans for " + std::to_string(s.phonemes.size()) + " phonemes");
    for (std::size_t i = 0; i < s.alignment.size(); ++i) {
      const PhoneSpan& a = s.alignment[i];
      if (!(a.end_s > a.start_s) || a.start_s < 0.0)
        throw ValidationError(where + ": phone " + std::to_string(i) + " has an empty or negative span");
      if (a.start_s < prev_end - 1e-9)
        throw ValidationError(where + ": phone " + std::to_string(i) +
                              " overlaps the previous phone alignment");
      prev_end = a.end_s;
    }
    int expect = 0;
    for (const SyllableSpan& sy : s.syllables) {
      if (sy.begin != expect || sy.end <= sy.begin)
        throw ValidationError(where + ": syllable spans do not partition the phones");
      expect = sy.end;
    }
    if (expect != static_cast<int>(s.phonemes.size()))
      throw ValidationError(where + ": syllable spans do not cover every phone");
    if (s.char_count < 0) throw ValidationError(where + ": negative char_count");
  }
}

// ---------------------------------------------------------------------------
// manifest I/O

namespace {

ParagraphRecord parse_paragraph(const json& j, const SymbolTable& symbols,
                                const std::filesystem::path& root) {
  ParagraphRecord p;
  p.id = j.at("paragraph_id").get<std::string>();
  const auto split = j.at("split").get<std::string>();
  if (split == "train") p.split = Split::kTrain;
  else if (split == "test") p.split = Split::kTest;
  else throw ValidationError("paragraph " + p.id + ": split must be train or test");
  p.audio_path = root / j.at("audio_path").get<std::string>();
  p.sample_rate = j.at("sample_rate").get<int>();
  for (const json& js : j.at("sentences")) {
    SentenceRecord s;
    s.phonemes = symbols.encode(js.at("phonemes").get<std::vector<std::string>>());
    for (const json& a : js.at("alignment")) {
      if (!a.is_array() || a.size() != 2) throw ValidationError("paragraph " + p.id + ": bad alignment pair");
      s.alignment.push_back({a[0].get<double>(), a[1].get<double>()});
    }
    for (const json& sy : js.at("syllables")) {
      if (!sy.is_array() || sy.size() != 2) throw ValidationError("paragraph " + p.id + ": bad syllable span");
      s.syllables.push_back({sy[0].get<int>(), sy[1].get<int>()});
    }
    s.char_count = js.value("char_count", 0);
    p.sentences.push_back(std::move(s));
  }
  return p;
}

}  // namespace

CorpusManifest load_manifest(const std::filesystem::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  const auto root = path.parent_path();
  CorpusManifest m;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      if (!header) {
        m.symbols = SymbolTable(j.at("symbols").get<std::vector<std::string>>(),
                                j.value("boundary", std::string()));
        header = true;
        continue;
      }
      ParagraphRecord p = parse_paragraph(j, m.symbols, root);
      validate_paragraph(p, m.symbols);
      if (!ids.insert(p.id).second) throw ValidationError("duplicate paragraph_id " + p.id);
      if (check_files && !std::filesystem::exists(p.audio_path))
        throw ValidationError("paragraph " + p.id + ": audio file " + p.audio_path.string() +
                              " does not exist");
      m.paragraphs.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header) throw ValidationError(path.string() + ": missing symbol-table header line");
  return m;
}

void save_manifest(const std::filesystem::path& path, const CorpusManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const auto root = path.parent_path();
  json header;
  header["symbols"] = manifest.symbols.symbols();
  header["boundary"] = manifest.symbols.boundary_id() >= 0
                           ? manifest.symbols.symbol(manifest.symbols.boundary_id())
                           : std::string();
  out << header.dump() << '\n';
  for (const auto& p : manifest.paragraphs) {
    json j;
    j["paragraph_id"] = p.id;
    j["split"] = std::string(split_name(p.split));
    j["audio_path"] = p.audio_path.is_absolute()
                          ? std::filesystem::relative(p.audio_path, root).generic_string()
                          : p.audio_path.generic_string();
    j["sample_rate"] = p.sample_rate;
    json sentences = json::array();
    for (const auto& s : p.sentences) {
      json js;
      std::vector<std::string> syms;
      for (int id : s.phonemes.ids) syms.push_back(manifest.symbols.symbol(id));
      js["phonemes"] = syms;
      json align = json::array();
      for (const auto& a : s.alignment) align.push_back({a.start_s, a.end_s});
      js["alignment"] = align;
      json syl = json::array();
      for (const auto& sy : s.syllables) syl.push_back({sy.begin, sy.end});
      js["syllables"] = syl;
      if (s.char_count > 0) js["char_count"] = s.char_count;
      sentences.push_back(std::move(js));
    }
    j["sentences"] = std::move(sentences);
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// sequences and positions

PhonemeSequence build_paragraph_sequence(const ParagraphRecord& p, int boundary_id) {
  if (p.sentences.empty()) throw ValidationError("paragraph " + p.id + ": no sentences");
  PhonemeSequence seq;
  for (std::size_t k = 0; k < p.sentences.size(); ++k) {
    if (p.sentences[k].phonemes.empty())
      throw ValidationError("paragraph " + p.id + " sentence " + std::to_string(k) +
                            ": empty phoneme sequence");
    if (k > 0 && boundary_id >= 0) seq.ids.push_back(boundary_id);
    const auto& ids = p.sentences[k].phonemes.ids;
    seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
  }
  return seq;
}

std::vector<SequenceRange> sentence_ranges(const ParagraphRecord& p, bool with_boundary) {
  std::vector<SequenceRange> out;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < p.sentences.size(); ++k) {
    if (k > 0 && with_boundary) ++pos;
    out.push_back({pos, pos + p.sentences[k].phonemes.size()});
    pos = out.back().end;
  }
  return out;
}

std::vector<PhoneSpan> paragraph_phone_spans(const ParagraphRecord& p, bool with_boundary) {
  std::vector<PhoneSpan> out;
  for (std::size_t k = 0; k < p.sentences.size(); ++k) {
    if (k > 0 && with_boundary) out.push_back({p.sentences[k - 1].end_s(), p.sentences[k].start_s()});
    const auto& a = p.sentences[k].alignment;
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

std::array<double, 3> PositionCode::one_hot() const {
  std::array<double, 3> v{0.0, 0.0, 0.0};
  v.at(static_cast<std::size_t>(code)) = 1.0;
  return v;
}

std::vector<PositionCode> sentence_position_codes(std::size_t sentence_count) {
  if (sentence_count == 0) throw ValidationError("sentence_position_codes: no sentences");
  std::vector<PositionCode> codes(sentence_count, PositionCode{PositionCode::kMiddle});
  codes.back().code = PositionCode::kLast;
  codes.front().code = PositionCode::kFirst;
  return codes;
}

std::vector<PositionCode> sentence_position_codes(const ParagraphRecord& p) {
  return sentence_position_codes(p.sentences.size());
}

// ---------------------------------------------------------------------------
// statistics

namespace {

Distribution summarize(const std::vector<double>& xs, double bin_width) {
  Distribution d;
  d.count = xs.size();
  if (xs.empty()) return d;
  d.min = *std::min_element(xs.begin(), xs.end());
  d.max = *std::max_element(xs.begin(), xs.end());
  double sum = 0.0;
  for (double x : xs) {
    sum += x;
    d.histogram[std::floor(x / bin_width + 1e-9) * bin_width] += 1;
  }
  d.mean = sum / static_cast<double>(xs.size());
  return d;
}

void put_dist(std::ostringstream& os, const std::string& key, const Distribution& d) {
  os << key << ".mean = " << d.mean << '\n'
     << key << ".min = " << d.min << '\n'
     << key << ".max = " << d.max << '\n'
     << key << ".count = " << d.count << '\n';
  for (const auto& [edge, n] : d.histogram) os << key << ".hist." << edge << " = " << n << '\n';
}

}  // namespace

StatsReport corpus_stats(const CorpusManifest& manifest) {
  StatsReport r;
  r.paragraphs = manifest.paragraphs.size();
  bool all_chars = true;
  for (const auto& p : manifest.paragraphs)
    for (const auto& s : p.sentences) all_chars = all_chars && s.char_count > 0;
  r.phones_as_characters = !all_chars || manifest.paragraphs.empty();

  std::vector<double> spp, cps, cpp, sdur, pdur;
  for (const auto& p : manifest.paragraphs) {
    spp.push_back(static_cast<double>(p.sentences.size()));
    double chars = 0.0;
    for (const auto& s : p.sentences) {
      const double c = r.phones_as_characters ? static_cast<double>(s.phonemes.size())
                                              : static_cast<double>(s.char_count);
      cps.push_back(c);
      chars += c;
      sdur.push_back(s.end_s() - s.start_s());
      ++r.sentences;
    }
    cpp.push_back(chars);
    pdur.push_back(p.sentences.back().end_s() - p.sentences.front().start_s());
  }
  r.sentences_per_paragraph = summarize(spp, 1.0);
  r.characters_per_sentence = summarize(cps, 1.0);
  r.characters_per_paragraph = summarize(cpp, 5.0);
  r.sentence_duration_s = summarize(sdur, 0.5);
  r.paragraph_duration_s = summarize(pdur, 0.5);
  return r;
}

std::string StatsReport::to_key_value() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "paragraphs = " << paragraphs << '\n'
     << "sentences = " << sentences << '\n'
     << "character_unit = " << (phones_as_characters ? "phones" : "characters") << '\n';
  put_dist(os, "sentences_per_paragraph", sentences_per_paragraph);
  put_dist(os, "characters_per_sentence", characters_per_sentence);
  put_dist(os, "characters_per_paragraph", characters_per_paragraph);
  put_dist(os, "sentence_duration_s", sentence_duration_s);
  put_dist(os, "paragraph_duration_s", paragraph_duration_s);
  return os.str();
}

std::string StatsReport::to_table() const {
  const std::string unit = phones_as_characters ? "phones (character substitute)" : "characters";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "paragraphs: " << paragraphs << "   sentences: " << sentences << "\n\n";
  os << std::left << std::setw(44) << "quantity" << std::right << std::setw(10) << "mean"
     << std::setw(10) << "min" << std::setw(10) << "max" << '\n';
  auto row = [&](const std::string& name, const Distribution& d) {
    os << std::left << std::setw(44) << name << std::right << std::setw(10) << d.mean
       << std::setw(10) << d.min << std::setw(10) << d.max << '\n';
  };
  row("sentences per paragraph", sentences_per_paragraph);
  row(unit + " per sentence", characters_per_sentence);
  row(unit + " per paragraph", characters_per_paragraph);
  row("sentence duration (s)", sentence_duration_s);
  row("paragraph duration (s)", paragraph_duration_s);
  return os.str();
}

}  // namespace paratts
