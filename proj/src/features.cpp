#include "paratts/features.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "paratts/array_io.hpp"
#include "paratts/error.hpp"
#include "paratts/wav.hpp"

namespace paratts {

using nlohmann::json;

Mat MelStats::normalize(const Mat& log_mel) const { return (log_mel.array() - mean) / std; }
Mat MelStats::denormalize(const Mat& normalized) const { return normalized.array() * std + mean; }

const ParagraphFeatures& FeatureSet::paragraph(std::string_view id) const {
  for (const auto& p : paragraphs)
    if (p.id == id) return p;
  throw ValidationError("no features for paragraph '" + std::string(id) + "'");
}

std::pair<Eigen::Index, Eigen::Index> frame_range(double start_s, double end_s, double hop_s,
                                                  Eigen::Index total) {
  auto first_at_or_after = [&](double t) {
    const auto i = static_cast<Eigen::Index>(std::ceil(t / hop_s - 1e-9));
    return std::clamp<Eigen::Index>(i, 0, total);
  };
  return {first_at_or_after(start_s), first_at_or_after(end_s)};
}

FeatureSet extract_features(const CorpusManifest& manifest, const FrameConfig& frame) {
  frame.validate();
  FeatureSet fs;
  fs.frame = frame;
  std::vector<ProsodyMatrix> train_prosody;
  double sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;
  for (const auto& p : manifest.paragraphs) {
    const Waveform wav = read_wav(p.audio_path);
    if (wav.sample_rate != frame.sample_rate)
      throw ValidationError("paragraph " + p.id + ": sample rate " + std::to_string(wav.sample_rate) +
                            " does not match the frame configuration");
    ParagraphFeatures f;
    f.id = p.id;
    f.mel = mel_spectrogram(wav, frame).frames;
    const auto spans = paragraph_phone_spans(p, manifest.symbols.boundary_id() >= 0);
    f.prosody = pool_to_phone(extract_frame_prosody(wav, frame), spans);
    if (p.split == Split::kTrain) {
      train_prosody.push_back(f.prosody);
      sum += f.mel.sum();
      sum_sq += f.mel.squaredNorm();
      count += static_cast<std::size_t>(f.mel.size());
    }
    fs.paragraphs.push_back(std::move(f));
  }
  if (train_prosody.empty()) throw ValidationError("feature extraction: the train split is empty");
  fs.prosody_stats = compute_prosody_stats(train_prosody);
  const double n = static_cast<double>(count);
  fs.mel_stats.mean = sum / n;
  fs.mel_stats.std = std::max(std::sqrt(std::max(sum_sq / n - fs.mel_stats.mean * fs.mel_stats.mean, 0.0)),
                              kProsodyStdFloor);
  return fs;
}

namespace {

json vec3(const Eigen::Vector3d& v) { return json::array({v[0], v[1], v[2]}); }

Eigen::Vector3d vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw IntegrityError("features.json: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void save_features(const std::filesystem::path& dir, const FeatureSet& fs) {
  std::filesystem::create_directories(dir);
  json j;
  const FrameConfig& f = fs.frame;
  j["frame"] = {{"sample_rate", f.sample_rate}, {"window_s", f.window_s},   {"hop_s", f.hop_s},
                {"n_fft", f.n_fft},             {"n_mels", f.n_mels},       {"fmin_hz", f.fmin_hz},
                {"fmax_hz", f.fmax_hz},         {"f0_min_hz", f.f0_min_hz}, {"f0_max_hz", f.f0_max_hz},
                {"voicing_threshold", f.voicing_threshold}, {"mel_floor", f.mel_floor}};
  j["mel_stats"] = {{"mean", fs.mel_stats.mean}, {"std", fs.mel_stats.std}};
  j["prosody_stats"] = {{"mean", vec3(fs.prosody_stats.mean)}, {"std", vec3(fs.prosody_stats.std)}};
  json paragraphs = json::array();
  for (const auto& p : fs.paragraphs) {
    std::vector<int> unvoiced;
    for (std::size_t i = 0; i < p.prosody.unvoiced.size(); ++i)
      if (p.prosody.unvoiced[i]) unvoiced.push_back(static_cast<int>(i));
    paragraphs.push_back({{"id", p.id}, {"unvoiced", unvoiced}});
    save_array(dir / (p.id + ".mel"), p.mel, "frame log-mel");
    save_array(dir / (p.id + ".prosody"), p.prosody.values, "phone raw");
  }
  j["paragraphs"] = paragraphs;
  std::ofstream out(dir / "features.json");
  if (!out) throw IoError("cannot write " + (dir / "features.json").string());
  out << j.dump(1) << '\n';
}

FeatureSet load_features(const std::filesystem::path& dir) {
  std::ifstream in(dir / "features.json");
  if (!in) throw IoError("cannot read " + (dir / "features.json").string());
  FeatureSet fs;
  try {
    const json j = json::parse(in);
    const json& f = j.at("frame");
    fs.frame.sample_rate = f.at("sample_rate");
    fs.frame.window_s = f.at("window_s");
    fs.frame.hop_s = f.at("hop_s");
    fs.frame.n_fft = f.at("n_fft");
    fs.frame.n_mels = f.at("n_mels");
    fs.frame.fmin_hz = f.at("fmin_hz");
    fs.frame.fmax_hz = f.at("fmax_hz");
    fs.frame.f0_min_hz = f.at("f0_min_hz");
    fs.frame.f0_max_hz = f.at("f0_max_hz");
    fs.frame.voicing_threshold = f.at("voicing_threshold");
    fs.frame.mel_floor = f.at("mel_floor");
    fs.mel_stats.mean = j.at("mel_stats").at("mean");
    fs.mel_stats.std = j.at("mel_stats").at("std");
    fs.prosody_stats.mean = vec3(j.at("prosody_stats").at("mean"));
    fs.prosody_stats.std = vec3(j.at("prosody_stats").at("std"));
    for (const json& jp : j.at("paragraphs")) {
      ParagraphFeatures p;
      p.id = jp.at("id");
      std::string level;
      p.mel = load_array(dir / (p.id + ".mel"), &level);
      if (p.mel.cols() != fs.frame.n_mels) throw IntegrityError(p.id + ".mel: wrong number of mel bins");
      p.prosody.values = load_array(dir / (p.id + ".prosody"), &level);
      if (p.prosody.values.cols() != 3) throw IntegrityError(p.id + ".prosody: expected 3 columns");
      p.prosody.unvoiced.assign(static_cast<std::size_t>(p.prosody.values.rows()), false);
      for (int i : jp.at("unvoiced").get<std::vector<int>>()) {
        if (i < 0 || i >= p.prosody.values.rows()) throw IntegrityError(p.id + ": unvoiced index out of range");
        p.prosody.unvoiced[static_cast<std::size_t>(i)] = true;
      }
      fs.paragraphs.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw IntegrityError("features.json: " + std::string(e.what()));
  }
  fs.frame.validate();
  return fs;
}

std::vector<TrainingExample> build_training_examples(const CorpusManifest& manifest, const FeatureSet& fs,
                                                     Split split) {
  const int boundary = manifest.symbols.boundary_id();
  std::vector<TrainingExample> out;
  for (const ParagraphRecord* p : manifest.split(split)) {
    const ParagraphFeatures& f = fs.paragraph(p->id);
    const PhonemeSequence seq = build_paragraph_sequence(*p, boundary);
    if (f.prosody.rows() != static_cast<Eigen::Index>(seq.size()))
      throw ValidationError("paragraph " + p->id + ": prosody rows do not match the paragraph sequence");
    const Mat prosody = normalize_prosody(f.prosody, fs.prosody_stats).values;
    const auto ranges = sentence_ranges(*p, boundary >= 0);
    const auto codes = sentence_position_codes(*p);
    for (std::size_t i = 0; i < p->sentences.size(); ++i) {
      TrainingExample ex;
      ex.paragraph_id = p->id;
      ex.sentence = static_cast<int>(i);
      const std::size_t begin = (i > 0 && boundary >= 0) ? ranges[i].begin - 1 : ranges[i].begin;
      const std::size_t n = ranges[i].end - begin;
      ex.query_ids.assign(seq.ids.begin() + static_cast<std::ptrdiff_t>(begin),
                          seq.ids.begin() + static_cast<std::ptrdiff_t>(ranges[i].end));
      ex.paragraph_ids = seq.ids;
      ex.paragraph_prosody = prosody;
      ex.prosody_target = prosody.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(n));
      ex.codes = {codes[i]};
      ex.phone_counts = {n};
      const double start = i > 0 ? p->sentences[i - 1].end_s() : p->sentences[i].start_s();
      const auto [a, b] = frame_range(start, p->sentences[i].end_s(), fs.frame.hop_s, f.mel.rows());
      if (b <= a) throw ValidationError("paragraph " + p->id + " sentence " + std::to_string(i) + ": no frames");
      ex.target_mel = fs.mel_stats.normalize(f.mel.middleRows(a, b - a));
      out.push_back(std::move(ex));
    }
  }
  return out;
}

ParagraphInput paragraph_input(const ParagraphRecord& p, const SymbolTable& symbols) {
  ParagraphInput in;
  in.ids = build_paragraph_sequence(p, symbols.boundary_id()).ids;
  in.codes = sentence_position_codes(p);
  for (std::size_t i = 0; i < p.sentences.size(); ++i)
    in.phone_counts.push_back(p.sentences[i].phonemes.size() + (i > 0 && symbols.boundary_id() >= 0 ? 1 : 0));
  return in;
}

Mat reference_mel(const ParagraphRecord& p, const ParagraphFeatures& f, double hop_s) {
  const auto [a, b] = frame_range(p.sentences.front().start_s(), p.sentences.back().end_s(), hop_s, f.mel.rows());
  return f.mel.middleRows(a, b - a);
}

}  // namespace paratts
