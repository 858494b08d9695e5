#include <filesystem>

#include "doctest.h"
#include "paratts/error.hpp"
#include "paratts/features.hpp"
#include "paratts/synth_corpus.hpp"

using namespace paratts;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "paratts_test_features" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SynthCorpus small_corpus(const std::string& name) {
  SynthConfig cfg;
  cfg.paragraphs = 3;
  cfg.test_paragraphs = 1;
  cfg.sentences_min = 1;
  cfg.sentences_max = 3;
  return generate_synthetic_corpus(cfg, 5, temp_dir(name));
}

}  // namespace

TEST_CASE("frame ranges follow frame centres") {
  CHECK(frame_range(0.0, 0.05, 0.0125, 100) == std::pair<Eigen::Index, Eigen::Index>{0, 4});
  CHECK(frame_range(0.01, 0.0375, 0.0125, 100) == std::pair<Eigen::Index, Eigen::Index>{1, 3});
  CHECK(frame_range(0.5, 9.0, 0.0125, 50) == std::pair<Eigen::Index, Eigen::Index>{40, 50});
}

TEST_CASE("feature extraction, storage and training examples") {
  const SynthCorpus c = small_corpus("extract");
  const CorpusManifest& m = c.manifest;
  FrameConfig frame;
  const FeatureSet f = extract_features(m, frame);
  REQUIRE(f.paragraphs.size() == 3);

  for (const auto& p : m.paragraphs) {
    const auto& pf = f.paragraph(p.id);
    CHECK(pf.mel.cols() == 80);
    CHECK(pf.prosody.rows() == static_cast<Eigen::Index>(build_paragraph_sequence(p, m.symbols.boundary_id()).size()));
    CHECK(pf.mel.allFinite());
  }

  SUBCASE("normalised train prosody has zero mean and unit variance") {
    std::vector<ProsodyMatrix> norm;
    for (const auto* p : m.split(Split::kTrain)) norm.push_back(normalize_prosody(f.paragraph(p->id).prosody, f.prosody_stats));
    for (int col = 1; col < 3; ++col) {
      double s = 0.0, sq = 0.0, n = 0.0;
      for (const auto& pm : norm)
        for (Eigen::Index r = 0; r < pm.rows(); ++r) {
          s += pm.values(r, col);
          sq += pm.values(r, col) * pm.values(r, col);
          n += 1.0;
        }
      CHECK(std::abs(s / n) < 1e-9);
      CHECK(std::abs(sq / n - 1.0) < 1e-9);
    }
    double s = 0.0, n = 0.0;
    for (const auto* p : m.split(Split::kTrain)) {
      const auto& mel = f.paragraph(p->id).mel;
      s += f.mel_stats.normalize(mel).sum();
      n += static_cast<double>(mel.size());
    }
    CHECK(std::abs(s / n) < 1e-9);
  }

  SUBCASE("save and load round-trip bit for bit") {
    const auto dir = temp_dir("saved");
    save_features(dir, f);
    const FeatureSet g = load_features(dir);
    CHECK(g.mel_stats.mean == f.mel_stats.mean);
    CHECK(g.mel_stats.std == f.mel_stats.std);
    CHECK(g.prosody_stats.mean == f.prosody_stats.mean);
    CHECK(g.prosody_stats.std == f.prosody_stats.std);
    CHECK(g.frame.hop_s == f.frame.hop_s);
    REQUIRE(g.paragraphs.size() == f.paragraphs.size());
    for (std::size_t i = 0; i < g.paragraphs.size(); ++i) {
      CHECK(g.paragraphs[i].mel == f.paragraphs[i].mel);
      CHECK(g.paragraphs[i].prosody.values == f.paragraphs[i].prosody.values);
      CHECK(g.paragraphs[i].prosody.unvoiced == f.paragraphs[i].prosody.unvoiced);
    }
    fs::remove(dir / "features.json");
    CHECK_THROWS_AS(load_features(dir), IoError);
  }

  SUBCASE("training examples") {
    const auto ex = build_training_examples(m, f, Split::kTrain);
    std::size_t expected = 0;
    for (const auto* p : m.split(Split::kTrain)) expected += p->sentences.size();
    REQUIRE(ex.size() == expected);
    const int sil = m.symbols.boundary_id();
    for (const auto& e : ex) {
      const auto& p = m.paragraph(e.paragraph_id);
      const auto& s = p.sentences[static_cast<std::size_t>(e.sentence)];
      CHECK(e.query_ids.size() == s.phonemes.size() + (e.sentence > 0 ? 1 : 0));
      if (e.sentence > 0) CHECK(e.query_ids.front() == sil);
      CHECK(std::equal(s.phonemes.ids.begin(), s.phonemes.ids.end(), e.query_ids.end() - static_cast<std::ptrdiff_t>(s.phonemes.size())));
      CHECK(e.prosody_target.rows() == static_cast<Eigen::Index>(e.query_ids.size()));
      CHECK(e.paragraph_prosody.rows() == static_cast<Eigen::Index>(e.paragraph_ids.size()));
      CHECK(e.phone_counts == std::vector<std::size_t>{e.query_ids.size()});
      CHECK(e.codes[0] == sentence_position_codes(p)[static_cast<std::size_t>(e.sentence)]);
      const double start = e.sentence > 0 ? p.sentences[static_cast<std::size_t>(e.sentence) - 1].end_s() : s.start_s();
      const double secs = s.end_s() - start;
      CHECK(std::abs(static_cast<double>(e.target_mel.rows()) - secs / f.frame.hop_s) <= 1.0);
    }
    CHECK(build_training_examples(m, f, Split::kTest).size() == m.split(Split::kTest).front()->sentences.size());
  }

  SUBCASE("paragraph input") {
    for (const auto& p : m.paragraphs) {
      const ParagraphInput in = paragraph_input(p, m.symbols);
      std::size_t total = 0;
      for (auto n : in.phone_counts) total += n;
      CHECK(total == in.ids.size());
      CHECK(in.codes.size() == p.sentences.size());
      const Mat ref = reference_mel(p, f.paragraph(p.id), f.frame.hop_s);
      CHECK(std::abs(static_cast<double>(ref.rows()) - (p.sentences.back().end_s() - p.sentences.front().start_s()) / f.frame.hop_s) <= 1.0);
    }
  }
}

TEST_CASE("extraction rejects a sample-rate mismatch") {
  const SynthCorpus c = small_corpus("rate");
  FrameConfig frame;
  frame.sample_rate = 22050;
  frame.fmax_hz = 8000.0;
  CHECK_THROWS_AS(extract_features(c.manifest, frame), ValidationError);
}
