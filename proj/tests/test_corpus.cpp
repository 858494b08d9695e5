#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "doctest.h"
#include "paratts/corpus.hpp"
#include "paratts/error.hpp"
#include "paratts/signal.hpp"
#include "paratts/synth_corpus.hpp"
#include "paratts/wav.hpp"

using namespace paratts;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "paratts_test_corpus" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SentenceRecord sentence(std::vector<int> ids, double start, double phone_s = 0.1) {
  SentenceRecord s;
  s.phonemes.ids = std::move(ids);
  for (std::size_t i = 0; i < s.phonemes.size(); ++i)
    s.alignment.push_back({start + phone_s * i, start + phone_s * (i + 1)});
  s.syllables.push_back({0, static_cast<int>(s.phonemes.size())});
  return s;
}

SymbolTable abc_table() { return SymbolTable({"sil", "a", "b", "c", "d"}, "sil"); }

void write_manifest_text(const fs::path& dir, const std::string& body) {
  std::ofstream out(dir / "manifest.jsonl");
  out << R"({"symbols": ["sil", "a", "b", "c"], "boundary": "sil"})" << '\n' << body;
}

}  // namespace

TEST_CASE("build_paragraph_sequence inserts one boundary between sentences") {
  const auto t = abc_table();
  const int a = t.id("a"), b = t.id("b"), c = t.id("c"), d = t.id("d"), bd = t.boundary_id();

  ParagraphRecord p;
  p.id = "x";
  p.sentences = {sentence({a, b}, 0.0), sentence({c}, 0.5)};
  auto seq = build_paragraph_sequence(p, bd);
  CHECK(seq.ids == std::vector<int>{a, b, bd, c});
  CHECK(seq.size() == 4);

  ParagraphRecord single;
  single.sentences = {sentence({a, b}, 0.0)};
  CHECK(build_paragraph_sequence(single, bd).ids == std::vector<int>{a, b});

  ParagraphRecord three;
  three.sentences = {sentence({a, b}, 0.0), sentence({a, b, c}, 1.0), sentence({a, b, c, d}, 2.0)};
  CHECK(build_paragraph_sequence(three, bd).size() == 11);
  CHECK(build_paragraph_sequence(three, -1).size() == 9);

  ParagraphRecord empty;
  CHECK_THROWS_AS(build_paragraph_sequence(empty, bd), ValidationError);
}

TEST_CASE("sentence ranges of the paragraph sequence recover every sentence") {
  const auto t = abc_table();
  ParagraphRecord p;
  p.sentences = {sentence({1, 2}, 0.0), sentence({3, 1, 4}, 1.0), sentence({2}, 2.0)};
  for (bool with_boundary : {true, false}) {
    auto seq = build_paragraph_sequence(p, with_boundary ? t.boundary_id() : -1);
    auto ranges = sentence_ranges(p, with_boundary);
    REQUIRE(ranges.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<int> piece(seq.ids.begin() + ranges[i].begin, seq.ids.begin() + ranges[i].end);
      CHECK(piece == p.sentences[i].phonemes.ids);
    }
    CHECK(paragraph_phone_spans(p, with_boundary).size() == seq.size());
  }
  auto spans = paragraph_phone_spans(p, true);
  CHECK(spans[2].start_s == doctest::Approx(0.2));
  CHECK(spans[2].end_s == doctest::Approx(1.0));
}

TEST_CASE("sentence position codes") {
  auto codes = [](std::size_t n) {
    std::vector<int> out;
    for (auto c : sentence_position_codes(n)) out.push_back(c.code);
    return out;
  };
  CHECK(codes(4) == std::vector<int>{0, 1, 1, 2});
  CHECK(codes(2) == std::vector<int>{0, 2});
  CHECK(codes(1) == std::vector<int>{0});
  CHECK_THROWS_AS(sentence_position_codes(0), ValidationError);

  for (std::size_t n = 1; n <= 12; ++n) {
    auto cs = sentence_position_codes(n);
    CHECK(cs.size() == n);
    int zeros = 0, twos = 0;
    for (auto c : cs) {
      zeros += c.code == 0;
      twos += c.code == 2;
      auto oh = c.one_hot();
      CHECK(oh[0] + oh[1] + oh[2] == 1.0);
      CHECK(oh[static_cast<std::size_t>(c.code)] == 1.0);
    }
    CHECK(zeros == 1);
    CHECK(twos == (n >= 2 ? 1 : 0));
  }
}

TEST_CASE("load_manifest validation") {
  auto dir = temp_dir("manifest");
  fs::create_directories(dir / "wav");
  Waveform w;
  w.samples.assign(16000, 0.0);
  write_wav(dir / "wav" / "p1.wav", w);
  write_wav(dir / "wav" / "p2.wav", w);

  const std::string good1 =
      R"({"paragraph_id": "p1", "split": "train", "audio_path": "wav/p1.wav", "sample_rate": 16000, )"
      R"("sentences": [{"phonemes": ["a", "b"], "alignment": [[0.1, 0.2], [0.2, 0.3]], "syllables": [[0, 2]]},)"
      R"( {"phonemes": ["c"], "alignment": [[0.5, 0.6]], "syllables": [[0, 1]]}]})";
  const std::string good2 =
      R"({"paragraph_id": "p2", "split": "test", "audio_path": "wav/p2.wav", "sample_rate": 16000, )"
      R"("sentences": [{"phonemes": ["a"], "alignment": [[0.0, 0.2]], "syllables": [[0, 1]]}]})";

  SUBCASE("well-formed two-paragraph manifest") {
    write_manifest_text(dir, good1 + "\n" + good2 + "\n");
    auto m = load_manifest(dir / "manifest.jsonl");
    CHECK(m.paragraphs.size() == 2);
    CHECK(m.split(Split::kTest).size() == 1);
    CHECK(m.paragraph("p1").sentences.size() == 2);
    CHECK(fs::equivalent(m.paragraph("p1").audio_path, dir / "wav" / "p1.wav"));

    save_manifest(dir / "again.jsonl", m);
    auto m2 = load_manifest(dir / "again.jsonl");
    CHECK(m2.paragraphs.size() == 2);
    CHECK(m2.paragraph("p1").sentences[1].phonemes == m.paragraph("p1").sentences[1].phonemes);
    CHECK(m2.paragraph("p1").sentences[0].alignment[1].end_s == 0.3);
  }
  SUBCASE("missing audio file") {
    auto bad = good2;
    bad.replace(bad.find("wav/p2.wav"), 10, "wav/zz.wav");
    write_manifest_text(dir, bad + "\n");
    CHECK_THROWS_WITH_AS(load_manifest(dir / "manifest.jsonl"), doctest::Contains("p2"),
                         ValidationError);
    CHECK_NOTHROW(load_manifest(dir / "manifest.jsonl", false));
  }
  SUBCASE("overlapping phone alignment names the sentence") {
    auto bad = good1;
    bad.replace(bad.find("[0.5, 0.6]"), 10, "[0.25, 0.6]");
    write_manifest_text(dir, bad + "\n");
    CHECK_THROWS_WITH_AS(load_manifest(dir / "manifest.jsonl"),
                         doctest::Contains("paragraph p1 sentence 1"), ValidationError);
  }
  SUBCASE("duplicate ids, unknown symbols and bad syllables") {
    write_manifest_text(dir, good2 + "\n" + good2 + "\n");
    CHECK_THROWS_AS(load_manifest(dir / "manifest.jsonl"), ValidationError);
    auto unk = good2;
    unk.replace(unk.find("[\"a\"]"), 5, "[\"q\"]");
    write_manifest_text(dir, unk + "\n");
    CHECK_THROWS_AS(load_manifest(dir / "manifest.jsonl"), ValidationError);
    auto syl = good1;
    syl.replace(syl.find("[[0, 2]]"), 8, "[[0, 1]]");
    write_manifest_text(dir, syl + "\n");
    CHECK_THROWS_AS(load_manifest(dir / "manifest.jsonl"), ValidationError);
  }
  CHECK_THROWS_AS(load_manifest(dir / "nope.jsonl"), IoError);
}

TEST_CASE("corpus_stats on a single hand-built paragraph") {
  CorpusManifest m;
  m.symbols = abc_table();
  ParagraphRecord p;
  p.id = "only";
  p.sentences = {sentence({1, 2}, 0.0, 0.5), sentence({3, 4}, 1.5, 0.5)};
  m.paragraphs.push_back(p);
  auto r = corpus_stats(m);
  CHECK(r.paragraphs == 1);
  CHECK(r.sentences == 2);
  CHECK(r.sentences_per_paragraph.mean == 2.0);
  CHECK(r.sentence_duration_s.mean == doctest::Approx(1.0));
  CHECK(r.paragraph_duration_s.mean == doctest::Approx(2.5));
  CHECK(r.phones_as_characters);
  CHECK(r.to_key_value().find("character_unit = phones") != std::string::npos);
  CHECK(r.to_table().find("character substitute") != std::string::npos);
}

TEST_CASE("synthetic corpus generator") {
  SynthConfig cfg;
  cfg.paragraphs = 10;
  cfg.sentences_min = cfg.sentences_max = 3;
  cfg.phones_min = 3;
  cfg.phones_max = 5;
  cfg.declination_hz = -2.0;
  cfg.reset_hz = 0.0;
  cfg.test_paragraphs = 2;

  auto a = generate_synthetic_corpus(cfg, 7, temp_dir("gen_a"));
  auto b = generate_synthetic_corpus(cfg, 7, temp_dir("gen_b"));

  SUBCASE("counts") {
    CHECK(a.manifest.paragraphs.size() == 10);
    std::size_t sentences = 0;
    for (const auto& p : a.manifest.paragraphs) sentences += p.sentences.size();
    CHECK(sentences == 30);
    CHECK(a.manifest.split(Split::kTest).size() == 2);
    CHECK(a.manifest.split(Split::kTrain).size() == 8);
  }

  SUBCASE("seed 7 twice gives byte-identical files") {
    CHECK(slurp(a.manifest_path) == slurp(b.manifest_path));
    for (std::size_t i = 0; i < a.manifest.paragraphs.size(); ++i)
      CHECK(slurp(a.manifest.paragraphs[i].audio_path) == slurp(b.manifest.paragraphs[i].audio_path));
    auto c = generate_synthetic_corpus(cfg, 8, temp_dir("gen_c"));
    CHECK(slurp(a.manifest_path) != slurp(c.manifest_path));
  }

  SUBCASE("the written manifest loads and validates") {
    auto m = load_manifest(a.manifest_path);
    CHECK(m.paragraphs.size() == 10);
    CHECK(m.symbols.size() == cfg.symbols + 1);
  }

  SUBCASE("declination of -2 Hz per sentence shows in the trace") {
    for (const auto& p : a.trace.paragraphs) {
      REQUIRE(p.sentences.size() == 3);
      CHECK(p.sentences[0].f0_hz - p.sentences[2].f0_hz == doctest::Approx(4.0));
    }
  }

  SUBCASE("declination is measurable in the rendered audio") {
    FrameConfig fc;
    double gap = 0.0;
    double expected = 0.0;
    for (std::size_t pi = 0; pi < a.manifest.paragraphs.size(); ++pi) {
      const auto& p = a.manifest.paragraphs[pi];
      const auto& tp = a.trace.paragraphs[pi];
      auto fp = extract_frame_prosody(read_wav(p.audio_path), fc);
      double mean_f0[3];
      double trace_f0[3];
      for (int s : {0, 2}) {
        auto pm = pool_to_phone(fp, p.sentences[s].alignment);
        double sum = 0.0, tsum = 0.0;
        for (Eigen::Index i = 0; i < pm.rows(); ++i) {
          sum += std::exp(pm.values(i, kLf0));
          tsum += tp.sentences[s].phones[i].f0_hz;
        }
        mean_f0[s] = sum / pm.rows();
        trace_f0[s] = tsum / pm.rows();
      }
      gap += mean_f0[0] - mean_f0[2];
      expected += trace_f0[0] - trace_f0[2];
    }
    gap /= 10.0;
    expected /= 10.0;
    CHECK(gap == doctest::Approx(expected).epsilon(0.15));
  }

  SUBCASE("stats match the generator trace") {
    auto r = corpus_stats(a.manifest);
    double phones = 0.0, dur = 0.0, pdur = 0.0;
    std::size_t sentences = 0;
    for (const auto& p : a.trace.paragraphs) {
      for (const auto& s : p.sentences) {
        phones += static_cast<double>(s.phones.size());
        dur += s.phones.back().end_s - s.phones.front().start_s;
        ++sentences;
      }
      pdur += p.sentences.back().phones.back().end_s - p.sentences.front().phones.front().start_s;
    }
    CHECK(r.sentences == sentences);
    CHECK(r.characters_per_sentence.mean == doctest::Approx(phones / sentences).epsilon(1e-12));
    CHECK(r.characters_per_paragraph.mean == doctest::Approx(phones / 10.0).epsilon(1e-12));
    CHECK(r.sentence_duration_s.mean == doctest::Approx(dur / sentences).epsilon(1e-12));
    CHECK(r.paragraph_duration_s.mean == doctest::Approx(pdur / 10.0).epsilon(1e-12));
    CHECK(r.characters_per_sentence.min >= cfg.phones_min);
    CHECK(r.characters_per_sentence.max <= cfg.phones_max);
  }
}

TEST_CASE("synthetic config validation") {
  SynthConfig cfg;
  cfg.sentences_min = 4;
  cfg.sentences_max = 2;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = SynthConfig{};
  cfg.phones_min = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = SynthConfig{};
  cfg.test_paragraphs = 99;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
