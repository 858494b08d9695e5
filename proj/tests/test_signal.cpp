#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "paratts/array_io.hpp"
#include "paratts/error.hpp"
#include "paratts/signal.hpp"
#include "paratts/wav.hpp"

using namespace paratts;

namespace {

Waveform sine(double hz, double amplitude, double seconds, int sr = 16000) {
  Waveform w;
  w.sample_rate = sr;
  const auto n = static_cast<std::size_t>(seconds * sr);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / sr);
  return w;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "paratts_test_signal";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("mel of one second of silence is 80 floor frames") {
  FrameConfig cfg;
  Waveform w;
  w.samples.assign(16000, 0.0);
  auto mel = mel_spectrogram(w, cfg);
  CHECK(mel.frames.rows() == 80);
  CHECK(mel.frames.cols() == 80);
  CHECK(mel.frames.maxCoeff() == std::log(1e-10));
  CHECK(mel.frames.minCoeff() == std::log(1e-10));
}

TEST_CASE("440 Hz tone peaks in the mel bin whose filter responds most at 440 Hz") {
  FrameConfig cfg;
  MelFilterbank fb(cfg);
  // Filter response at exactly 440 Hz, evaluated from the filter edges.
  int expected = 0;
  double best = -1.0;
  const auto& c = fb.center_hz();
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = m == 0 ? cfg.fmin_hz : c[m - 1];
    const double right = m + 1 < cfg.n_mels ? c[m + 1] : cfg.fmax_hz;
    double w = 0.0;
    if (440.0 > left && 440.0 <= c[m]) w = (440.0 - left) / (c[m] - left);
    else if (440.0 > c[m] && 440.0 < right) w = (right - 440.0) / (right - c[m]);
    if (w > best) {
      best = w;
      expected = m;
    }
  }
  auto mel = mel_spectrogram(sine(440.0, 0.5, 0.5), cfg);
  for (Eigen::Index t = 0; t < mel.frames.rows(); ++t) {
    Eigen::Index arg;
    mel.frames.row(t).maxCoeff(&arg);
    CHECK(arg == expected);
  }
}

TEST_CASE("doubling amplitude adds log(4) to every mel entry above the floor") {
  FrameConfig cfg;
  auto a = mel_spectrogram(sine(300.0, 0.1, 0.4), cfg);
  auto b = mel_spectrogram(sine(300.0, 0.2, 0.4), cfg);
  int checked = 0;
  for (Eigen::Index i = 0; i < a.frames.size(); ++i) {
    if (a.frames.data()[i] <= std::log(1e-10) + 1.0) continue;
    CHECK(b.frames.data()[i] - a.frames.data()[i] == doctest::Approx(std::log(4.0)).epsilon(1e-9));
    ++checked;
  }
  CHECK(checked > 1000);
}

TEST_CASE("mel_spectrogram rejects empty input and sample-rate mismatch") {
  FrameConfig cfg;
  Waveform empty;
  CHECK_THROWS_AS(mel_spectrogram(empty, cfg), ValidationError);
  CHECK_THROWS_AS(mel_spectrogram(sine(200, 0.1, 0.1, 22050), cfg), ValidationError);
}

TEST_CASE("autocorrelation F0 tracks a 220 Hz sine") {
  FrameConfig cfg;
  auto fp = extract_frame_prosody(sine(220.0, 0.3, 1.0), cfg);
  int good = 0, interior = 0;
  for (std::size_t t = 4; t + 4 < fp.size(); ++t) {
    ++interior;
    if (fp.voiced[t] && std::abs(fp.f0_hz[t] - 220.0) <= 2.0) ++good;
  }
  CHECK(good >= 0.95 * interior);
}

TEST_CASE("silence is unvoiced at the intensity floor") {
  FrameConfig cfg;
  Waveform w;
  w.samples.assign(8000, 0.0);
  auto fp = extract_frame_prosody(w, cfg);
  for (std::size_t t = 0; t < fp.size(); ++t) {
    CHECK_FALSE(fp.voiced[t]);
    CHECK(fp.f0_hz[t] == 0.0);
    CHECK(fp.intensity_db[t] == doctest::Approx(-100.0));
  }
}

TEST_CASE("doubling amplitude raises intensity by 6.02 dB") {
  FrameConfig cfg;
  auto a = extract_frame_prosody(sine(180.0, 0.1, 0.5), cfg);
  auto b = extract_frame_prosody(sine(180.0, 0.2, 0.5), cfg);
  for (std::size_t t = 0; t < a.size(); ++t)
    CHECK(std::abs(b.intensity_db[t] - a.intensity_db[t] - 6.02) <= 0.01);
}

TEST_CASE("pool_to_phone averages frames inside each span") {
  FrameProsody fp;
  fp.hop_s = 0.0125;
  for (int t = 0; t < 40; ++t) {
    fp.f0_hz.push_back(200.0);
    fp.voiced.push_back(true);
    fp.intensity_db.push_back(-20.0 - t);
  }

  SUBCASE("constant F0 gives log(F0)") {
    std::vector<PhoneSpan> spans{{0.0, 0.1}};
    auto pm = pool_to_phone(fp, spans);
    CHECK(pm.values(0, kLf0) == doctest::Approx(std::log(200.0)).epsilon(1e-12));
    CHECK(pm.values(0, kDuration) == doctest::Approx(0.1));
    CHECK_FALSE(pm.unvoiced[0]);
  }

  SUBCASE("no voiced frames gives LF0 0 and the unvoiced flag") {
    for (int t = 8; t < 16; ++t) fp.voiced[t] = false;
    std::vector<PhoneSpan> spans{{0.1, 0.2}};
    auto pm = pool_to_phone(fp, spans);
    CHECK(pm.values(0, kLf0) == 0.0);
    CHECK(pm.unvoiced[0]);
  }

  SUBCASE("linear F0 ramp matches a direct frame loop") {
    for (int t = 0; t < 40; ++t) fp.f0_hz[t] = 120.0 + 3.0 * t;
    std::vector<PhoneSpan> spans{{0.0, 0.2125}, {0.2125, 0.5}};
    auto pm = pool_to_phone(fp, spans);
    for (std::size_t i = 0; i < spans.size(); ++i) {
      double lf0 = 0.0, inten = 0.0;
      int n = 0;
      for (int t = 0; t < 40; ++t) {
        const double centre = t * fp.hop_s;
        if (centre >= spans[i].start_s - 1e-12 && centre < spans[i].end_s - 1e-12) {
          lf0 += std::log(fp.f0_hz[t]);
          inten += fp.intensity_db[t];
          ++n;
        }
      }
      REQUIRE(n > 0);
      CHECK(pm.values(i, kLf0) == doctest::Approx(lf0 / n).epsilon(1e-12));
      CHECK(pm.values(i, kIntensity) == doctest::Approx(inten / n).epsilon(1e-12));
    }
  }

  SUBCASE("span past the end of the audio is rejected") {
    std::vector<PhoneSpan> spans{{0.4, 0.6}};
    CHECK_THROWS_AS(pool_to_phone(fp, spans), ValidationError);
  }

  SUBCASE("row count always equals the phone count") {
    Rng rng(4);
    std::uniform_real_distribution<double> u(0.0, 0.5);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<PhoneSpan> spans;
      const int n = 1 + trial % 9;
      std::vector<double> cuts;
      for (int i = 0; i <= n; ++i) cuts.push_back(u(rng));
      std::sort(cuts.begin(), cuts.end());
      for (int i = 0; i < n; ++i) spans.push_back({cuts[i], cuts[i + 1]});
      CHECK(pool_to_phone(fp, spans).rows() == n);
    }
  }
}

TEST_CASE("prosody normalisation") {
  ProsodyMatrix pm;
  pm.values = Mat(4, 3);
  pm.values << 5.0, -30, 0.1, 5.0, -20, 0.2, 5.0, -25, 0.3, 5.0, -35, 0.4;
  pm.unvoiced.assign(4, false);

  SUBCASE("a column equal to its own mean normalises to zeros") {
    auto st = compute_prosody_stats(std::span(&pm, 1));
    auto n = normalize_prosody(pm, st);
    CHECK(n.values.col(kLf0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(n.normalized);
  }

  SUBCASE("zero mean and unit std is the identity") {
    ProsodyStats st;
    CHECK(normalize_prosody(pm, st).values == pm.values);
  }

  SUBCASE("a random matrix normalised by its own stats has zero mean and unit std") {
    Rng rng(17);
    std::normal_distribution<double> nd(3.0, 2.0);
    ProsodyMatrix r;
    r.values = Mat(100, 3);
    for (Eigen::Index i = 0; i < r.values.size(); ++i) r.values.data()[i] = nd(rng);
    r.unvoiced.assign(100, false);
    auto st = compute_prosody_stats(std::span(&r, 1));
    auto n = normalize_prosody(r, st);
    for (int c = 0; c < 3; ++c) {
      const double mean = n.values.col(c).mean();
      const double sd = std::sqrt((n.values.col(c).array() - mean).square().mean());
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(sd - 1.0) < 1e-9);
    }
    auto back = denormalize_prosody(n, st);
    CHECK((back.values - r.values).cwiseAbs().maxCoeff() < 1e-9);
  }

  SUBCASE("unvoiced rows are excluded from LF0 stats and zero-filled") {
    pm.values(1, kLf0) = 0.0;
    pm.unvoiced[1] = true;
    pm.values(0, kLf0) = 4.0;
    auto st = compute_prosody_stats(std::span(&pm, 1));
    CHECK(st.mean[kLf0] == doctest::Approx((4.0 + 5.0 + 5.0) / 3.0));
    auto n = normalize_prosody(pm, st);
    CHECK(n.values(1, kLf0) == 0.0);
  }
}

TEST_CASE("array container and WAV files round-trip") {
  Mat m(3, 2);
  m << 1.5, -2, 3e-12, 4, 5, 6;
  auto p = temp_path("a.bin");
  save_array(p, m, "phone raw");
  std::string level;
  CHECK(load_array(p, &level) == m);
  CHECK(level == "phone raw");

  std::filesystem::resize_file(p, std::filesystem::file_size(p) - 3);
  CHECK_THROWS_AS(load_array(p), IntegrityError);
  CHECK_THROWS_AS(load_array(temp_path("missing.bin")), IoError);

  auto w = sine(300.0, 0.5, 0.1);
  write_wav(temp_path("s.wav"), w);
  auto r = read_wav(temp_path("s.wav"));
  REQUIRE(r.samples.size() == w.samples.size());
  CHECK(r.sample_rate == 16000);
  for (std::size_t i = 0; i < w.samples.size(); ++i) CHECK(std::abs(r.samples[i] - w.samples[i]) < 1e-4);
}
