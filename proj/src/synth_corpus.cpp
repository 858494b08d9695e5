#include "paratts/synth_corpus.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "paratts/autograd.hpp"
#include "paratts/error.hpp"
#include "paratts/wav.hpp"

namespace paratts {

void SynthConfig::validate() const {
  auto range = [](int lo, int hi, const char* what, int floor) {
    if (lo < floor || hi < lo)
      throw ValidationError(std::string("synth config: invalid ") + what + " range");
  };
  if (paragraphs < 1) throw ValidationError("synth config: paragraphs must be >= 1");
  if (test_paragraphs < 0 || test_paragraphs > paragraphs)
    throw ValidationError("synth config: test_paragraphs must lie in [0, paragraphs]");
  range(sentences_min, sentences_max, "sentences", 1);
  range(phones_min, phones_max, "phones", 1);
  range(phones_per_syllable_min, phones_per_syllable_max, "phones_per_syllable", 1);
  if (symbols < 1) throw ValidationError("synth config: symbols must be >= 1");
  if (sample_rate < 8000) throw ValidationError("synth config: sample_rate must be >= 8000");
  if (!(phone_duration_min_s > 0.0) || phone_duration_max_s < phone_duration_min_s)
    throw ValidationError("synth config: invalid phone duration range");
  if (pause_s < 0.0 || pause_jitter_s < 0.0 || pause_jitter_s > pause_s)
    throw ValidationError("synth config: pause_jitter_s must lie in [0, pause_s]");
  if (edge_silence_s < 0.0) throw ValidationError("synth config: edge_silence_s must be >= 0");
  if (edge_lengthening <= 0.0) throw ValidationError("synth config: edge_lengthening must be > 0");
  const double lowest =
      base_f0_hz - symbol_f0_spread_hz + std::min(0.0, declination_hz) * (sentences_max - 1);
  if (lowest < 60.0) throw ValidationError("synth config: F0 would fall below 60 Hz");
  if (1.0 + std::min(0.0, tempo_declination) * (sentences_max - 1) <= 0.1)
    throw ValidationError("synth config: tempo_declination makes durations vanish");
}

namespace {

struct Segment {
  std::size_t samples = 0;
  double f0_hz = 0.0;
  double amplitude = 0.0;  // target RMS; 0 for silence
  double f1 = 500.0;
  double f2 = 1500.0;
};

// Harmonic tone with a spectral envelope peaking at two formants. Phase is
// carried across segments; amplitude and F0 glide with a 3 ms one-pole.
std::vector<double> render(const std::vector<Segment>& segs, int sr, double noise_rms, Rng& rng) {
  std::size_t total = 0;
  for (const auto& s : segs) total += s.samples;
  std::vector<double> out;
  out.reserve(total);
  const double alpha = 1.0 - std::exp(-1.0 / (0.003 * sr));
  const double nyq_cap = std::min(4000.0, 0.45 * sr);
  double phase = 0.0;
  double amp = 0.0;
  double f0 = segs.empty() ? 100.0 : segs.front().f0_hz;
  for (const auto& s : segs) {
    if (s.f0_hz > 0.0 && f0 <= 0.0) f0 = s.f0_hz;
    const double f0_target = s.f0_hz > 0.0 ? s.f0_hz : f0;
    // Harmonic weights for this segment, normalised to unit RMS.
    const int harmonics = std::max(1, static_cast<int>(nyq_cap / std::max(f0_target, 1.0)));
    std::vector<double> w(harmonics);
    double power = 0.0;
    for (int k = 1; k <= harmonics; ++k) {
      const double hz = k * f0_target;
      const double env = 1.0 + 2.0 * std::exp(-std::pow((hz - s.f1) / 150.0, 2)) +
                         1.5 * std::exp(-std::pow((hz - s.f2) / 250.0, 2));
      w[k - 1] = env / k;
      power += 0.5 * w[k - 1] * w[k - 1];
    }
    for (double& x : w) x /= std::sqrt(power);
    for (std::size_t i = 0; i < s.samples; ++i) {
      amp += alpha * (s.amplitude - amp);
      f0 += alpha * (f0_target - f0);
      phase += 2.0 * std::numbers::pi * f0 / sr;
      if (phase > 2.0 * std::numbers::pi) phase -= 2.0 * std::numbers::pi;
      double v = 0.0;
      if (amp > 1e-9)
        for (int k = 1; k <= harmonics; ++k) v += w[k - 1] * std::sin(k * phase);
      out.push_back(amp * v);
    }
  }
  std::normal_distribution<double> noise(0.0, noise_rms);
  for (double& x : out) x += noise(rng);
  return out;
}

std::string symbol_name(int i) {
  std::ostringstream os;
  os << 'p' << std::setw(2) << std::setfill('0') << i;
  return os.str();
}

std::string paragraph_name(int i) {
  std::ostringstream os;
  os << "para" << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

}  // namespace

SynthCorpus generate_synthetic_corpus(const SynthConfig& cfg, std::uint64_t seed,
                                      const std::filesystem::path& out_dir) {
  cfg.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto uniform_int = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };

  SynthCorpus result;
  std::vector<std::string> names{"sil"};
  for (int i = 1; i <= cfg.symbols; ++i) names.push_back(symbol_name(i));
  result.manifest.symbols = SymbolTable(names, "sil");

  SynthTrace& tr = result.trace;
  std::vector<double> f1(names.size(), 0.0), f2(names.size(), 0.0);
  tr.symbol_f0_offset_hz.assign(names.size(), 0.0);
  tr.symbol_db_offset.assign(names.size(), 0.0);
  tr.symbol_duration_s.assign(names.size(), 0.0);
  for (std::size_t s = 1; s < names.size(); ++s) {
    tr.symbol_f0_offset_hz[s] = uniform(-cfg.symbol_f0_spread_hz, cfg.symbol_f0_spread_hz);
    tr.symbol_db_offset[s] = uniform(-cfg.symbol_db_spread, cfg.symbol_db_spread);
    tr.symbol_duration_s[s] = uniform(cfg.phone_duration_min_s, cfg.phone_duration_max_s);
    f1[s] = uniform(300.0, 800.0);
    f2[s] = uniform(900.0, 2500.0);
  }

  std::filesystem::create_directories(out_dir / "wav");
  const double sr = cfg.sample_rate;
  auto to_samples = [&](double seconds) {
    return static_cast<std::size_t>(std::llround(seconds * sr));
  };

  for (int pi = 0; pi < cfg.paragraphs; ++pi) {
    ParagraphRecord para;
    para.id = paragraph_name(pi);
    para.split = pi >= cfg.paragraphs - cfg.test_paragraphs ? Split::kTest : Split::kTrain;
    para.sample_rate = cfg.sample_rate;
    para.audio_path = std::filesystem::absolute(out_dir) / "wav" / (para.id + ".wav");
    SynthParagraphTrace ptrace;

    std::vector<Segment> segs;
    std::size_t cursor = to_samples(cfg.edge_silence_s);
    segs.push_back({cursor, 0.0, 0.0});
    const int n_sent = uniform_int(cfg.sentences_min, cfg.sentences_max);
    for (int si = 0; si < n_sent; ++si) {
      if (si > 0) {
        const std::size_t pause =
            to_samples(cfg.pause_s + uniform(-cfg.pause_jitter_s, cfg.pause_jitter_s));
        segs.push_back({pause, 0.0, 0.0});
        cursor += pause;
      }
      SynthSentenceTrace st;
      st.f0_hz = cfg.base_f0_hz + cfg.declination_hz * si + (si == 0 ? cfg.reset_hz : 0.0);
      st.level_db = cfg.base_db + cfg.intensity_declination_db * si +
                    (si == 0 ? cfg.intensity_reset_db : 0.0);
      st.duration_scale = 1.0 + cfg.tempo_declination * si;
      if (si == 0 || si == n_sent - 1) st.duration_scale *= cfg.edge_lengthening;

      SentenceRecord sent;
      const int n_ph = uniform_int(cfg.phones_min, cfg.phones_max);
      for (int k = 0; k < n_ph; ++k) {
        SynthPhoneTrace ph;
        ph.symbol = uniform_int(1, cfg.symbols);
        ph.f0_hz = st.f0_hz + tr.symbol_f0_offset_hz[ph.symbol];
        ph.level_db = st.level_db + tr.symbol_db_offset[ph.symbol];
        const std::size_t len = std::max<std::size_t>(
            1, to_samples(tr.symbol_duration_s[ph.symbol] * st.duration_scale));
        ph.start_s = static_cast<double>(cursor) / sr;
        cursor += len;
        ph.end_s = static_cast<double>(cursor) / sr;
        segs.push_back({len, ph.f0_hz, std::pow(10.0, ph.level_db / 20.0), f1[ph.symbol],
                        f2[ph.symbol]});
        sent.phonemes.ids.push_back(ph.symbol);
        sent.alignment.push_back({ph.start_s, ph.end_s});
        st.phones.push_back(ph);
      }
      for (int b = 0; b < n_ph;) {
        const int size = std::min(
            n_ph - b, uniform_int(cfg.phones_per_syllable_min, cfg.phones_per_syllable_max));
        sent.syllables.push_back({b, b + size});
        b += size;
      }
      para.sentences.push_back(std::move(sent));
      ptrace.sentences.push_back(std::move(st));
    }
    segs.push_back({to_samples(cfg.edge_silence_s), 0.0, 0.0});

    Waveform wav;
    wav.sample_rate = cfg.sample_rate;
    wav.samples = render(segs, cfg.sample_rate, std::pow(10.0, cfg.noise_db / 20.0), rng);
    write_wav(para.audio_path, wav);
    validate_paragraph(para, result.manifest.symbols);
    result.manifest.paragraphs.push_back(std::move(para));
    tr.paragraphs.push_back(std::move(ptrace));
  }

  result.manifest_path = out_dir / "manifest.jsonl";
  save_manifest(result.manifest_path, result.manifest);
  return result;
}

}  // namespace paratts
