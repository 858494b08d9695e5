#include "paratts/signal.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "paratts/error.hpp"

namespace paratts {
namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Periodic Hann window.
std::vector<double> hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

// Samples of the frame centred at `center`, zero outside the signal.
void fill_frame(std::span<const double> signal, long center, int width, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(width), 0.0);
  const long start = center - width / 2;
  for (int i = 0; i < width; ++i) {
    const long s = start + i;
    if (s >= 0 && s < static_cast<long>(signal.size())) out[i] = signal[s];
  }
}

}  // namespace

int FrameConfig::window_samples() const {
  return static_cast<int>(std::lround(window_s * sample_rate));
}

int FrameConfig::hop_samples() const { return static_cast<int>(std::lround(hop_s * sample_rate)); }

void FrameConfig::validate() const {
  if (sample_rate <= 0) throw ValidationError("signal.sample_rate must be positive");
  if (hop_samples() < 1) throw ValidationError("signal.hop_s is shorter than one sample");
  if (window_samples() < hop_samples()) throw ValidationError("signal.window_s must be >= hop_s");
  if (n_fft < window_samples()) throw ValidationError("signal.n_fft must cover the window");
  if ((n_fft & (n_fft - 1)) != 0) throw ValidationError("signal.n_fft must be a power of two");
  if (n_mels < 1) throw ValidationError("signal.n_mels must be positive");
  if (!(fmin_hz >= 0.0 && fmax_hz > fmin_hz && fmax_hz <= sample_rate / 2.0))
    throw ValidationError("signal mel range must satisfy 0 <= fmin < fmax <= Nyquist");
  if (!(f0_min_hz > 0.0 && f0_max_hz > f0_min_hz))
    throw ValidationError("signal F0 range must satisfy 0 < f0_min < f0_max");
  if (sample_rate / f0_min_hz >= window_samples())
    throw ValidationError("signal.window_s too short for f0_min_hz");
}

Eigen::Index frame_count(std::size_t samples, const FrameConfig& cfg) {
  const auto hop = static_cast<std::size_t>(cfg.hop_samples());
  return static_cast<Eigen::Index>((samples + hop - 1) / hop);
}

MelFilterbank::MelFilterbank(const FrameConfig& cfg) {
  const int bins = cfg.n_fft / 2 + 1;
  const double lo = hz_to_mel(cfg.fmin_hz), hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels + 2));
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (cfg.n_mels + 1));

  weights_ = Mat::Zero(cfg.n_mels, bins);
  center_hz_.resize(static_cast<std::size_t>(cfg.n_mels));
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    center_hz_[m] = center;
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      double w = 0.0;
      if (f > left && f <= center) w = (f - left) / (center - left);
      else if (f > center && f < right) w = (right - f) / (right - center);
      weights_(m, k) = w;
    }
  }
  pinv_ = weights_.completeOrthogonalDecomposition().pseudoInverse();
}

std::vector<Spectrum> stft(std::span<const double> signal, const FrameConfig& cfg) {
  const int win = cfg.window_samples(), hop = cfg.hop_samples(), nfft = cfg.n_fft;
  const auto window = hann(win);
  const Eigen::Index T = frame_count(signal.size(), cfg);
  Eigen::FFT<double> fft;
  std::vector<Spectrum> out(static_cast<std::size_t>(T));
  std::vector<double> frame, padded(static_cast<std::size_t>(nfft));
  std::vector<std::complex<double>> spec;
  for (Eigen::Index t = 0; t < T; ++t) {
    fill_frame(signal, static_cast<long>(t) * hop, win, frame);
    std::fill(padded.begin(), padded.end(), 0.0);
    for (int i = 0; i < win; ++i) padded[i] = frame[i] * window[i];
    fft.fwd(spec, padded);
    out[t].assign(spec.begin(), spec.begin() + nfft / 2 + 1);
  }
  return out;
}

std::vector<double> istft(const std::vector<Spectrum>& frames, const FrameConfig& cfg,
                          std::size_t length) {
  const int win = cfg.window_samples(), hop = cfg.hop_samples(), nfft = cfg.n_fft;
  const auto window = hann(win);
  std::vector<double> acc(length, 0.0), norm(length, 0.0);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> full(static_cast<std::size_t>(nfft));
  std::vector<double> time;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const Spectrum& s = frames[t];
    if (static_cast<int>(s.size()) != nfft / 2 + 1) throw ShapeError("istft: wrong bin count");
    for (int k = 0; k <= nfft / 2; ++k) full[k] = s[k];
    for (int k = nfft / 2 + 1; k < nfft; ++k) full[k] = std::conj(s[nfft - k]);
    fft.inv(time, full);
    const long start = static_cast<long>(t) * hop - win / 2;
    for (int i = 0; i < win; ++i) {
      const long n = start + i;
      if (n < 0 || n >= static_cast<long>(length)) continue;
      acc[n] += time[i] * window[i];
      norm[n] += window[i] * window[i];
    }
  }
  for (std::size_t n = 0; n < length; ++n) acc[n] = norm[n] > 1e-8 ? acc[n] / norm[n] : 0.0;
  return acc;
}

MelSpectrogram mel_spectrogram(const Waveform& wav, const FrameConfig& cfg) {
  cfg.validate();
  if (wav.samples.empty()) throw ValidationError("mel_spectrogram: empty waveform");
  if (wav.sample_rate != cfg.sample_rate)
    throw ValidationError("mel_spectrogram: waveform sample rate " + std::to_string(wav.sample_rate) +
                          " does not match configured " + std::to_string(cfg.sample_rate));
  const MelFilterbank fb(cfg);
  const auto spectra = stft(wav.samples, cfg);
  const int bins = cfg.n_fft / 2 + 1;
  Mat power(static_cast<Eigen::Index>(spectra.size()), bins);
  for (std::size_t t = 0; t < spectra.size(); ++t)
    for (int k = 0; k < bins; ++k) power(static_cast<Eigen::Index>(t), k) = std::norm(spectra[t][k]);
  MelSpectrogram mel;
  mel.frames = (power * fb.weights().transpose())
                   .unaryExpr([&](double p) { return std::log(std::max(p, cfg.mel_floor)); });
  mel.hop_s = cfg.hop_s;
  mel.sample_rate = cfg.sample_rate;
  return mel;
}

FrameProsody extract_frame_prosody(const Waveform& wav, const FrameConfig& cfg) {
  cfg.validate();
  if (wav.samples.empty()) throw ValidationError("extract_frame_prosody: empty waveform");
  if (wav.sample_rate != cfg.sample_rate)
    throw ValidationError("extract_frame_prosody: sample rate mismatch");

  const int win = cfg.window_samples(), hop = cfg.hop_samples();
  const int lag_min = std::max(2, static_cast<int>(std::floor(cfg.sample_rate / cfg.f0_max_hz)));
  const int lag_max = std::min(win - 2, static_cast<int>(std::ceil(cfg.sample_rate / cfg.f0_min_hz)));
  int nfft = 1;
  while (nfft < 2 * win) nfft <<= 1;

  const Eigen::Index T = frame_count(wav.samples.size(), cfg);
  FrameProsody fp;
  fp.hop_s = cfg.hop_s;
  fp.f0_hz.assign(static_cast<std::size_t>(T), 0.0);
  fp.intensity_db.assign(static_cast<std::size_t>(T), -100.0);
  fp.voiced.assign(static_cast<std::size_t>(T), false);

  Eigen::FFT<double> fft;
  std::vector<double> frame, padded(static_cast<std::size_t>(nfft)), acf;
  std::vector<std::complex<double>> spec;
  std::vector<double> prefix(static_cast<std::size_t>(win + 1));
  std::vector<double> r(static_cast<std::size_t>(lag_max + 2), 0.0);

  for (Eigen::Index t = 0; t < T; ++t) {
    fill_frame(wav.samples, static_cast<long>(t) * hop, win, frame);
    prefix[0] = 0.0;
    for (int i = 0; i < win; ++i) prefix[i + 1] = prefix[i] + frame[i] * frame[i];
    const double energy = prefix[win];
    fp.intensity_db[t] = 10.0 * std::log10(energy / win + 1e-10);
    if (energy <= 0.0) continue;

    std::fill(padded.begin(), padded.end(), 0.0);
    std::copy(frame.begin(), frame.end(), padded.begin());
    fft.fwd(spec, padded);
    for (auto& c : spec) c = std::norm(c);
    fft.inv(acf, spec);

    // Normalised cross-correlation between x[0, W-lag) and x[lag, W).
    for (int lag = lag_min - 1; lag <= lag_max + 1; ++lag) {
      const double e1 = prefix[win - lag];
      const double e2 = prefix[win] - prefix[lag];
      const double denom = std::sqrt(e1 * e2);
      r[lag] = denom > 1e-12 ? acf[lag] / denom : 0.0;
    }
    double best = -1.0;
    for (int lag = lag_min; lag <= lag_max; ++lag)
      if (r[lag] >= r[lag - 1] && r[lag] > r[lag + 1]) best = std::max(best, r[lag]);
    if (best < cfg.voicing_threshold) continue;
    // Smallest-lag peak close to the best one; suppresses sub-octave picks.
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      if (!(r[lag] >= r[lag - 1] && r[lag] > r[lag + 1]) || r[lag] < 0.9 * best) continue;
      const double a = r[lag - 1], b = r[lag], c = r[lag + 1];
      const double curv = a - 2.0 * b + c;
      const double shift = std::abs(curv) > 1e-12 ? 0.5 * (a - c) / curv : 0.0;
      fp.f0_hz[t] = cfg.sample_rate / (lag + std::clamp(shift, -0.5, 0.5));
      fp.voiced[t] = true;
      break;
    }
  }
  return fp;
}

ProsodyMatrix pool_to_phone(const FrameProsody& fp, std::span<const PhoneSpan> spans) {
  const auto T = static_cast<long>(fp.size());
  const double total = static_cast<double>(T) * fp.hop_s;
  ProsodyMatrix pm;
  pm.values = Mat::Zero(static_cast<Eigen::Index>(spans.size()), 3);
  pm.unvoiced.assign(spans.size(), false);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const PhoneSpan& s = spans[i];
    if (s.start_s < -1e-9 || s.end_s > total + 1e-9 || s.end_s < s.start_s)
      throw ValidationError("pool_to_phone: span " + std::to_string(i) + " [" +
                            std::to_string(s.start_s) + ", " + std::to_string(s.end_s) +
                            ") lies outside the audio (" + std::to_string(total) + " s)");
    long first = static_cast<long>(std::ceil(s.start_s / fp.hop_s - 1e-9));
    long last = static_cast<long>(std::ceil(s.end_s / fp.hop_s - 1e-9)) - 1;
    first = std::max(first, 0L);
    last = std::min(last, T - 1);
    if (last < first) {
      const long mid = std::lround(0.5 * (s.start_s + s.end_s) / fp.hop_s);
      first = last = std::clamp(mid, 0L, T - 1);
    }
    double lf0 = 0.0, inten = 0.0;
    int voiced = 0;
    for (long t = first; t <= last; ++t) {
      inten += fp.intensity_db[t];
      if (fp.voiced[t]) {
        lf0 += std::log(fp.f0_hz[t]);
        ++voiced;
      }
    }
    const auto ri = static_cast<Eigen::Index>(i);
    pm.values(ri, kLf0) = voiced > 0 ? lf0 / voiced : 0.0;
    pm.unvoiced[i] = voiced == 0;
    pm.values(ri, kIntensity) = inten / static_cast<double>(last - first + 1);
    pm.values(ri, kDuration) = s.end_s - s.start_s;
  }
  return pm;
}

ProsodyStats compute_prosody_stats(std::span<const ProsodyMatrix> matrices) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d count = Eigen::Vector3d::Zero();
  for (const auto& pm : matrices) {
    if (pm.normalized) throw ValidationError("compute_prosody_stats: expects raw matrices");
    for (Eigen::Index r = 0; r < pm.rows(); ++r)
      for (int c = 0; c < 3; ++c) {
        if (c == kLf0 && pm.unvoiced[r]) continue;
        sum[c] += pm.values(r, c);
        count[c] += 1.0;
      }
  }
  ProsodyStats st;
  for (int c = 0; c < 3; ++c) st.mean[c] = count[c] > 0 ? sum[c] / count[c] : 0.0;
  Eigen::Vector3d ss = Eigen::Vector3d::Zero();
  for (const auto& pm : matrices)
    for (Eigen::Index r = 0; r < pm.rows(); ++r)
      for (int c = 0; c < 3; ++c) {
        if (c == kLf0 && pm.unvoiced[r]) continue;
        const double d = pm.values(r, c) - st.mean[c];
        ss[c] += d * d;
      }
  for (int c = 0; c < 3; ++c)
    st.std[c] = std::max(count[c] > 0 ? std::sqrt(ss[c] / count[c]) : 0.0, kProsodyStdFloor);
  return st;
}

ProsodyMatrix normalize_prosody(const ProsodyMatrix& raw, const ProsodyStats& stats) {
  ProsodyMatrix out = raw;
  for (Eigen::Index r = 0; r < raw.rows(); ++r)
    for (int c = 0; c < 3; ++c)
      out.values(r, c) = (raw.values(r, c) - stats.mean[c]) / std::max(stats.std[c], kProsodyStdFloor);
  for (Eigen::Index r = 0; r < raw.rows(); ++r)
    if (raw.unvoiced[r]) out.values(r, kLf0) = 0.0;
  out.normalized = true;
  return out;
}

ProsodyMatrix denormalize_prosody(const ProsodyMatrix& normalized, const ProsodyStats& stats) {
  ProsodyMatrix out = normalized;
  for (Eigen::Index r = 0; r < normalized.rows(); ++r)
    for (int c = 0; c < 3; ++c)
      out.values(r, c) = normalized.values(r, c) * std::max(stats.std[c], kProsodyStdFloor) + stats.mean[c];
  for (Eigen::Index r = 0; r < normalized.rows(); ++r)
    if (r < static_cast<Eigen::Index>(normalized.unvoiced.size()) && normalized.unvoiced[r])
      out.values(r, kLf0) = 0.0;
  out.normalized = false;
  return out;
}

}  // namespace paratts
