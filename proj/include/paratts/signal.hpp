#pragma once

// Waveform front end: STFT, log-mel spectrograms, frame-level F0 and
// intensity, phone-level pooling and mean-variance normalisation of the
// 3-dimensional (LF0, intensity, duration) prosody features.

#include <complex>
#include <span>
#include <vector>

#include "paratts/autograd.hpp"
#include "paratts/wav.hpp"

namespace paratts {

struct FrameConfig {
  int sample_rate = 16000;
  double window_s = 0.05;
  double hop_s = 0.0125;
  int n_fft = 1024;
  int n_mels = 80;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  double f0_min_hz = 50.0;
  double f0_max_hz = 600.0;
  double voicing_threshold = 0.45;
  double mel_floor = 1e-10;

  int window_samples() const;
  int hop_samples() const;
  // Throws ValidationError for inconsistent settings.
  void validate() const;
};

// Number of analysis frames for a signal: ceil(samples / hop). Frame t is
// centred on sample t * hop.
Eigen::Index frame_count(std::size_t samples, const FrameConfig& cfg);

struct MelSpectrogram {
  Mat frames;  // T x n_mels, natural-log mel power
  double hop_s = 0.0125;
  int sample_rate = 16000;

  Eigen::Index num_frames() const { return frames.rows(); }
};

// HTK-scale triangular filters with unit peak, evaluated on FFT bin centres.
class MelFilterbank {
 public:
  explicit MelFilterbank(const FrameConfig& cfg);

  const Mat& weights() const { return weights_; }  // n_mels x (n_fft/2 + 1)
  const std::vector<double>& center_hz() const { return center_hz_; }
  // Moore-Penrose pseudo-inverse, (n_fft/2 + 1) x n_mels.
  const Mat& pseudo_inverse() const { return pinv_; }

 private:
  Mat weights_;
  Mat pinv_;
  std::vector<double> center_hz_;
};

using Spectrum = std::vector<std::complex<double>>;  // n_fft/2 + 1 bins

std::vector<Spectrum> stft(std::span<const double> signal, const FrameConfig& cfg);
// Weighted overlap-add inverse of stft() producing `length` samples.
std::vector<double> istft(const std::vector<Spectrum>& frames, const FrameConfig& cfg,
                          std::size_t length);

MelSpectrogram mel_spectrogram(const Waveform& wav, const FrameConfig& cfg);

struct FrameProsody {
  std::vector<double> f0_hz;         // 0 when unvoiced
  std::vector<double> intensity_db;  // floored at -100 dB
  std::vector<bool> voiced;
  double hop_s = 0.0125;

  std::size_t size() const { return f0_hz.size(); }
};

FrameProsody extract_frame_prosody(const Waveform& wav, const FrameConfig& cfg);

struct PhoneSpan {
  double start_s = 0.0;
  double end_s = 0.0;
};

enum ProsodyColumn : int { kLf0 = 0, kIntensity = 1, kDuration = 2 };

struct ProsodyMatrix {
  Mat values;                 // L x 3: LF0, intensity (dB), duration (s)
  std::vector<bool> unvoiced;  // per row; LF0 is 0 when set
  bool normalized = false;

  Eigen::Index rows() const { return values.rows(); }
};

// Averages frame values over each span. Frames belong to a span when their
// centre falls in [start, end); a span that captures no frame centre uses the
// frame nearest to its midpoint.
ProsodyMatrix pool_to_phone(const FrameProsody& fp, std::span<const PhoneSpan> spans);

struct ProsodyStats {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d std = Eigen::Vector3d::Ones();
};

inline constexpr double kProsodyStdFloor = 1e-8;

// Column moments over all rows of the given raw matrices; LF0 ignores
// unvoiced rows. Population standard deviation, floored.
ProsodyStats compute_prosody_stats(std::span<const ProsodyMatrix> matrices);
ProsodyMatrix normalize_prosody(const ProsodyMatrix& raw, const ProsodyStats& stats);
ProsodyMatrix denormalize_prosody(const ProsodyMatrix& normalized, const ProsodyStats& stats);

}  // namespace paratts
