#include "paratts/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "paratts/error.hpp"

namespace paratts {

SynthesisResult synthesize_paragraph(const ParaTTS& model, const ParagraphInput& input, const MelStats& mel_stats,
                                     const SynthesisOptions& opts) {
  if (input.ids.empty()) throw ValidationError("synthesis: empty paragraph");
  for (int id : input.ids)
    if (id < 0 || id >= model.config().n_symbols)
      throw ValidationError("synthesis: symbol id " + std::to_string(id) + " is outside the model vocabulary");
  if (opts.gt_prosody && !model.flags().pros)
    throw ValidationError("synthesis: ground-truth prosody needs a model with the prosody branch");

  Rng decoder_rng(opts.seed);
  Rng context_rng(opts.seed + 1);
  const ForwardModes modes{RunMode{false, &decoder_rng}, RunMode{false, &context_rng}};
  ag::Graph g;
  MemoryInputs in{input.ids, input.ids, opts.gt_prosody, input.codes, input.phone_counts};
  MemoryOutput mem = model.build_memory(g, in, modes);
  BackboneOutput out = model.backbone().decode_autoregressive(g, mem.memory, opts.limits, modes.backbone);

  SynthesisResult r;
  r.mel = mel_stats.denormalize(out.mel_after.value());
  r.alignments = out.alignments;
  r.gmm_means = out.gmm_means;
  if (mem.prosody_pred.valid()) r.predicted_prosody = mem.prosody_pred.value();
  r.truncated = out.truncated;
  r.final_mean_position = out.final_mean_position();
  r.memory_length = mem.memory.rows();
  return r;
}

Waveform invert_mel(const Mat& log_mel, const FrameConfig& frame, int iterations) {
  frame.validate();
  if (log_mel.cols() != frame.n_mels) throw ShapeError("invert_mel: mel width does not match the frame config");
  if (iterations < 0) throw ValidationError("invert_mel: iterations must be >= 0");
  const MelFilterbank fb(frame);
  const Eigen::Index bins = frame.n_fft / 2 + 1;
  Mat power = (fb.pseudo_inverse() * log_mel.array().exp().matrix().transpose()).transpose();
  Mat mag = power.cwiseMax(0.0).cwiseSqrt();  // T x bins

  const std::size_t length = static_cast<std::size_t>(log_mel.rows()) * static_cast<std::size_t>(frame.hop_samples());
  std::vector<Spectrum> spec(static_cast<std::size_t>(log_mel.rows()), Spectrum(static_cast<std::size_t>(bins)));
  for (std::size_t t = 0; t < spec.size(); ++t)
    for (Eigen::Index k = 0; k < bins; ++k) spec[t][static_cast<std::size_t>(k)] = mag(static_cast<Eigen::Index>(t), k);

  std::vector<double> x = istft(spec, frame, length);
  for (int it = 0; it < iterations; ++it) {
    const std::vector<Spectrum> est = stft(x, frame);
    for (std::size_t t = 0; t < spec.size() && t < est.size(); ++t)
      for (Eigen::Index k = 0; k < bins; ++k) {
        const auto e = est[t][static_cast<std::size_t>(k)];
        const double a = std::abs(e);
        const double m = mag(static_cast<Eigen::Index>(t), k);
        spec[t][static_cast<std::size_t>(k)] = a > 1e-12 ? e * (m / a) : std::complex<double>(m, 0.0);
      }
    x = istft(spec, frame, length);
  }
  Waveform w;
  w.sample_rate = frame.sample_rate;
  w.samples = std::move(x);
  for (double& s : w.samples) s = std::clamp(s, -1.0, 1.0);
  return w;
}

void write_prosody_csv(const std::filesystem::path& path, const Mat& prosody, const std::vector<int>& ids,
                       const SymbolTable& symbols) {
  if (prosody.rows() != static_cast<Eigen::Index>(ids.size()) || prosody.cols() != 3)
    throw ShapeError("prosody csv: expected one 3-column row per symbol");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(10);
  out << "index,symbol,lf0,intensity_db,duration_s\n";
  for (Eigen::Index i = 0; i < prosody.rows(); ++i)
    out << i << ',' << symbols.symbol(ids[static_cast<std::size_t>(i)]) << ',' << prosody(i, 0) << ','
        << prosody(i, 1) << ',' << prosody(i, 2) << '\n';
}

std::vector<PhoneSpan> alignment_phone_spans(const Mat& alignments, double hop_s) {
  const Eigen::Index T = alignments.rows(), m = alignments.cols();
  if (m == 0) return {};
  std::vector<Eigen::Index> start(static_cast<std::size_t>(m), T);
  Eigen::Index reached = 0;
  start[0] = 0;
  for (Eigen::Index t = 0; t < T; ++t) {
    Eigen::Index arg = 0;
    alignments.row(t).maxCoeff(&arg);
    while (reached < arg) {
      ++reached;
      start[static_cast<std::size_t>(reached)] = t;
    }
  }
  std::vector<PhoneSpan> spans(static_cast<std::size_t>(m));
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index end = k + 1 < m ? start[static_cast<std::size_t>(k) + 1] : T;
    spans[static_cast<std::size_t>(k)] = {static_cast<double>(start[static_cast<std::size_t>(k)]) * hop_s,
                                          static_cast<double>(std::max(end, start[static_cast<std::size_t>(k)])) * hop_s};
  }
  return spans;
}

}  // namespace paratts
