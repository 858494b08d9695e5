#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "paratts/cli.hpp"
#include "paratts/error.hpp"
#include "paratts/eval.hpp"
#include "paratts/run_config.hpp"
#include "paratts/synth_corpus.hpp"

namespace py = pybind11;
using namespace paratts;

namespace {

Waveform to_wave(const py::array_t<double, py::array::c_style | py::array::forcecast>& samples, int sample_rate) {
  if (samples.ndim() != 1) throw ValidationError("expected a 1-D sample array");
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(samples.data(), samples.data() + samples.size());
  return w;
}

FrameConfig frame_for(int sample_rate) {
  FrameConfig f;
  f.sample_rate = sample_rate;
  f.fmax_hz = std::min(f.fmax_hz, sample_rate / 2.0);
  return f;
}

std::vector<std::vector<SentenceTiming>> to_timings(const std::vector<std::vector<std::pair<double, double>>>& v) {
  std::vector<std::vector<SentenceTiming>> out;
  for (const auto& para : v) {
    out.emplace_back();
    for (const auto& [s, e] : para) out.back().push_back({s, e});
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_paratts, m) {
  m.doc() = "Core bindings of the paratts toolkit";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const ShapeError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const IoError& e) {
      PyErr_SetString(PyExc_OSError, e.what());
    }
  });

  m.def(
      "generate_synthetic_corpus",
      [](const std::string& out_dir, std::uint64_t seed, const std::map<std::string, std::string>& data) {
        RunConfig rc;
        for (const auto& [k, v] : data) rc.set("data." + k, v, "python");
        rc.data.validate();
        return generate_synthetic_corpus(rc.data, seed, out_dir).manifest_path.string();
      },
      py::arg("out_dir"), py::arg("seed") = 1, py::arg("data") = std::map<std::string, std::string>{},
      "Writes manifest.jsonl and wav/ under out_dir; `data` overrides [data] config keys. Returns the manifest path.");

  m.def(
      "corpus_stats", [](const std::string& manifest) { return corpus_stats(load_manifest(manifest)).to_key_value(); },
      py::arg("manifest"), "Corpus statistics as key = value text.");

  m.def(
      "pattern_analysis",
      [](const std::string& manifest) { return paragraph_pattern_analysis(load_manifest(manifest), FrameConfig{}).to_key_value(); },
      py::arg("manifest"), "Intra- and inter-paragraph prosody patterns as key = value text.");

  m.def(
      "mel_spectrogram",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& samples, int sample_rate) {
        return mel_spectrogram(to_wave(samples, sample_rate), frame_for(sample_rate)).frames;
      },
      py::arg("samples"), py::arg("sample_rate") = 16000, "T x 80 natural-log mel power.");

  m.def(
      "frame_prosody",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& samples, int sample_rate) {
        const FrameProsody fp = extract_frame_prosody(to_wave(samples, sample_rate), frame_for(sample_rate));
        py::dict d;
        d["f0_hz"] = fp.f0_hz;
        d["intensity_db"] = fp.intensity_db;
        d["voiced"] = std::vector<bool>(fp.voiced.begin(), fp.voiced.end());
        d["hop_s"] = fp.hop_s;
        return d;
      },
      py::arg("samples"), py::arg("sample_rate") = 16000, "Frame F0 (0 when unvoiced), intensity and voicing.");

  m.def("mcd_dtw", &mcd_dtw, py::arg("pred_log_mel"), py::arg("ref_log_mel"),
        "Mel-cepstral distortion over the DTW path (coefficients 1 to 13).");

  m.def(
      "dtw",
      [](const Mat& a, const Mat& b) {
        const DtwPath p = dtw(a, b);
        return py::make_tuple(p.cost, p.steps);
      },
      py::arg("a"), py::arg("b"), "Returns (cost, [(i, j), ...]).");

  m.def(
      "pearson",
      [](const std::vector<double>& x, const std::vector<double>& y) {
        const Correlation c = pearson(x, y);
        return py::make_tuple(c.r, c.p, c.n);
      },
      py::arg("x"), py::arg("y"), "Returns (r, two-sided p, n).");

  m.def(
      "pause_rmse",
      [](const std::vector<std::vector<std::pair<double, double>>>& pred,
         const std::vector<std::vector<std::pair<double, double>>>& ref) {
        return pause_rmse(to_timings(pred), to_timings(ref)).rmse;
      },
      py::arg("pred"), py::arg("ref"), "Sentence (start, end) lists per paragraph; RMSE of the pauses in seconds.");

  m.def(
      "position_codes",
      [](std::size_t n) {
        std::vector<int> out;
        for (const auto& c : sentence_position_codes(n)) out.push_back(c.code);
        return out;
      },
      py::arg("sentences"), "0 first, 1 middle, 2 last.");

  m.def(
      "model_config",
      [](const std::string& preset, const std::string& ablation) {
        RunConfig rc;
        rc.set("model.preset", preset, "python");
        rc.set("model.ablation", ablation, "python");
        return rc.model.to_text();
      },
      py::arg("preset") = "toy", py::arg("ablation") = "para");

  m.def(
      "parameter_count",
      [](const std::string& preset, const std::string& ablation, int n_symbols) {
        RunConfig rc;
        rc.set("model.preset", preset, "python");
        rc.set("model.ablation", ablation, "python");
        rc.model.n_symbols = n_symbols;
        return ParaTTS(rc.model, 1).params().scalar_count();
      },
      py::arg("preset") = "toy", py::arg("ablation") = "para", py::arg("n_symbols") = 13);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the paratts command; returns (exit code, stdout, stderr).");
}
