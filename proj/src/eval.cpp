#include "paratts/eval.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "paratts/array_io.hpp"
#include "paratts/error.hpp"

namespace paratts {

namespace {

std::string fmt(double v, int digits = 6) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

Mat mel_cepstrum(const Mat& log_mel, int first, int last) {
  const auto n = static_cast<int>(log_mel.cols());
  if (first < 0 || last < first || last >= n) throw ValidationError("mel_cepstrum: bad coefficient range");
  Mat basis(n, last - first + 1);
  for (int k = first; k <= last; ++k) {
    const double s = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    for (int i = 0; i < n; ++i) basis(i, k - first) = s * std::cos(std::numbers::pi * k * (2 * i + 1) / (2.0 * n));
  }
  return log_mel * basis;
}

DtwPath dtw(const Mat& a, const Mat& b) {
  const Eigen::Index n = a.rows(), m = b.rows();
  if (n == 0 || m == 0) throw ValidationError("dtw: empty sequence");
  if (a.cols() != b.cols()) throw ShapeError("dtw: feature widths differ");
  const double inf = std::numeric_limits<double>::infinity();
  Mat cost = Mat::Constant(n, m, inf);
  Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> len(n, m);
  Eigen::Matrix<signed char, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> from(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      const double d = (a.row(i) - b.row(j)).norm();
      if (i == 0 && j == 0) {
        cost(0, 0) = d;
        len(0, 0) = 1;
        from(0, 0) = -1;
        continue;
      }
      double best = inf;
      long best_len = 0;
      signed char arg = -1;
      auto consider = [&](Eigen::Index pi, Eigen::Index pj, signed char tag) {
        if (pi < 0 || pj < 0) return;
        const double c = cost(pi, pj);
        const long l = len(pi, pj);
        if (c < best || (c == best && l < best_len)) {
          best = c;
          best_len = l;
          arg = tag;
        }
      };
      consider(i - 1, j - 1, 0);
      consider(i - 1, j, 1);
      consider(i, j - 1, 2);
      cost(i, j) = best + d;
      len(i, j) = best_len + 1;
      from(i, j) = arg;
    }
  DtwPath p;
  p.cost = cost(n - 1, m - 1);
  Eigen::Index i = n - 1, j = m - 1;
  while (true) {
    p.steps.emplace_back(i, j);
    const signed char f = from(i, j);
    if (f < 0) break;
    if (f == 0) { --i; --j; }
    else if (f == 1) --i;
    else --j;
  }
  std::reverse(p.steps.begin(), p.steps.end());
  return p;
}

double mcd_dtw(const Mat& pred_log_mel, const Mat& ref_log_mel) {
  if (pred_log_mel.rows() == 0 || ref_log_mel.rows() == 0) throw ValidationError("mcd: empty spectrogram");
  if (pred_log_mel.cols() != ref_log_mel.cols()) throw ShapeError("mcd: mel configurations differ");
  return kMcdScale * dtw(mel_cepstrum(pred_log_mel), mel_cepstrum(ref_log_mel)).mean_cost();
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("pearson: inputs differ in length");
  const std::size_t n = x.size();
  if (n < 3) throw ValidationError("pearson: need at least 3 points, got " + std::to_string(n));
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("pearson: zero variance, r is undefined");
  Correlation c;
  c.n = n;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::abs(c.r) == 1.0) {
    c.p = 0.0;
  } else {
    const double df = static_cast<double>(n - 2);
    const double t = c.r * std::sqrt(df / (1.0 - c.r * c.r));
    const boost::math::students_t dist(df);
    c.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return c;
}

std::array<Correlation, 3> prosody_correlation(const Mat& pred, const Mat& ref) {
  if (pred.rows() != ref.rows() || pred.cols() != 3 || ref.cols() != 3)
    throw ValidationError("prosody correlation: expected equal S x 3 matrices");
  std::array<Correlation, 3> out;
  for (int c = 0; c < 3; ++c) {
    const Eigen::VectorXd a = pred.col(c), b = ref.col(c);
    out[static_cast<std::size_t>(c)] = pearson({a.data(), static_cast<std::size_t>(a.size())},
                                               {b.data(), static_cast<std::size_t>(b.size())});
  }
  return out;
}

PauseErrors pause_rmse(const std::vector<std::vector<SentenceTiming>>& pred,
                       const std::vector<std::vector<SentenceTiming>>& ref) {
  if (pred.size() != ref.size()) throw ValidationError("pause rmse: paragraph counts differ");
  double sq = 0.0;
  PauseErrors e;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (pred[k].size() != ref[k].size())
      throw ValidationError("pause rmse: paragraph " + std::to_string(k) + " has " + std::to_string(pred[k].size()) +
                            " predicted sentences and " + std::to_string(ref[k].size()) + " reference sentences");
    for (std::size_t i = 0; i + 1 < pred[k].size(); ++i) {
      const double dp = pred[k][i + 1].start_s - pred[k][i].end_s;
      const double dr = ref[k][i + 1].start_s - ref[k][i].end_s;
      sq += (dp - dr) * (dp - dr);
      ++e.gaps;
    }
  }
  e.rmse = e.gaps ? std::sqrt(sq / static_cast<double>(e.gaps)) : 0.0;
  return e;
}

std::vector<SentenceTiming> sentence_timings(const ParagraphRecord& p) {
  std::vector<SentenceTiming> out;
  for (const auto& s : p.sentences) out.push_back({s.start_s(), s.end_s()});
  return out;
}

std::vector<SentenceTiming> sentence_timings(const ParagraphRecord& p, std::span<const PhoneSpan> spans,
                                             bool with_boundary) {
  const auto ranges = sentence_ranges(p, with_boundary);
  if (ranges.empty() || ranges.back().end > spans.size())
    throw ValidationError("sentence timings: spans do not cover paragraph " + p.id);
  std::vector<SentenceTiming> out;
  for (const auto& r : ranges) out.push_back({spans[r.begin].start_s, spans[r.end - 1].end_s});
  return out;
}

std::vector<PhoneSpan> syllable_spans(const ParagraphRecord& p) {
  std::vector<PhoneSpan> out;
  for (const auto& s : p.sentences)
    for (const auto& sy : s.syllables)
      out.push_back({s.alignment[static_cast<std::size_t>(sy.begin)].start_s,
                     s.alignment[static_cast<std::size_t>(sy.end - 1)].end_s});
  return out;
}

Mat syllable_features(const FrameProsody& fp, std::span<const PhoneSpan> spans) {
  return pool_to_phone(fp, spans).values;
}

std::vector<PhoneSpan> project_spans(const DtwPath& path, std::span<const PhoneSpan> ref_spans, double ref_offset_s,
                                     double hop_s, Eigen::Index pred_frames) {
  Eigen::Index ref_frames = 0;
  for (const auto& s : path.steps) ref_frames = std::max(ref_frames, s.second + 1);
  // First and last predicted frame mapped to each reference frame.
  std::vector<Eigen::Index> lo(static_cast<std::size_t>(ref_frames), pred_frames), hi(static_cast<std::size_t>(ref_frames), -1);
  for (const auto& [i, j] : path.steps) {
    lo[static_cast<std::size_t>(j)] = std::min(lo[static_cast<std::size_t>(j)], i);
    hi[static_cast<std::size_t>(j)] = std::max(hi[static_cast<std::size_t>(j)], i);
  }
  std::vector<PhoneSpan> out;
  for (const auto& s : ref_spans) {
    auto [a, b] = frame_range(s.start_s - ref_offset_s, s.end_s - ref_offset_s, hop_s, ref_frames);
    if (b <= a) {
      a = std::min(a, ref_frames - 1);
      b = a + 1;
    }
    Eigen::Index first = pred_frames, last = -1;
    for (Eigen::Index j = a; j < b; ++j) {
      first = std::min(first, lo[static_cast<std::size_t>(j)]);
      last = std::max(last, hi[static_cast<std::size_t>(j)]);
    }
    out.push_back({static_cast<double>(first) * hop_s, static_cast<double>(last + 1) * hop_s});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string MetricReport::to_key_value() const {
  std::ostringstream os;
  os << "ablation = " << ablation << '\n'
     << "prosody_source = " << (gt_prosody ? "ground_truth" : "predicted") << '\n'
     << "paragraphs = " << paragraphs.size() << '\n'
     << "mcd = " << fmt(mcd) << '\n'
     << "lf0_r = " << fmt(lf0.r) << '\n'
     << "lf0_p = " << fmt(lf0.p) << '\n'
     << "intensity_r = " << fmt(intensity.r) << '\n'
     << "intensity_p = " << fmt(intensity.p) << '\n'
     << "duration_r = " << fmt(duration.r) << '\n'
     << "duration_p = " << fmt(duration.p) << '\n'
     << "syllables = " << lf0.n << '\n'
     << "pause_rmse_s = " << fmt(pause_rmse) << '\n'
     << "pauses = " << pauses << '\n';
  if (predictor_rmse) {
    os << "predictor_rmse_lf0 = " << fmt((*predictor_rmse)[0]) << '\n'
       << "predictor_rmse_intensity = " << fmt((*predictor_rmse)[1]) << '\n'
       << "predictor_rmse_duration = " << fmt((*predictor_rmse)[2]) << '\n';
  }
  for (const auto& p : paragraphs)
    os << "paragraph." << p.id << ".mcd = " << fmt(p.mcd) << '\n'
       << "paragraph." << p.id << ".frames = " << p.frames << '\n'
       << "paragraph." << p.id << ".reference_frames = " << p.reference_frames << '\n'
       << "paragraph." << p.id << ".truncated = " << (p.truncated ? "true" : "false") << '\n'
       << "paragraph." << p.id << ".final_mean_position = " << fmt(p.final_mean_position, 3) << '\n'
       << "paragraph." << p.id << ".memory_length = " << p.memory_length << '\n';
  return os.str();
}

std::string MetricReport::to_table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-12s %8s %8s %8s %8s %10s\n", "ablation", "prosody", "MCD", "LF0 r",
                "Dur r", "Int r", "Pause RMSE");
  os << line;
  std::snprintf(line, sizeof line, "%-10s %-12s %8.3f %8.3f %8.3f %8.3f %10.3f\n", ablation.c_str(),
                gt_prosody ? "GT" : "predicted", mcd, lf0.r, duration.r, intensity.r, pause_rmse);
  os << line << '\n';
  std::snprintf(line, sizeof line, "%-12s %8s %8s %8s %6s\n", "paragraph", "MCD", "frames", "ref", "trunc");
  os << line;
  for (const auto& p : paragraphs) {
    std::snprintf(line, sizeof line, "%-12s %8.3f %8ld %8ld %6s\n", p.id.c_str(), p.mcd, static_cast<long>(p.frames),
                  static_cast<long>(p.reference_frames), p.truncated ? "yes" : "no");
    os << line;
  }
  return os.str();
}

MetricReport evaluate(const ParaTTS& model, const CorpusManifest& manifest, const FeatureSet& features, Split split,
                      const EvalOptions& opts) {
  const auto paragraphs = manifest.split(split);
  if (paragraphs.empty()) throw ValidationError("evaluate: the " + std::string(split_name(split)) + " split is empty");
  const FrameConfig& frame = features.frame;
  const double hop = frame.hop_s;
  const bool boundary = manifest.symbols.boundary_id() >= 0;
  if (!opts.dump_dir.empty()) std::filesystem::create_directories(opts.dump_dir);

  MetricReport rep;
  rep.ablation = std::string(ablation_name(model.config().ablation));
  rep.gt_prosody = opts.gt_prosody;
  std::vector<double> cols_pred[3], cols_ref[3];
  std::vector<std::vector<SentenceTiming>> pred_t, ref_t;
  Eigen::Vector3d pred_sq = Eigen::Vector3d::Zero();
  double pred_rows = 0.0;

  for (const ParagraphRecord* p : paragraphs) {
    const ParagraphFeatures& f = features.paragraph(p->id);
    const ParagraphInput in = paragraph_input(*p, manifest.symbols);
    const Mat gt = normalize_prosody(f.prosody, features.prosody_stats).values;
    SynthesisOptions so;
    so.limits = opts.limits;
    so.seed = opts.seed;
    if (opts.gt_prosody) so.gt_prosody = &gt;
    const SynthesisResult r = synthesize_paragraph(model, in, features.mel_stats, so);

    const auto [ref_a, ref_b] = frame_range(p->sentences.front().start_s(), p->sentences.back().end_s(), hop, f.mel.rows());
    const Mat ref = f.mel.middleRows(ref_a, ref_b - ref_a);
    const DtwPath path = dtw(mel_cepstrum(r.mel), mel_cepstrum(ref));

    ParagraphMetrics pm;
    pm.id = p->id;
    pm.mcd = kMcdScale * path.mean_cost();
    pm.frames = r.mel.rows();
    pm.reference_frames = ref.rows();
    pm.truncated = r.truncated;
    pm.final_mean_position = r.final_mean_position;
    pm.memory_length = r.memory_length;
    rep.paragraphs.push_back(pm);

    const Waveform wav = invert_mel(r.mel, frame, opts.griffin_lim_iterations);
    const FrameProsody pred_fp = extract_frame_prosody(wav, frame);
    const FrameProsody ref_fp = extract_frame_prosody(read_wav(p->audio_path), frame);
    const auto syl = syllable_spans(*p);
    const Mat ref_syl = syllable_features(ref_fp, syl);
    const Mat pred_syl = syllable_features(pred_fp, project_spans(path, syl, static_cast<double>(ref_a) * hop, hop, r.mel.rows()));
    for (int c = 0; c < 3; ++c)
      for (Eigen::Index i = 0; i < ref_syl.rows(); ++i) {
        cols_pred[c].push_back(pred_syl(i, c));
        cols_ref[c].push_back(ref_syl(i, c));
      }

    pred_t.push_back(sentence_timings(*p, alignment_phone_spans(r.alignments, hop), boundary));
    ref_t.push_back(sentence_timings(*p));

    if (r.predicted_prosody.size() > 0) {
      pred_sq += (r.predicted_prosody - gt).colwise().squaredNorm().transpose();
      pred_rows += static_cast<double>(gt.rows());
    }

    if (!opts.dump_dir.empty()) {
      const auto base = opts.dump_dir / p->id;
      write_wav(base.string() + ".wav", wav);
      save_array(base.string() + ".mel", r.mel, "frame log-mel");
      save_array(base.string() + ".align", r.alignments, "frame x phone attention");
      const Mat pros = r.predicted_prosody.size() > 0 && !opts.gt_prosody ? r.predicted_prosody : gt;
      ProsodyMatrix pmx;
      pmx.values = pros;
      pmx.unvoiced.assign(static_cast<std::size_t>(pros.rows()), false);
      pmx.normalized = true;
      write_prosody_csv(base.string() + ".prosody.csv", denormalize_prosody(pmx, features.prosody_stats).values, in.ids,
                        manifest.symbols);
      write_pitch_contour_csv(base.string() + ".pitch.csv", pred_fp);
      write_pitch_contour_csv(base.string() + ".ref_pitch.csv", ref_fp);
    }
  }

  double mcd = 0.0;
  for (const auto& p : rep.paragraphs) mcd += p.mcd;
  rep.mcd = mcd / static_cast<double>(rep.paragraphs.size());
  Correlation* targets[3] = {&rep.lf0, &rep.intensity, &rep.duration};
  for (int c = 0; c < 3; ++c) {
    try {
      *targets[c] = pearson(cols_pred[c], cols_ref[c]);
    } catch (const Error&) {
      // Too few syllables or a constant column: r is undefined.
      *targets[c] = Correlation{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                                cols_ref[c].size()};
    }
  }
  const PauseErrors pe = pause_rmse(pred_t, ref_t);
  rep.pause_rmse = pe.rmse;
  rep.pauses = pe.gaps;
  if (pred_rows > 0.0) rep.predictor_rmse = (pred_sq / pred_rows).cwiseSqrt();
  return rep;
}

// ---------------------------------------------------------------------------

std::vector<SentenceProsody> sentence_prosody(const ParagraphRecord& p, const FrameProsody& fp) {
  std::vector<SentenceProsody> out;
  const auto total = static_cast<Eigen::Index>(fp.size());
  for (const auto& s : p.sentences) {
    const auto [a, b] = frame_range(s.start_s(), s.end_s(), fp.hop_s, total);
    if (b <= a) throw ValidationError("pattern analysis: paragraph " + p.id + " has a sentence without frames");
    double lf0 = 0.0, db = 0.0;
    int voiced = 0;
    for (Eigen::Index t = a; t < b; ++t) {
      const auto i = static_cast<std::size_t>(t);
      db += fp.intensity_db[i];
      if (fp.voiced[i]) {
        lf0 += std::log(fp.f0_hz[i]);
        ++voiced;
      }
    }
    SentenceProsody sp;
    sp.lf0 = voiced ? lf0 / voiced : 0.0;
    sp.intensity_db = db / static_cast<double>(b - a);
    sp.speech_rate = static_cast<double>(s.syllables.size()) / (s.end_s() - s.start_s());
    out.push_back(sp);
  }
  return out;
}

PatternReport pattern_report(const std::vector<std::vector<SentenceProsody>>& paragraphs) {
  PatternReport r;
  auto add_diff = [](PatternDiff& d, const SentenceProsody& a, const SentenceProsody& b) {
    d.lf0 += a.lf0 - b.lf0;
    d.intensity_db += a.intensity_db - b.intensity_db;
    d.speech_rate += a.speech_rate - b.speech_rate;
    ++d.pairs;
  };
  auto finish = [](PatternDiff& d) {
    if (d.pairs == 0) return;
    const double n = static_cast<double>(d.pairs);
    d.lf0 /= n;
    d.intensity_db /= n;
    d.speech_rate /= n;
  };
  for (const auto& para : paragraphs) {
    const auto codes = sentence_position_codes(para.size());
    for (std::size_t i = 0; i < para.size(); ++i) {
      auto& ps = r.by_position[static_cast<std::size_t>(codes[i].code)];
      ps.lf0 += para[i].lf0;
      ps.intensity_db += para[i].intensity_db;
      ps.speech_rate += para[i].speech_rate;
      ++ps.sentences;
      if (i + 1 < para.size()) add_diff(r.no_break, para[i], para[i + 1]);
    }
  }
  for (auto& ps : r.by_position)
    if (ps.sentences) {
      const double n = static_cast<double>(ps.sentences);
      ps.lf0 /= n;
      ps.intensity_db /= n;
      ps.speech_rate /= n;
    }
  finish(r.no_break);
  if (paragraphs.size() < 2) {
    r.notice = "fewer than two paragraphs: break differences omitted";
  } else {
    PatternDiff d;
    for (std::size_t k = 0; k + 1 < paragraphs.size(); ++k)
      if (!paragraphs[k].empty() && !paragraphs[k + 1].empty()) add_diff(d, paragraphs[k].back(), paragraphs[k + 1].front());
    finish(d);
    r.paragraph_break = d;
  }
  if (r.no_break.pairs == 0) r.notice += std::string(r.notice.empty() ? "" : "; ") + "no multi-sentence paragraphs";
  return r;
}

PatternReport paragraph_pattern_analysis(const CorpusManifest& manifest, const FrameConfig& frame) {
  std::vector<std::vector<SentenceProsody>> all;
  for (const auto& p : manifest.paragraphs) all.push_back(sentence_prosody(p, extract_frame_prosody(read_wav(p.audio_path), frame)));
  return pattern_report(all);
}

std::string PatternReport::to_key_value() const {
  std::ostringstream os;
  static const char* names[3] = {"first", "middle", "last"};
  for (int i = 0; i < 3; ++i) {
    const auto& p = by_position[static_cast<std::size_t>(i)];
    os << "position." << names[i] << ".sentences = " << p.sentences << '\n'
       << "position." << names[i] << ".lf0 = " << fmt(p.lf0) << '\n'
       << "position." << names[i] << ".intensity_db = " << fmt(p.intensity_db) << '\n'
       << "position." << names[i] << ".speech_rate = " << fmt(p.speech_rate) << '\n';
  }
  auto diff = [&](const char* name, const PatternDiff& d) {
    os << name << ".pairs = " << d.pairs << '\n'
       << name << ".lf0 = " << fmt(d.lf0) << '\n'
       << name << ".intensity_db = " << fmt(d.intensity_db) << '\n'
       << name << ".speech_rate = " << fmt(d.speech_rate) << '\n';
  };
  diff("no_break", no_break);
  if (paragraph_break) diff("break", *paragraph_break);
  else os << "break = absent\n";
  if (!notice.empty()) os << "notice = " << notice << '\n';
  return os.str();
}

std::string PatternReport::to_table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %10s %10s %14s %10s\n", "position", "LF0", "Int (dB)", "Rate (syl/s)", "sentences");
  os << line;
  static const char* names[3] = {"first", "middle", "last"};
  for (int i = 0; i < 3; ++i) {
    const auto& p = by_position[static_cast<std::size_t>(i)];
    std::snprintf(line, sizeof line, "%-10s %10.4f %10.3f %14.3f %10zu\n", names[i], p.lf0, p.intensity_db,
                  p.speech_rate, p.sentences);
    os << line;
  }
  os << '\n';
  std::snprintf(line, sizeof line, "%-10s %10s %10s %14s %10s\n", "diff", "LF0", "Int (dB)", "Rate (syl/s)", "pairs");
  os << line;
  auto row = [&](const char* name, const PatternDiff& d) {
    std::snprintf(line, sizeof line, "%-10s %+10.4f %+10.3f %+14.3f %10zu\n", name, d.lf0, d.intensity_db,
                  d.speech_rate, d.pairs);
    os << line;
  };
  row("no-break", no_break);
  if (paragraph_break) row("break", *paragraph_break);
  else os << "break      absent\n";
  if (!notice.empty()) os << "note: " << notice << '\n';
  return os.str();
}

void write_pitch_contour_csv(const std::filesystem::path& path, const FrameProsody& fp) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "time_s,f0_hz\n";
  for (std::size_t t = 0; t < fp.size(); ++t) out << fmt(static_cast<double>(t) * fp.hop_s, 4) << ',' << fmt(fp.f0_hz[t], 3) << '\n';
}

}  // namespace paratts
