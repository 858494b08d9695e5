#include "paratts/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>

#include "paratts/array_io.hpp"
#include "paratts/checkpoint.hpp"
#include "paratts/error.hpp"
#include "paratts/eval.hpp"
#include "paratts/run_config.hpp"
#include "paratts/synth_corpus.hpp"
#include "paratts/wav.hpp"

namespace paratts {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  bool verbose = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "config file (default: $" + std::string(kConfigEnv) + ")");
  sub->add_option("--set", c.sets, "override one key, section.key=value (repeatable)");
  sub->add_option_function<std::uint64_t>(
      "--seed", [&c](std::uint64_t s) { c.seed = s; c.seed_given = true; }, "seed (overrides the config)");
  sub->add_option("--out", c.out, "output directory")->required();
  sub->add_flag("--verbose", c.verbose, "print every resolved config key");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

// Resolves the configuration, logs where values came from and records the
// effective configuration under the output directory.
RunConfig resolve(const Common& c, std::vector<std::pair<std::string, std::string>> extra, std::ostream& err) {
  fs::path file = c.config;
  std::string origin = "--config";
  if (file.empty()) {
    if (const char* env = std::getenv(kConfigEnv); env && *env) {
      file = env;
      origin = std::string("$") + kConfigEnv;
    }
  }
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + s + "'");
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  for (auto& e : extra) overrides.push_back(std::move(e));
  if (c.seed_given) overrides.emplace_back("seed", std::to_string(c.seed));
  RunConfig rc = load_run_config(file, overrides);

  err << "config: " << (file.empty() ? std::string("built-in defaults only") : file.string() + " (from " + origin + ")")
      << "; precedence command line > file > default\n";
  std::size_t defaults = 0;
  for (const auto& k : RunConfig::keys()) {
    const auto it = rc.sources.find(k.name);
    if (it == rc.sources.end()) {
      ++defaults;
      if (c.verbose) err << "  " << k.name << " = " << rc.get(k.name) << " [default]\n";
    } else {
      err << "  " << k.name << " = " << rc.get(k.name) << " [" << it->second << "]\n";
    }
  }
  err << "  " << defaults << " other keys at built-in defaults\n";
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "run_config.ini", rc.to_text());
  return rc;
}

ModelConfig model_for(const RunConfig& rc, const CorpusManifest& m) {
  ModelConfig mc = rc.model;
  mc.n_symbols = m.symbols.size();
  mc.n_mels = rc.signal.n_mels;
  return mc;
}

struct LoadedModel {
  Checkpoint ck;
  std::unique_ptr<ParaTTS> model;
};

LoadedModel load_model(const fs::path& path, const CorpusManifest& m) {
  LoadedModel l;
  l.ck = read_checkpoint(path);
  const ModelConfig mc = l.ck.config();
  if (mc.n_symbols != m.symbols.size())
    throw ValidationError("checkpoint " + path.string() + " expects " + std::to_string(mc.n_symbols) +
                          " symbols but the corpus has " + std::to_string(m.symbols.size()));
  l.model = std::make_unique<ParaTTS>(mc, l.ck.seed);
  restore_parameters(*l.model, l.ck);
  return l;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Paragraph-level speech synthesis toolkit", "paratts"};
  app.require_subcommand(1);
  Common common;

  std::string corpus, features, checkpoint, ablation, resume, gt_prosody_file;
  std::vector<std::string> paragraph_ids;
  int steps = 0;
  bool gt_prosody = false, dump = false, contours = false;

  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic paragraph corpus");
  add_common(gen, common);

  auto* stats = app.add_subcommand("stats", "corpus statistics");
  add_common(stats, common);
  stats->add_option("--corpus", corpus, "manifest.jsonl")->required();

  auto* extract = app.add_subcommand("extract", "mel and phone-level prosody features");
  add_common(extract, common);
  extract->add_option("--corpus", corpus, "manifest.jsonl")->required();

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, common);
  train->add_option("--corpus", corpus, "manifest.jsonl")->required();
  train->add_option("--features", features, "directory written by extract")->required();
  train->add_option("--ablation", ablation, "baseline, ling, pros, com or para (overrides model.ablation)")
      ->check(CLI::IsMember({"baseline", "ling", "pros", "com", "para"}));
  train->add_option("--steps", steps, "overrides train.steps")->check(CLI::PositiveNumber);
  train->add_option("--resume", resume, "checkpoint to continue from");

  auto* synth = app.add_subcommand("synth", "synthesize paragraphs of a corpus");
  add_common(synth, common);
  synth->add_option("--corpus", corpus, "manifest.jsonl")->required();
  synth->add_option("--checkpoint", checkpoint, "trained model")->required();
  synth->add_option("--paragraph", paragraph_ids, "paragraph id (repeatable; default: the eval split)");
  synth->add_option("--gt-prosody", gt_prosody_file,
                    "raw phone prosody array (as written by extract) used instead of the prediction; one paragraph only");

  auto* eval = app.add_subcommand("eval", "objective metrics over a split");
  add_common(eval, common);
  eval->add_option("--corpus", corpus, "manifest.jsonl")->required();
  eval->add_option("--features", features, "directory written by extract")->required();
  eval->add_option("--checkpoint", checkpoint, "trained model")->required();
  eval->add_flag("--gt-prosody", gt_prosody, "condition on extracted prosody instead of the prediction");
  eval->add_flag("--dump", dump, "write per-paragraph audio, alignments and contours");

  auto* analyze = app.add_subcommand("analyze", "intra- and inter-paragraph prosody patterns");
  add_common(analyze, common);
  analyze->add_option("--corpus", corpus, "manifest.jsonl")->required();
  analyze->add_flag("--pitch-contours", contours, "also write one pitch contour CSV per paragraph");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    err << app.help();
    return kExitUsage;
  }

  try {
    const fs::path out_dir = common.out;
    if (gen->parsed()) {
      const RunConfig rc = resolve(common, {}, err);
      const SynthCorpus c = generate_synthetic_corpus(rc.data, rc.seed, out_dir);
      out << "wrote " << c.manifest.paragraphs.size() << " paragraphs to " << c.manifest_path.string() << '\n';
    } else if (stats->parsed()) {
      resolve(common, {}, err);
      const StatsReport r = corpus_stats(load_manifest(corpus));
      write_text(out_dir / "stats.txt", r.to_key_value());
      write_text(out_dir / "stats_table.txt", r.to_table());
      out << r.to_table();
    } else if (extract->parsed()) {
      const RunConfig rc = resolve(common, {}, err);
      const CorpusManifest m = load_manifest(corpus);
      save_features(out_dir, extract_features(m, rc.signal));
      out << "wrote features for " << m.paragraphs.size() << " paragraphs to " << out_dir.string() << '\n';
    } else if (train->parsed()) {
      std::vector<std::pair<std::string, std::string>> extra;
      if (!ablation.empty()) extra.emplace_back("model.ablation", ablation);
      if (steps > 0) extra.emplace_back("train.steps", std::to_string(steps));
      RunConfig rc = resolve(common, extra, err);
      rc.train.seed = rc.seed;
      const CorpusManifest m = load_manifest(corpus);
      const FeatureSet f = load_features(features);
      if (f.frame.n_mels != rc.signal.n_mels || f.frame.hop_s != rc.signal.hop_s)
        throw ValidationError("features in " + features + " were extracted with another signal configuration");
      ParaTTS model(model_for(rc, m), rc.seed);
      FitOptions fo;
      fo.out_dir = out_dir;
      fo.resume_from = resume;
      fo.mel_stats = f.mel_stats;
      fo.prosody_stats = f.prosody_stats;
      const int every = std::max(1, rc.train.steps / 20);
      fo.on_step = [&](const StepReport& r) {
        if (r.step % every == 0 || r.step + 1 == rc.train.steps)
          err << "step " << r.step << " recon " << r.loss.recon << " stop " << r.loss.stop << " prosody "
              << r.loss.prosody << " lr " << r.lr << '\n';
      };
      err << "training " << ablation_name(rc.model.ablation) << " with " << model.params().scalar_count()
          << " parameters\n";
      const FitResult res = fit(model, rc.train, build_training_examples(m, f, Split::kTrain), fo);
      out << "final checkpoint " << res.final_checkpoint.string() << '\n';
    } else if (synth->parsed()) {
      const RunConfig rc = resolve(common, {}, err);
      const CorpusManifest m = load_manifest(corpus);
      const LoadedModel lm = load_model(checkpoint, m);
      std::vector<const ParagraphRecord*> targets;
      if (paragraph_ids.empty()) targets = m.split(rc.eval.split);
      for (const auto& id : paragraph_ids) targets.push_back(&m.paragraph(id));
      if (targets.empty()) throw ValidationError("synth: no paragraphs selected");
      Mat gt;
      if (!gt_prosody_file.empty()) {
        if (targets.size() != 1) throw UsageError("--gt-prosody needs exactly one --paragraph");
        ProsodyMatrix raw;
        raw.values = load_array(gt_prosody_file);
        raw.unvoiced.assign(static_cast<std::size_t>(raw.values.rows()), false);
        for (Eigen::Index i = 0; i < raw.values.rows(); ++i)
          raw.unvoiced[static_cast<std::size_t>(i)] = raw.values(i, 0) == 0.0;
        gt = normalize_prosody(raw, lm.ck.prosody_stats).values;
      }
      for (const ParagraphRecord* p : targets) {
        const ParagraphInput in = paragraph_input(*p, m.symbols);
        SynthesisOptions so;
        so.limits = rc.eval.limits;
        so.seed = rc.seed;
        if (!gt_prosody_file.empty()) so.gt_prosody = &gt;
        const SynthesisResult r = synthesize_paragraph(*lm.model, in, lm.ck.mel_stats, so);
        const Waveform wav = invert_mel(r.mel, rc.signal, rc.eval.griffin_lim_iterations);
        const std::string base = (out_dir / p->id).string();
        write_wav(base + ".wav", wav);
        save_array(base + ".mel", r.mel, "frame log-mel");
        save_array(base + ".align", r.alignments, "frame x phone attention");
        if (r.predicted_prosody.size() > 0) {
          ProsodyMatrix pm;
          pm.values = r.predicted_prosody;
          pm.unvoiced.assign(static_cast<std::size_t>(pm.values.rows()), false);
          pm.normalized = true;
          write_prosody_csv(base + ".prosody.csv", denormalize_prosody(pm, lm.ck.prosody_stats).values, in.ids,
                            m.symbols);
        }
        write_pitch_contour_csv(base + ".pitch.csv", extract_frame_prosody(wav, rc.signal));
        out << p->id << ": " << r.mel.rows() << " frames" << (r.truncated ? " (truncated at the frame cap)" : "")
            << '\n';
      }
    } else if (eval->parsed()) {
      const RunConfig rc = resolve(common, {}, err);
      const CorpusManifest m = load_manifest(corpus);
      FeatureSet f = load_features(features);
      const LoadedModel lm = load_model(checkpoint, m);
      // The model only understands the statistics it was trained with.
      f.mel_stats = lm.ck.mel_stats;
      f.prosody_stats = lm.ck.prosody_stats;
      EvalOptions eo;
      eo.gt_prosody = gt_prosody;
      eo.griffin_lim_iterations = rc.eval.griffin_lim_iterations;
      eo.limits = rc.eval.limits;
      eo.seed = rc.seed;
      if (dump) eo.dump_dir = out_dir / "dump";
      const MetricReport r = evaluate(*lm.model, m, f, rc.eval.split, eo);
      write_text(out_dir / "metrics.txt", r.to_key_value());
      write_text(out_dir / "metrics_table.txt", r.to_table());
      for (const auto& p : r.paragraphs)
        if (p.truncated) err << "warning: paragraph " << p.id << " hit the frame cap\n";
      out << r.to_table();
    } else if (analyze->parsed()) {
      const RunConfig rc = resolve(common, {}, err);
      const CorpusManifest m = load_manifest(corpus);
      const PatternReport r = paragraph_pattern_analysis(m, rc.signal);
      write_text(out_dir / "pattern.txt", r.to_key_value());
      write_text(out_dir / "pattern_table.txt", r.to_table());
      if (contours) {
        fs::create_directories(out_dir / "pitch");
        for (const auto& p : m.paragraphs)
          write_pitch_contour_csv(out_dir / "pitch" / (p.id + ".csv"), extract_frame_prosody(read_wav(p.audio_path), rc.signal));
      }
      if (!r.notice.empty()) err << "notice: " << r.notice << '\n';
      out << r.to_table();
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ShapeError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace paratts
