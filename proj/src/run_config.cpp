#include "paratts/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "paratts/error.hpp"

namespace paratts {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ValidationError("config: '" + std::string(v) + "' is not a valid value for " + std::string(key));
  return out;
}

struct Entry {
  std::string name;
  std::string doc;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Numeric fields reached through a projection that works on const and
// mutable configs alike.
template <class T, class Proj>
Entry field(std::string name, std::string doc, Proj proj) {
  Entry e;
  e.name = std::move(name);
  e.doc = std::move(doc);
  e.set = [proj](RunConfig& c, std::string_view key, std::string_view v) { proj(c) = parse_number<T>(key, v); };
  e.get = [proj](const RunConfig& c) {
    if constexpr (std::is_floating_point_v<T>) return num(proj(c));
    else return std::to_string(proj(c));
  };
  return e;
}

// Model keys other than the two that always follow the corpus and signal.
const std::map<std::string, std::string>& model_docs() {
  static const std::map<std::string, std::string> docs{
      {"ablation", "context branches: baseline, ling, pros, com or para"},
      {"embed_dim", "phoneme embedding width"},
      {"encoder_prenet", "encoder pre-net layer widths, comma separated"},
      {"encoder_dropout", "encoder pre-net dropout rate"},
      {"cbhg_bank_k", "CBHG convolution bank size K"},
      {"cbhg_bank_channels", "channels per bank convolution"},
      {"cbhg_proj_channels", "CBHG projection channels"},
      {"cbhg_highway_layers", "CBHG highway layers"},
      {"cbhg_highway_dim", "CBHG highway width"},
      {"cbhg_gru_dim", "CBHG GRU width per direction"},
      {"attention_heads", "heads of the linguistic context attention"},
      {"prosody_channels", "prosody encoder conv channels, comma separated"},
      {"prosody_kernel", "prosody encoder conv kernel"},
      {"prosody_gru", "prosody encoder GRU width (equals the encoder output width)"},
      {"predictor", "prosody predictor: conv or gru"},
      {"predictor_channels", "conv predictor channels"},
      {"predictor_kernel", "conv predictor kernel"},
      {"predictor_dropout", "predictor dropout rate"},
      {"predictor_gru", "GRU predictor width"},
      {"gmm_mixtures", "GMM attention mixtures"},
      {"gmm_dim", "GMM attention hidden width"},
      {"gmm_delta_bias", "bias added before the softplus of the mean step"},
      {"gmm_scale_bias", "bias added before the softplus of the scale"},
      {"decoder_prenet", "decoder pre-net layer widths, comma separated"},
      {"decoder_dropout", "decoder pre-net dropout rate (kept at inference)"},
      {"decoder_lstm", "decoder LSTM width"},
      {"decoder_layers", "decoder LSTM layers"},
      {"postnet_channels", "post-net channels"},
      {"postnet_kernel", "post-net kernel"},
      {"postnet_layers", "post-net layers, the last one linear"},
  };
  return docs;
}

std::string model_value(const ModelConfig& m, std::string_view key) {
  std::istringstream in(m.to_text());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (trim(std::string_view(line).substr(0, eq)) == key) return std::string(trim(std::string_view(line).substr(eq + 1)));
  }
  throw ValidationError("config: unknown key model." + std::string(key));
}

ModelConfig preset(std::string_view name) {
  if (name == "toy") return ModelConfig::toy();
  if (name == "full") return ModelConfig::full();
  throw ValidationError("config: model.preset must be toy or full, got '" + std::string(name) + "'");
}

std::vector<Entry> build_entries() {
  std::vector<Entry> t;
  t.push_back(field<std::uint64_t>("seed", "seed for corpus generation, initialisation, batching and decoding",
                                   [](auto& c) -> auto& { return c.seed; }));

#define PARATTS_DATA(T, key, doc) \
  t.push_back(field<T>("data." #key, doc, [](auto& c) -> auto& { return c.data.key; }))
  PARATTS_DATA(int, paragraphs, "paragraphs in a generated corpus");
  PARATTS_DATA(int, test_paragraphs, "trailing paragraphs tagged as test");
  PARATTS_DATA(int, sentences_min, "fewest sentences per paragraph");
  PARATTS_DATA(int, sentences_max, "most sentences per paragraph");
  PARATTS_DATA(int, phones_min, "fewest phones per sentence");
  PARATTS_DATA(int, phones_max, "most phones per sentence");
  PARATTS_DATA(int, phones_per_syllable_min, "fewest phones per syllable");
  PARATTS_DATA(int, phones_per_syllable_max, "most phones per syllable");
  PARATTS_DATA(int, symbols, "phone symbols, not counting the boundary symbol");
  PARATTS_DATA(int, sample_rate, "generated audio sample rate in Hz");
  PARATTS_DATA(double, base_f0_hz, "sentence F0 before declination");
  PARATTS_DATA(double, symbol_f0_spread_hz, "per-symbol F0 offsets are drawn in +-spread");
  PARATTS_DATA(double, declination_hz, "F0 added per sentence index");
  PARATTS_DATA(double, reset_hz, "extra F0 on the first sentence");
  PARATTS_DATA(double, base_db, "sentence level before declination");
  PARATTS_DATA(double, symbol_db_spread, "per-symbol level offsets are drawn in +-spread");
  PARATTS_DATA(double, intensity_declination_db, "level added per sentence index");
  PARATTS_DATA(double, intensity_reset_db, "extra level on the first sentence");
  PARATTS_DATA(double, phone_duration_min_s, "shortest per-symbol phone duration");
  PARATTS_DATA(double, phone_duration_max_s, "longest per-symbol phone duration");
  PARATTS_DATA(double, tempo_declination, "duration scale added per sentence index");
  PARATTS_DATA(double, edge_lengthening, "duration scale of the first and last sentence");
  PARATTS_DATA(double, pause_s, "mean pause between sentences");
  PARATTS_DATA(double, pause_jitter_s, "pauses vary by up to this much");
  PARATTS_DATA(double, edge_silence_s, "silence before the first and after the last sentence");
  PARATTS_DATA(double, noise_db, "background noise level");
#undef PARATTS_DATA

#define PARATTS_SIGNAL(T, key, doc) \
  t.push_back(field<T>("signal." #key, doc, [](auto& c) -> auto& { return c.signal.key; }))
  PARATTS_SIGNAL(int, sample_rate, "expected audio sample rate in Hz");
  PARATTS_SIGNAL(double, window_s, "analysis window length");
  PARATTS_SIGNAL(double, hop_s, "frame hop");
  PARATTS_SIGNAL(int, n_fft, "FFT size");
  PARATTS_SIGNAL(int, n_mels, "mel bands; the model output width follows it");
  PARATTS_SIGNAL(double, fmin_hz, "lowest mel filter edge");
  PARATTS_SIGNAL(double, fmax_hz, "highest mel filter edge");
  PARATTS_SIGNAL(double, f0_min_hz, "lowest F0 searched");
  PARATTS_SIGNAL(double, f0_max_hz, "highest F0 searched");
  PARATTS_SIGNAL(double, voicing_threshold, "normalised autocorrelation needed for a voiced frame");
  PARATTS_SIGNAL(double, mel_floor, "mel power floor before the log");
#undef PARATTS_SIGNAL

  {
    Entry e;
    e.name = "model.preset";
    e.doc = "starting point for the model keys: toy or full";
    e.set = [](RunConfig& c, std::string_view, std::string_view v) {
      c.model = preset(v);
      c.model_preset = std::string(v);
    };
    e.get = [](const RunConfig& c) { return c.model_preset; };
    t.push_back(std::move(e));
  }
  for (const auto& [key, doc] : model_docs()) {
    Entry e;
    e.name = "model." + key;
    e.doc = doc;
    e.set = [key](RunConfig& c, std::string_view, std::string_view v) { c.model.set(key, v); };
    e.get = [key](const RunConfig& c) { return model_value(c.model, key); };
    t.push_back(std::move(e));
  }

#define PARATTS_TRAIN(T, key, doc) \
  t.push_back(field<T>("train." #key, doc, [](auto& c) -> auto& { return c.train.key; }))
  PARATTS_TRAIN(int, batch_size, "examples per step");
  PARATTS_TRAIN(int, steps, "optimiser steps");
  PARATTS_TRAIN(double, learning_rate, "learning rate at step 0");
  PARATTS_TRAIN(double, final_learning_rate, "learning rate at the last step (exponential decay)");
  PARATTS_TRAIN(double, beta1, "Adam beta1");
  PARATTS_TRAIN(double, beta2, "Adam beta2");
  PARATTS_TRAIN(double, epsilon, "Adam epsilon");
  PARATTS_TRAIN(double, clip_norm, "global gradient norm limit, <= 0 disables");
  PARATTS_TRAIN(int, checkpoint_every, "steps between checkpoints, 0 for the final one only");
#undef PARATTS_TRAIN
  t.push_back(field<double>("train.recon_weight", "weight of the reconstruction loss",
                            [](auto& c) -> auto& { return c.train.weights.recon; }));
  t.push_back(field<double>("train.stop_weight", "weight of the stop-token loss",
                            [](auto& c) -> auto& { return c.train.weights.stop; }));
  t.push_back(field<double>("train.prosody_weight", "weight of the prosody prediction loss",
                            [](auto& c) -> auto& { return c.train.weights.prosody; }));
  {
    Entry e;
    e.name = "train.prosody_loss";
    e.doc = "prosody prediction loss: mse or l1";
    e.set = [](RunConfig& c, std::string_view, std::string_view v) {
      if (v == "mse") c.train.prosody_loss = ProsodyLossKind::kMse;
      else if (v == "l1") c.train.prosody_loss = ProsodyLossKind::kL1;
      else throw ValidationError("config: train.prosody_loss must be mse or l1, got '" + std::string(v) + "'");
    };
    e.get = [](const RunConfig& c) { return std::string(c.train.prosody_loss == ProsodyLossKind::kMse ? "mse" : "l1"); };
    t.push_back(std::move(e));
  }

  {
    Entry e;
    e.name = "eval.split";
    e.doc = "split evaluated: train or test";
    e.set = [](RunConfig& c, std::string_view, std::string_view v) {
      if (v == "train") c.eval.split = Split::kTrain;
      else if (v == "test") c.eval.split = Split::kTest;
      else throw ValidationError("config: eval.split must be train or test, got '" + std::string(v) + "'");
    };
    e.get = [](const RunConfig& c) { return std::string(split_name(c.eval.split)); };
    t.push_back(std::move(e));
  }
  t.push_back(field<int>("eval.griffin_lim_iterations", "phase reconstruction iterations",
                         [](auto& c) -> auto& { return c.eval.griffin_lim_iterations; }));
  t.push_back(field<int>("eval.max_frames", "decoder frame cap; hitting it marks the output truncated",
                         [](auto& c) -> auto& { return c.eval.limits.max_frames; }));
  t.push_back(field<int>("eval.min_frames", "frames decoded before the stop token is honoured",
                         [](auto& c) -> auto& { return c.eval.limits.min_frames; }));
  t.push_back(field<double>("eval.stop_threshold", "stop probability that ends decoding",
                            [](auto& c) -> auto& { return c.eval.limits.stop_threshold; }));
  return t;
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> t = build_entries();
  return t;
}

const Entry& find_entry(std::string_view key) {
  for (const auto& e : entries())
    if (e.name == key) return e;
  throw ValidationError("config: unknown key '" + std::string(key) + "'");
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value, std::string_view source) {
  const Entry& e = find_entry(key);
  e.set(*this, key, trim(value));
  sources[e.name] = std::string(source);
}

std::string RunConfig::get(std::string_view key) const { return find_entry(key).get(*this); }

const std::vector<KeyInfo>& RunConfig::keys() {
  static const std::vector<KeyInfo> k = [] {
    std::vector<KeyInfo> out;
    for (const auto& e : entries()) out.push_back({e.name, e.doc});
    return out;
  }();
  return k;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  std::string section;
  for (const auto& e : entries()) {
    const auto dot = e.name.find('.');
    const std::string s = dot == std::string::npos ? "" : e.name.substr(0, dot);
    if (s != section) {
      os << "\n[" << s << "]\n";
      section = s;
    }
    os << (dot == std::string::npos ? e.name : e.name.substr(dot + 1)) << " = " << e.get(*this) << '\n';
  }
  return os.str();
}

std::string RunConfig::describe() const {
  std::ostringstream os;
  for (const auto& e : entries()) {
    const auto it = sources.find(e.name);
    os << e.name << " = " << e.get(*this) << " [" << (it == sources.end() ? "default" : it->second) << "]\n";
  }
  return os.str();
}

std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text, std::string_view origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto hash = line.find('#');
    line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "data" && section != "signal" && section != "model" && section != "train" && section != "eval")
        throw ValidationError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ValidationError(where + ": expected key = value");
    const std::string key = std::string(trim(line.substr(0, eq)));
    const std::string full = section.empty() ? key : section + "." + key;
    bool known = false;
    for (const auto& e : entries()) known = known || e.name == full;
    if (!known) throw ValidationError(where + ": unknown key '" + full + "'");
    out.emplace_back(full, std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

RunConfig load_run_config(const std::filesystem::path& file,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::vector<std::pair<std::string, std::string>> from_file;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read config file " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    from_file = parse_config_text(ss.str(), file.string());
  }
  RunConfig c;
  // A preset replaces the whole model section, so it goes first.
  for (const auto& [k, v] : from_file)
    if (k == "model.preset") c.set(k, v, "file");
  for (const auto& [k, v] : overrides)
    if (k == "model.preset") c.set(k, v, "cli");
  for (const auto& [k, v] : from_file)
    if (k != "model.preset") c.set(k, v, "file");
  for (const auto& [k, v] : overrides)
    if (k != "model.preset") c.set(k, v, "cli");
  c.data.validate();
  c.signal.validate();
  c.train.validate();
  if (c.eval.griffin_lim_iterations < 0) throw ValidationError("config: eval.griffin_lim_iterations must be >= 0");
  if (c.eval.limits.max_frames < 1 || c.eval.limits.min_frames < 0)
    throw ValidationError("config: eval frame limits must be positive");
  return c;
}

}  // namespace paratts
