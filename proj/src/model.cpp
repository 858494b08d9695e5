#include "paratts/model.hpp"

#include <zlib.h>

#include <charconv>
#include <cmath>
#include <sstream>

#include "paratts/error.hpp"

namespace paratts {

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::kBaseline: return "baseline";
    case Ablation::kLing: return "ling";
    case Ablation::kPros: return "pros";
    case Ablation::kCom: return "com";
    case Ablation::kPara: return "para";
  }
  return "para";
}

Ablation parse_ablation(std::string_view name) {
  for (Ablation a : {Ablation::kBaseline, Ablation::kLing, Ablation::kPros, Ablation::kCom, Ablation::kPara})
    if (ablation_name(a) == name) return a;
  throw ValidationError("unknown ablation '" + std::string(name) +
                        "' (expected baseline, ling, pros, com or para)");
}

BranchFlags branches(Ablation a) {
  switch (a) {
    case Ablation::kBaseline: return {false, false, false};
    case Ablation::kLing: return {true, false, false};
    case Ablation::kPros: return {false, true, false};
    case Ablation::kCom: return {true, true, false};
    case Ablation::kPara: return {true, true, true};
  }
  return {};
}

// ---------------------------------------------------------------------------

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.embed_dim = 64;
  c.encoder_prenet = {64, 64};
  c.cbhg.bank_k = 4;
  c.cbhg.bank_channels = 32;
  c.cbhg.proj_channels = 64;
  c.cbhg.highway_layers = 4;
  c.cbhg.highway_dim = 32;
  c.cbhg.gru_dim = 32;
  c.prosody_channels = {8, 8, 16, 16, 32, 32};
  c.prosody_gru = 64;
  c.predictor_channels = 64;
  c.predictor_gru = 32;
  c.gmm_dim = 32;
  c.decoder_prenet = {64, 64};
  c.decoder_lstm = 128;
  c.postnet_channels = 64;
  // The toy corpus spends about eight frames per phone; start the attention
  // advancing at that pace instead of one phone per frame.
  c.gmm_delta_bias = std::log(std::expm1(0.125));
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw ValidationError(std::string("model config: ") + what + " must be >= 1");
  };
  positive(n_symbols, "n_symbols");
  positive(n_mels, "n_mels");
  positive(embed_dim, "embed_dim");
  if (encoder_prenet.empty() || decoder_prenet.empty())
    throw ValidationError("model config: pre-nets need at least one layer");
  for (int w : encoder_prenet) positive(w, "encoder_prenet width");
  for (int w : decoder_prenet) positive(w, "decoder_prenet width");
  for (int w : prosody_channels) positive(w, "prosody channel");
  positive(cbhg.bank_k, "cbhg.bank_k");
  positive(attention_heads, "attention_heads");
  if (model_dim() % attention_heads != 0)
    throw ValidationError("model config: attention_heads must divide the model dimension");
  if (prosody_gru != model_dim())
    throw ValidationError("model config: prosody_gru must equal the model dimension (2 x cbhg.gru_dim)");
  positive(gmm_mixtures, "gmm_mixtures");
  positive(gmm_dim, "gmm_dim");
  positive(decoder_lstm, "decoder_lstm");
  positive(decoder_layers, "decoder_layers");
  positive(postnet_layers, "postnet_layers");
  positive(postnet_kernel, "postnet_kernel");
  positive(prosody_kernel, "prosody_kernel");
  positive(predictor_kernel, "predictor_kernel");
  for (double p : {encoder_dropout, decoder_dropout, predictor_dropout})
    if (p < 0.0 || p >= 1.0) throw ValidationError("model config: dropout must lie in [0, 1)");
}

namespace {

std::string join(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

// Shortest text that reads back to the same double.
std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "ablation = " << ablation_name(ablation) << '\n'
     << "n_symbols = " << n_symbols << '\n'
     << "n_mels = " << n_mels << '\n'
     << "embed_dim = " << embed_dim << '\n'
     << "encoder_prenet = " << join(encoder_prenet) << '\n'
     << "encoder_dropout = " << num(encoder_dropout) << '\n'
     << "cbhg_bank_k = " << cbhg.bank_k << '\n'
     << "cbhg_bank_channels = " << cbhg.bank_channels << '\n'
     << "cbhg_proj_channels = " << cbhg.proj_channels << '\n'
     << "cbhg_highway_layers = " << cbhg.highway_layers << '\n'
     << "cbhg_highway_dim = " << cbhg.highway_dim << '\n'
     << "cbhg_gru_dim = " << cbhg.gru_dim << '\n'
     << "attention_heads = " << attention_heads << '\n'
     << "prosody_channels = " << join(prosody_channels) << '\n'
     << "prosody_kernel = " << prosody_kernel << '\n'
     << "prosody_gru = " << prosody_gru << '\n'
     << "predictor = " << (predictor == PredictorKind::kConv ? "conv" : "gru") << '\n'
     << "predictor_channels = " << predictor_channels << '\n'
     << "predictor_kernel = " << predictor_kernel << '\n'
     << "predictor_dropout = " << num(predictor_dropout) << '\n'
     << "predictor_gru = " << predictor_gru << '\n'
     << "gmm_mixtures = " << gmm_mixtures << '\n'
     << "gmm_dim = " << gmm_dim << '\n'
     << "gmm_delta_bias = " << num(gmm_delta_bias) << '\n'
     << "gmm_scale_bias = " << num(gmm_scale_bias) << '\n'
     << "decoder_prenet = " << join(decoder_prenet) << '\n'
     << "decoder_dropout = " << num(decoder_dropout) << '\n'
     << "decoder_lstm = " << decoder_lstm << '\n'
     << "decoder_layers = " << decoder_layers << '\n'
     << "postnet_channels = " << postnet_channels << '\n'
     << "postnet_kernel = " << postnet_kernel << '\n'
     << "postnet_layers = " << postnet_layers << '\n';
  return os.str();
}

std::uint32_t ModelConfig::hash() const {
  const std::string t = to_text();
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(t.data()), static_cast<uInt>(t.size())));
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

int to_int(std::string_view key, const std::string& v) {
  std::size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    throw ValidationError("model config: " + std::string(key) + " expects an integer, got '" + v + "'");
  return out;
}

double to_double(std::string_view key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    throw ValidationError("model config: " + std::string(key) + " expects a number, got '" + v + "'");
  return out;
}

std::vector<int> to_ints(std::string_view key, const std::string& v) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    const auto comma = v.find(',', pos);
    out.push_back(to_int(key, trim(std::string_view(v).substr(pos, comma - pos))));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

void ModelConfig::set(std::string_view key, std::string_view raw) {
  const std::string v = trim(raw);
  if (key == "ablation") ablation = parse_ablation(v);
  else if (key == "n_symbols") n_symbols = to_int(key, v);
  else if (key == "n_mels") n_mels = to_int(key, v);
  else if (key == "embed_dim") embed_dim = to_int(key, v);
  else if (key == "encoder_prenet") encoder_prenet = to_ints(key, v);
  else if (key == "encoder_dropout") encoder_dropout = to_double(key, v);
  else if (key == "cbhg_bank_k") cbhg.bank_k = to_int(key, v);
  else if (key == "cbhg_bank_channels") cbhg.bank_channels = to_int(key, v);
  else if (key == "cbhg_proj_channels") cbhg.proj_channels = to_int(key, v);
  else if (key == "cbhg_highway_layers") cbhg.highway_layers = to_int(key, v);
  else if (key == "cbhg_highway_dim") cbhg.highway_dim = to_int(key, v);
  else if (key == "cbhg_gru_dim") cbhg.gru_dim = to_int(key, v);
  else if (key == "attention_heads") attention_heads = to_int(key, v);
  else if (key == "prosody_channels") prosody_channels = to_ints(key, v);
  else if (key == "prosody_kernel") prosody_kernel = to_int(key, v);
  else if (key == "prosody_gru") prosody_gru = to_int(key, v);
  else if (key == "predictor") {
    if (v == "conv") predictor = PredictorKind::kConv;
    else if (v == "gru") predictor = PredictorKind::kGru;
    else throw ValidationError("model config: predictor must be conv or gru, got '" + v + "'");
  } else if (key == "predictor_channels") predictor_channels = to_int(key, v);
  else if (key == "predictor_kernel") predictor_kernel = to_int(key, v);
  else if (key == "predictor_dropout") predictor_dropout = to_double(key, v);
  else if (key == "predictor_gru") predictor_gru = to_int(key, v);
  else if (key == "gmm_mixtures") gmm_mixtures = to_int(key, v);
  else if (key == "gmm_dim") gmm_dim = to_int(key, v);
  else if (key == "gmm_delta_bias") gmm_delta_bias = to_double(key, v);
  else if (key == "gmm_scale_bias") gmm_scale_bias = to_double(key, v);
  else if (key == "decoder_prenet") decoder_prenet = to_ints(key, v);
  else if (key == "decoder_dropout") decoder_dropout = to_double(key, v);
  else if (key == "decoder_lstm") decoder_lstm = to_int(key, v);
  else if (key == "decoder_layers") decoder_layers = to_int(key, v);
  else if (key == "postnet_channels") postnet_channels = to_int(key, v);
  else if (key == "postnet_kernel") postnet_kernel = to_int(key, v);
  else if (key == "postnet_layers") postnet_layers = to_int(key, v);
  else throw ValidationError("model config: unknown key '" + std::string(key) + "'");
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("model config: malformed line '" + line + "'");
    c.set(trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
  }
  return c;
}

// ---------------------------------------------------------------------------

std::uint64_t context_seed(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x70617261u};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

ParaTTS::ParaTTS(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng init(seed);
  backbone_ = std::make_unique<Backbone>(params_, cfg_, init);
  Rng ctx(context_seed(seed));
  const BranchFlags f = flags();
  if (f.ling) ling_ = std::make_unique<LinguisticsAware>(params_, cfg_, ctx);
  if (f.pros) {
    pros_ = std::make_unique<ProsodyAware>(params_, cfg_, ctx);
    predictor_ = std::make_unique<ProsodyPredictor>(params_, cfg_, ctx);
  }
  if (f.pos) pos_ = std::make_unique<PositionEmbedding>(params_, cfg_, ctx);
}

MemoryOutput ParaTTS::build_memory(ag::Graph& g, const MemoryInputs& in, const ForwardModes& modes,
                                   bool zero_context) const {
  MemoryOutput out;
  out.enc = backbone_->encode_text(g, in.query_ids, modes.backbone);
  ag::Var query = out.enc;
  if (ling_) {
    ParagraphLinguistic pl = ling_->encode_paragraph_text(g, in.paragraph_ids, modes.context);
    out.ling = ling_->forward(g, out.enc, pl, &out.ling_weights);
    query = ag::add(out.enc, out.ling);
  }
  if (pros_) {
    out.prosody_pred = predictor_->forward(g, query, modes.context);
    ag::Var prosody;
    if (in.paragraph_prosody) {
      if (in.paragraph_prosody->rows() != static_cast<Eigen::Index>(in.paragraph_ids.size()) ||
          in.paragraph_prosody->cols() != 3)
        throw ShapeError("paragraph prosody must be m x 3 with m = " +
                         std::to_string(in.paragraph_ids.size()));
      prosody = g.constant(*in.paragraph_prosody);
    } else {
      if (in.query_ids.size() != in.paragraph_ids.size())
        throw ShapeError("predicted prosody needs the paragraph itself as the query");
      prosody = ag::detach(out.prosody_pred);
    }
    ParagraphProsodic pp = pros_->encode_paragraph_prosody(g, prosody, modes.context.training);
    out.pros = pros_->forward(g, query, pp, &out.pros_weights);
  }
  if (pos_) out.pos = pos_->forward(g, in.codes, in.phone_counts);
  if (zero_context) {
    for (ag::Var* v : {&out.ling, &out.pros, &out.pos})
      if (v->valid()) *v = g.constant(Mat::Zero(v->rows(), v->cols()));
  }
  out.memory = fuse_memory(out.enc, out.ling, out.pros, out.pos);
  return out;
}

}  // namespace paratts
