#include "paratts/checkpoint.hpp"

#include <zlib.h>

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <iterator>

#include "paratts/error.hpp"

namespace paratts {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "PARATTS-CKPT 1\n";

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& buf, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  return v;
}

void put_mat(std::string& buf, const Mat& m) {
  buf.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
}

std::uint32_t crc(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

json shape(const Mat& m) { return json::array({m.rows(), m.cols()}); }

}  // namespace

Checkpoint make_checkpoint(const ParaTTS& model, std::uint64_t seed, int step, const MelStats& mel,
                           const ProsodyStats& prosody, const AdamState* optimizer) {
  Checkpoint ck;
  ck.config_text = model.config().to_text();
  ck.config_hash = model.config().hash();
  ck.seed = seed;
  ck.step = step;
  ck.mel_stats = mel;
  ck.prosody_stats = prosody;
  for (const auto* p : model.params().all()) ck.tensors.emplace_back(p->name, p->value);
  if (optimizer) {
    ck.has_optimizer = true;
    ck.optimizer = *optimizer;
  }
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  json h;
  h["config"] = ck.config_text;
  h["config_hash"] = ck.config_hash;
  h["seed"] = ck.seed;
  h["step"] = ck.step;
  h["mel_stats"] = {ck.mel_stats.mean, ck.mel_stats.std};
  const auto& ps = ck.prosody_stats;
  h["prosody_stats"] = {ps.mean[0], ps.mean[1], ps.mean[2], ps.std[0], ps.std[1], ps.std[2]};
  json tensors = json::array();
  for (const auto& [name, m] : ck.tensors) tensors.push_back({{"name", name}, {"shape", shape(m)}});
  h["tensors"] = tensors;
  h["optimizer"] = nullptr;
  if (ck.has_optimizer) {
    json shapes = json::array();
    for (const Mat& m : ck.optimizer.m) shapes.push_back(shape(m));
    h["optimizer"] = {{"t", ck.optimizer.t}, {"shapes", shapes}};
  }
  const std::string header = h.dump();

  std::string buf(kMagic);
  put_u32(buf, static_cast<std::uint32_t>(header.size()));
  buf += header;
  for (const auto& t : ck.tensors) put_mat(buf, t.second);
  if (ck.has_optimizer) {
    for (const Mat& m : ck.optimizer.m) put_mat(buf, m);
    for (const Mat& v : ck.optimizer.v) put_mat(buf, v);
  }
  put_u32(buf, crc(buf.data(), buf.size()));

  // Write to a sibling then rename, so a crash never leaves a half file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string() + ": ";
  if (buf.size() < kMagic.size() + 8 || buf.compare(0, kMagic.size(), kMagic) != 0)
    throw IntegrityError(where + "not a checkpoint file or truncated header");
  if (crc(buf.data(), buf.size() - 4) != get_u32(buf, buf.size() - 4))
    throw IntegrityError(where + "checksum mismatch (file truncated or corrupted)");

  const std::size_t header_len = get_u32(buf, kMagic.size());
  std::size_t at = kMagic.size() + 4;
  if (at + header_len > buf.size() - 4) throw IntegrityError(where + "header overruns the file");
  Checkpoint ck;
  auto read_mat = [&](const json& s) {
    const Eigen::Index r = s.at(0), c = s.at(1);
    if (r < 0 || c < 0) throw IntegrityError(where + "negative tensor shape");
    const std::size_t bytes = static_cast<std::size_t>(r * c) * sizeof(double);
    if (at + bytes > buf.size() - 4) throw IntegrityError(where + "tensor data overruns the file");
    Mat m(r, c);
    std::memcpy(m.data(), buf.data() + at, bytes);
    at += bytes;
    return m;
  };
  try {
    const json h = json::parse(buf.substr(at, header_len));
    at += header_len;
    ck.config_text = h.at("config");
    ck.config_hash = h.at("config_hash");
    ck.seed = h.at("seed");
    ck.step = h.at("step");
    ck.mel_stats.mean = h.at("mel_stats").at(0);
    ck.mel_stats.std = h.at("mel_stats").at(1);
    const json& p = h.at("prosody_stats");
    for (int i = 0; i < 3; ++i) {
      ck.prosody_stats.mean[i] = p.at(i);
      ck.prosody_stats.std[i] = p.at(i + 3);
    }
    for (const json& t : h.at("tensors")) ck.tensors.emplace_back(t.at("name").get<std::string>(), read_mat(t.at("shape")));
    if (!h.at("optimizer").is_null()) {
      ck.has_optimizer = true;
      ck.optimizer.t = h.at("optimizer").at("t");
      for (const json& s : h.at("optimizer").at("shapes")) ck.optimizer.m.push_back(read_mat(s));
      for (const json& s : h.at("optimizer").at("shapes")) ck.optimizer.v.push_back(read_mat(s));
    }
  } catch (const json::exception& e) {
    throw IntegrityError(where + "malformed header: " + e.what());
  }
  if (at != buf.size() - 4) throw IntegrityError(where + "trailing bytes after the tensor data");
  if (ModelConfig::from_text(ck.config_text).hash() != ck.config_hash)
    throw IntegrityError(where + "configuration hash does not match its text");
  return ck;
}

void restore_parameters(ParaTTS& model, const Checkpoint& ck) {
  if (ck.config_hash != model.config().hash()) {
    const ModelConfig theirs = ck.config();
    if (theirs.ablation != model.config().ablation)
      throw ValidationError("checkpoint was trained with ablation '" + std::string(ablation_name(theirs.ablation)) +
                            "' but the model is '" + std::string(ablation_name(model.config().ablation)) + "'");
    throw ValidationError("checkpoint configuration differs from the model configuration");
  }
  if (ck.tensors.size() != model.params().size())
    throw ValidationError("checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, the model has " +
                          std::to_string(model.params().size()));
  for (const auto& [name, m] : ck.tensors) {
    if (!model.params().contains(name)) throw ValidationError("checkpoint tensor '" + name + "' is not in the model");
    ag::Parameter& p = model.params().at(name);
    if (p.value.rows() != m.rows() || p.value.cols() != m.cols())
      throw ValidationError("checkpoint tensor '" + name + "' has the wrong shape");
    p.value = m;
  }
}

}  // namespace paratts
