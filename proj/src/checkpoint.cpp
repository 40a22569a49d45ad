#include "objseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <unordered_map>

#include "objseg/errors.hpp"

namespace objseg {

namespace {

constexpr char kMagic[8] = {'O', 'B', 'J', 'S', 'E', 'G', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in, const std::string& path) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V))) throw IoError("truncated checkpoint", path);
  return v;
}

}  // namespace

const CheckpointTensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config,
                     const nn::ParamList<T>& params) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint", tmp.string());
    out.write(kMagic, sizeof kMagic);
    put<uint32_t>(out, kVersion);
    const std::string cfg = config.dump();
    put<uint64_t>(out, cfg.size());
    out.write(cfg.data(), std::streamsize(cfg.size()));
    put<uint64_t>(out, params.size());
    std::vector<double> buf;
    for (const auto* p : params) {
      put<uint32_t>(out, uint32_t(p->name.size()));
      out.write(p->name.data(), std::streamsize(p->name.size()));
      for (int d : p->value.shape()) put<int32_t>(out, d);
      buf.assign(p->value.data(), p->value.data() + p->value.size());
      out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint", tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint", p);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a checkpoint file", p);
  if (get<uint32_t>(in, p) != kVersion) throw IoError("unsupported checkpoint version", p);
  const auto file_size = std::filesystem::file_size(path);
  const uint64_t cfg_len = get<uint64_t>(in, p);
  if (cfg_len > file_size) throw IoError("corrupt checkpoint header", p);
  std::string cfg(cfg_len, '\0');
  if (!in.read(cfg.data(), std::streamsize(cfg_len))) throw IoError("truncated checkpoint", p);
  Checkpoint ck;
  ck.config = nlohmann::json::parse(cfg, nullptr, false);
  if (ck.config.is_discarded()) throw IoError("checkpoint config is not valid JSON", p);
  const uint64_t count = get<uint64_t>(in, p);
  if (count > file_size) throw IoError("corrupt checkpoint header", p);
  for (uint64_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    const uint32_t nlen = get<uint32_t>(in, p);
    if (nlen > 4096) throw IoError("corrupt checkpoint tensor name", p);
    t.name.resize(nlen);
    if (!in.read(t.name.data(), nlen)) throw IoError("truncated checkpoint", p);
    uint64_t elems = 1;
    for (int& d : t.shape) {
      d = get<int32_t>(in, p);
      if (d < 0) throw IoError("corrupt checkpoint tensor shape", p);
      elems *= uint64_t(d);
    }
    if (elems * sizeof(double) > file_size) throw IoError("corrupt checkpoint tensor shape", p);
    t.data.resize(elems);
    if (!in.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(elems * sizeof(double))))
      throw IoError("truncated checkpoint", p);
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

template <typename T>
size_t apply_checkpoint(const Checkpoint& ckpt, const nn::ParamList<T>& params, std::string_view prefix) {
  std::unordered_map<std::string, const CheckpointTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name.emplace(t.name, &t);
  size_t loaded = 0;
  for (auto* p : params) {
    if (!prefix.empty() && !p->name.starts_with(prefix)) continue;
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw ConfigError("checkpoint lacks parameter '" + p->name + "'");
    const CheckpointTensor& t = *it->second;
    if (t.shape != p->value.shape())
      throw ConfigError("checkpoint shape mismatch for parameter '" + p->name + "'");
    for (size_t i = 0; i < t.data.size(); ++i) p->value.data()[i] = T(t.data[i]);
    by_name.erase(it);
    ++loaded;
  }
  if (prefix.empty() && !by_name.empty())
    throw ConfigError("checkpoint holds unexpected parameter '" + by_name.begin()->first + "'");
  return loaded;
}

template void save_checkpoint<float>(const std::filesystem::path&, const nlohmann::json&, const nn::ParamList<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, const nlohmann::json&,
                                      const nn::ParamList<double>&);
template size_t apply_checkpoint<float>(const Checkpoint&, const nn::ParamList<float>&, std::string_view);
template size_t apply_checkpoint<double>(const Checkpoint&, const nn::ParamList<double>&, std::string_view);

}  // namespace objseg
