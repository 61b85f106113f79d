#include "halo/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace halo {

namespace {

constexpr char kMagic[8] = {'H', 'A', 'L', 'O', 'C', 'K', 'P', 'T'};

nlohmann::ordered_json config_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["working_size"] = c.working_size;
  j["encoder"] = {{"channels", c.encoder.channels},
                  {"depth", c.encoder.depth},
                  {"in_channels", c.encoder.in_channels}};
  j["bppc"] = {{"r", c.bppc.r},
               {"eps", c.bppc.eps},
               {"n_prompts", c.bppc.n_prompts},
               {"sigma", c.bppc.sigma}};
  j["bcm"] = {{"heads", c.bcm.heads}, {"ffn_hidden", c.bcm.ffn_hidden}};
  j["spr"] = {{"k", c.spr.k},         {"kappa", c.spr.kappa}, {"beta", c.spr.beta},
              {"hidden", c.spr.hidden}, {"graph", static_cast<int>(c.spr.graph)},
              {"enabled", c.spr.enabled}};
  j["fg_threshold"] = c.fg_threshold;
  j["n_fg"] = c.n_fg;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.working_size = j.at("working_size");
  c.encoder.channels = j.at("encoder").at("channels");
  c.encoder.depth = j.at("encoder").at("depth");
  c.encoder.in_channels = j.at("encoder").at("in_channels");
  c.bppc.r = j.at("bppc").at("r");
  c.bppc.eps = j.at("bppc").at("eps");
  c.bppc.n_prompts = j.at("bppc").at("n_prompts");
  c.bppc.sigma = j.at("bppc").at("sigma");
  c.bcm.heads = j.at("bcm").at("heads");
  c.bcm.ffn_hidden = j.at("bcm").at("ffn_hidden");
  c.spr.k = j.at("spr").at("k");
  c.spr.kappa = j.at("spr").at("kappa");
  c.spr.beta = j.at("spr").at("beta");
  c.spr.hidden = j.at("spr").at("hidden");
  c.spr.graph = static_cast<GraphKind>(j.at("spr").at("graph").get<int>());
  c.spr.enabled = j.at("spr").at("enabled");
  c.fg_threshold = j.at("fg_threshold");
  c.n_fg = j.at("n_fg");
  c.sync();
  return c;
}

template <class T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary);
  require(f.good(), Err::Io, "cannot write checkpoint: " + path);
  f.write(kMagic, sizeof(kMagic));
  write_pod(f, kCheckpointVersion);
  const std::string cfg = config_json(m.cfg).dump();
  write_pod(f, static_cast<uint64_t>(cfg.size()));
  f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_pod(f, static_cast<uint64_t>(m.params.entries.size()));
  for (const auto& e : m.params.entries) {
    write_pod(f, static_cast<uint64_t>(e.name.size()));
    f.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_pod(f, static_cast<uint32_t>(e.value.rank()));
    for (int d = 0; d < e.value.rank(); ++d) write_pod(f, static_cast<int64_t>(e.value.dim(d)));
    f.write(reinterpret_cast<const char*>(e.value.data()),
            static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  }
  require(f.good(), Err::Io, "short checkpoint write: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), Err::Load, "cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  require(f.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, Err::Load,
          "not a checkpoint file: " + path);
  const auto version = read_pod<uint32_t>(f);
  require(version == kCheckpointVersion, Err::Load,
          "unsupported checkpoint version " + std::to_string(version) + " in " + path);
  const auto cfg_len = read_pod<uint64_t>(f);
  std::string cfg_str(cfg_len, '\0');
  f.read(cfg_str.data(), static_cast<std::streamsize>(cfg_len));
  Model m = Model::init(config_from_json(nlohmann::json::parse(cfg_str)), 0);

  const auto count = read_pod<uint64_t>(f);
  require(count == m.params.entries.size(), Err::Load,
          "checkpoint parameter count mismatch in " + path);
  for (uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<uint64_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), static_cast<std::streamsize>(name_len));
    const int idx = m.params.find(name);
    require(idx >= 0, Err::Load, "unknown parameter '" + name + "' in " + path);
    auto& e = m.params.at(idx);
    const auto rank = read_pod<uint32_t>(f);
    require(rank == static_cast<uint32_t>(e.value.rank()), Err::Load,
            "parameter rank mismatch for '" + name + "' in " + path);
    for (uint32_t d = 0; d < rank; ++d) {
      const auto dim = read_pod<int64_t>(f);
      require(dim == e.value.dim(static_cast<int>(d)), Err::Load,
              "parameter shape mismatch for '" + name + "' in " + path);
    }
    f.read(reinterpret_cast<char*>(e.value.data()),
           static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  }
  require(f.good(), Err::Load, "truncated checkpoint: " + path);
  return m;
}

}  // namespace halo
