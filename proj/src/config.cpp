#include "halo/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "halo/kernels.hpp"

namespace halo {

namespace {

enum class Kind { U64, Int, Double, Bool, String };

struct Field {
  const char* key;
  Kind kind;
  std::function<void*(RunConfig&)> ptr;
};

const std::vector<Field>& schema() {
  static const std::vector<Field> s = {
      {"seed", Kind::U64, [](RunConfig& c) -> void* { return &c.seed; }},
      {"out_dir", Kind::String, [](RunConfig& c) -> void* { return &c.out_dir; }},
      {"working_size", Kind::Int, [](RunConfig& c) -> void* { return &c.working_size; }},
      {"threads", Kind::Int, [](RunConfig& c) -> void* { return &c.threads; }},
      {"kernels.mode", Kind::String, [](RunConfig& c) -> void* { return &c.kernels_mode; }},
      {"geometry.r", Kind::Int, [](RunConfig& c) -> void* { return &c.r; }},
      {"geometry.eps", Kind::Int, [](RunConfig& c) -> void* { return &c.eps; }},
      {"geometry.sigma", Kind::Double, [](RunConfig& c) -> void* { return &c.sigma; }},
      {"prompts.n_bg", Kind::Int, [](RunConfig& c) -> void* { return &c.n_bg; }},
      {"prompts.n_fg", Kind::Int, [](RunConfig& c) -> void* { return &c.n_fg; }},
      {"prompts.fg_threshold", Kind::Double, [](RunConfig& c) -> void* { return &c.fg_threshold; }},
      {"encoder.channels", Kind::Int, [](RunConfig& c) -> void* { return &c.channels; }},
      {"encoder.depth", Kind::Int, [](RunConfig& c) -> void* { return &c.depth; }},
      {"bcm.heads", Kind::Int, [](RunConfig& c) -> void* { return &c.heads; }},
      {"bcm.ffn_hidden", Kind::Int, [](RunConfig& c) -> void* { return &c.ffn_hidden; }},
      {"spr.enabled", Kind::Bool, [](RunConfig& c) -> void* { return &c.spr_enabled; }},
      {"spr.k", Kind::Int, [](RunConfig& c) -> void* { return &c.spr_k; }},
      {"spr.kappa", Kind::Int, [](RunConfig& c) -> void* { return &c.spr_kappa; }},
      {"spr.beta", Kind::Double, [](RunConfig& c) -> void* { return &c.spr_beta; }},
      {"spr.graph", Kind::String, [](RunConfig& c) -> void* { return &c.spr_graph; }},
      {"spr.alpha_init", Kind::Double, [](RunConfig& c) -> void* { return &c.spr_alpha_init; }},
      {"spr.hidden", Kind::Int, [](RunConfig& c) -> void* { return &c.spr_hidden; }},
      {"loss.tau", Kind::Double, [](RunConfig& c) -> void* { return &c.tau; }},
      {"loss.lambda_heat", Kind::Double, [](RunConfig& c) -> void* { return &c.lambda_heat; }},
      {"loss.lambda_coor", Kind::Double, [](RunConfig& c) -> void* { return &c.lambda_coor; }},
      {"loss.erosion", Kind::Int, [](RunConfig& c) -> void* { return &c.erosion; }},
      {"loss.rac_include_positive_in_denominator", Kind::Bool,
       [](RunConfig& c) -> void* { return &c.rac_include_pos; }},
      {"train.lr", Kind::Double, [](RunConfig& c) -> void* { return &c.lr; }},
      {"train.lr_decay", Kind::Double, [](RunConfig& c) -> void* { return &c.lr_decay; }},
      {"train.lr_decay_every", Kind::Int, [](RunConfig& c) -> void* { return &c.lr_decay_every; }},
      {"train.iterations", Kind::Int, [](RunConfig& c) -> void* { return &c.iterations; }},
      {"train.checkpoint_every", Kind::Int,
       [](RunConfig& c) -> void* { return &c.checkpoint_every; }},
      {"train.log_every", Kind::Int, [](RunConfig& c) -> void* { return &c.log_every; }},
      {"train.setting", Kind::String, [](RunConfig& c) -> void* { return &c.setting; }},
      {"slic.k", Kind::Int, [](RunConfig& c) -> void* { return &c.slic_k; }},
      {"slic.compactness", Kind::Double, [](RunConfig& c) -> void* { return &c.slic_compactness; }},
      {"slic.iters", Kind::Int, [](RunConfig& c) -> void* { return &c.slic_iters; }},
      {"episodes.categories", Kind::Int, [](RunConfig& c) -> void* { return &c.categories; }},
      {"episodes.novel", Kind::Int, [](RunConfig& c) -> void* { return &c.novel; }},
      {"episodes.fold", Kind::Int, [](RunConfig& c) -> void* { return &c.fold; }},
      {"episodes.domain", Kind::Int, [](RunConfig& c) -> void* { return &c.domain; }},
      {"backend.kind", Kind::String, [](RunConfig& c) -> void* { return &c.backend_kind; }},
      {"backend.tolerance", Kind::Double,
       [](RunConfig& c) -> void* { return &c.backend_tolerance; }},
      {"eval.episodes", Kind::Int, [](RunConfig& c) -> void* { return &c.eval_episodes; }},
      {"eval.episode_parallel", Kind::Bool, [](RunConfig& c) -> void* { return &c.eval_parallel; }},
      {"eval.with_baselines", Kind::Bool,
       [](RunConfig& c) -> void* { return &c.eval_with_baselines; }},
      {"eval.overlays", Kind::Bool, [](RunConfig& c) -> void* { return &c.eval_overlays; }},
  };
  return s;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  size_t b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

void set_field(RunConfig& cfg, const Field& f, const std::string& raw, const std::string& where) {
  const std::string v = trim(raw);
  try {
    switch (f.kind) {
      case Kind::U64:
        *static_cast<uint64_t*>(f.ptr(cfg)) = std::stoull(v);
        break;
      case Kind::Int:
        *static_cast<int*>(f.ptr(cfg)) = std::stoi(v);
        break;
      case Kind::Double:
        *static_cast<double*>(f.ptr(cfg)) = std::stod(v);
        break;
      case Kind::Bool: {
        if (v == "true" || v == "1")
          *static_cast<bool*>(f.ptr(cfg)) = true;
        else if (v == "false" || v == "0")
          *static_cast<bool*>(f.ptr(cfg)) = false;
        else
          fail(Err::Config, where + ": key '" + f.key + "' wants a bool, got '" + v + "'");
        break;
      }
      case Kind::String:
        *static_cast<std::string*>(f.ptr(cfg)) = unquote(v);
        break;
    }
  } catch (const std::invalid_argument&) {
    fail(Err::Config, where + ": bad value '" + v + "' for key '" + f.key + "'");
  } catch (const std::out_of_range&) {
    fail(Err::Config, where + ": value out of range for key '" + f.key + "'");
  }
}

void validate(const RunConfig& c) {
  auto check = [](bool ok, const std::string& msg) { require(ok, Err::Config, msg); };
  check(c.working_size >= 32 && c.working_size % 4 == 0,
        "working_size must be >= 32 and a multiple of 4");
  check(c.r >= 1 && c.r % 2 == 1, "geometry.r must be odd and >= 1");
  check(c.eps >= 0 && c.eps % 2 == 0 && c.r - c.eps >= 1,
        "geometry.eps must be even with r - eps >= 1");
  check(c.sigma > 0.0, "geometry.sigma must be > 0");
  check(c.n_bg >= 2, "prompts.n_bg must be >= 2");
  check(c.n_fg >= 1, "prompts.n_fg must be >= 1");
  check(c.fg_threshold > 0.0 && c.fg_threshold < 1.0, "prompts.fg_threshold must be in (0,1)");
  check(c.channels >= 8, "encoder.channels must be >= 8");
  check(c.depth >= 1, "encoder.depth must be >= 1");
  check(c.heads >= 1 && c.channels % c.heads == 0, "bcm.heads must divide encoder.channels");
  check(c.spr_k >= 1 && c.spr_kappa >= 1, "spr.k and spr.kappa must be >= 1");
  check(c.spr_graph == "none" || c.spr_graph == "ring" || c.spr_graph == "adaptive" ||
            c.spr_graph == "mixed",
        "spr.graph must be none|ring|adaptive|mixed");
  check(c.tau > 0.0, "loss.tau must be > 0");
  check(c.lambda_heat >= 0.0 && c.lambda_coor >= 0.0, "loss weights must be >= 0");
  check(c.lr > 0.0, "train.lr must be > 0");
  check(c.iterations >= 1, "train.iterations must be >= 1");
  check(c.setting == "gt" || c.setting == "pseudo", "train.setting must be gt|pseudo");
  check(c.slic_k >= 2, "slic.k must be >= 2");
  check(c.categories >= 2, "episodes.categories must be >= 2");
  check(c.novel >= 1 && c.novel < c.categories,
        "episodes.novel must be in [1, episodes.categories)");
  check(c.domain == 0 || c.domain == 1, "episodes.domain must be 0 or 1");
  check(c.eval_episodes >= 1, "eval.episodes must be >= 1");
  check(c.kernels_mode == "parallel" || c.kernels_mode == "serial",
        "kernels.mode must be parallel|serial");
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const Field& f : schema()) {
    if (key == f.key) {
      set_field(cfg, f, value, "override");
      return;
    }
  }
  fail(Err::Config, "unknown config key '" + key + "'");
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!path.empty()) {
    std::ifstream f(path);
    require(f.good(), Err::Config, "cannot read config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const size_t eq = line.find('=');
      require(eq != std::string::npos, Err::Config,
              path + ":" + std::to_string(lineno) + ": expected 'key = value'");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      bool found = false;
      for (const Field& fd : schema()) {
        if (key == fd.key) {
          set_field(cfg, fd, value, path + ":" + std::to_string(lineno));
          found = true;
          break;
        }
      }
      require(found, Err::Config,
              path + ":" + std::to_string(lineno) + ": unknown config key '" + key + "'");
    }
  }
  for (const std::string& ov : overrides) {
    const size_t eq = ov.find('=');
    require(eq != std::string::npos, Err::Config, "override must be key=value, got '" + ov + "'");
    apply_override(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }
  validate(cfg);
  return cfg;
}

std::string dump_config(const RunConfig& cfg) {
  std::ostringstream out;
  RunConfig& c = const_cast<RunConfig&>(cfg);
  char buf[64];
  for (const Field& f : schema()) {
    out << f.key << " = ";
    switch (f.kind) {
      case Kind::U64:
        out << *static_cast<uint64_t*>(f.ptr(c));
        break;
      case Kind::Int:
        out << *static_cast<int*>(f.ptr(c));
        break;
      case Kind::Double:
        std::snprintf(buf, sizeof(buf), "%.17g", *static_cast<double*>(f.ptr(c)));
        out << buf;
        break;
      case Kind::Bool:
        out << (*static_cast<bool*>(f.ptr(c)) ? "true" : "false");
        break;
      case Kind::String:
        out << '"' << *static_cast<std::string*>(f.ptr(c)) << '"';
        break;
    }
    out << "\n";
  }
  return out.str();
}

ModelConfig make_model_config(const RunConfig& c) {
  ModelConfig m;
  m.working_size = c.working_size;
  m.encoder.channels = c.channels;
  m.encoder.depth = c.depth;
  m.bppc.r = c.r;
  m.bppc.eps = c.eps;
  m.bppc.n_prompts = c.n_bg;
  m.bppc.sigma = c.sigma;
  m.bcm.heads = c.heads;
  m.bcm.ffn_hidden = c.ffn_hidden;
  m.spr.enabled = c.spr_enabled;
  m.spr.k = c.spr_k;
  m.spr.kappa = c.spr_kappa;
  m.spr.beta = c.spr_beta;
  m.spr.hidden = c.spr_hidden;
  if (c.spr_graph == "none") m.spr.graph = GraphKind::None;
  if (c.spr_graph == "ring") m.spr.graph = GraphKind::Ring;
  if (c.spr_graph == "adaptive") m.spr.graph = GraphKind::Adaptive;
  if (c.spr_graph == "mixed") m.spr.graph = GraphKind::Mixed;
  m.fg_threshold = c.fg_threshold;
  m.n_fg = c.n_fg;
  m.sync();
  return m;
}

TrainConfig make_train_config(const RunConfig& c) {
  TrainConfig t;
  t.lr = c.lr;
  t.lr_decay = c.lr_decay;
  t.lr_decay_every = c.lr_decay_every;
  t.iterations = c.iterations;
  t.checkpoint_every = c.checkpoint_every;
  t.log_every = c.log_every;
  t.seed = c.seed;
  t.setting = c.setting;
  t.slic_k = c.slic_k;
  t.slic_compactness = c.slic_compactness;
  t.slic_iters = c.slic_iters;
  return t;
}

LossConfig make_loss_config(const RunConfig& c) {
  LossConfig l;
  l.tau = c.tau;
  l.lambda_heat = c.lambda_heat;
  l.lambda_coor = c.lambda_coor;
  l.erosion = c.erosion;
  l.rac_include_positive_in_denominator = c.rac_include_pos;
  return l;
}

EvalConfig make_eval_config(const RunConfig& c) {
  EvalConfig e;
  e.n_episodes = c.eval_episodes;
  e.seed = Rng::derive(c.seed, 0xe7a1u);
  e.episode_parallel = c.eval_parallel;
  e.with_baselines = c.eval_with_baselines;
  e.overlays = c.eval_overlays;
  return e;
}

OracleConfig make_oracle_config(const RunConfig& c) { return {c.backend_tolerance}; }

namespace {
std::vector<CategorySpec> categories_for(const RunConfig& c, bool want_novel) {
  std::vector<CategorySpec> out;
  std::vector<bool> is_novel(static_cast<size_t>(c.categories), false);
  for (int j = 0; j < c.novel; ++j)
    is_novel[static_cast<size_t>((c.fold * c.novel + j) % c.categories)] = true;
  for (int id = 0; id < c.categories; ++id) {
    if (is_novel[static_cast<size_t>(id)] != want_novel) continue;
    CategorySpec spec = CategorySpec::synthetic(id, c.working_size);
    spec.domain = c.domain;
    out.push_back(spec);
  }
  return out;
}
}  // namespace

std::vector<CategorySpec> base_categories(const RunConfig& c) { return categories_for(c, false); }
std::vector<CategorySpec> novel_categories(const RunConfig& c) { return categories_for(c, true); }

void apply_runtime(const RunConfig& c) {
  kernels::set_mode(c.kernels_mode == "serial" ? kernels::Mode::Serial
                                               : kernels::Mode::Parallel);
  kernels::set_threads(c.threads);
}

std::string resolve_out_dir(const RunConfig& c) {
  const char* root = std::getenv("HALO_OUT_ROOT");
  if (root && root[0] != '\0' && !c.out_dir.empty() && c.out_dir[0] != '/')
    return (std::filesystem::path(root) / c.out_dir).string();
  return c.out_dir;
}

Model build_model(const RunConfig& c) {
  Model m = Model::init(make_model_config(c), c.seed);
  const int idx = m.params.find("spr.alpha_raw");
  if (idx >= 0) m.params.at(idx).value[0] = c.spr_alpha_init;
  return m;
}

}  // namespace halo
