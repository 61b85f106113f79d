#pragma once

#include <string>
#include <vector>

#include "halo/evaluate.hpp"
#include "halo/train.hpp"

namespace halo {

// Flat key/value run configuration. File format: `key = value` lines with
// `#` comments; the same dotted keys work as `--set key=value` overrides.
// Unknown keys are rejected.
struct RunConfig {
  uint64_t seed = 42;
  std::string out_dir = "runs/default";
  int working_size = 64;
  int threads = 0;                       // 0 = library default
  std::string kernels_mode = "parallel"; // parallel | serial

  int r = 15;
  int eps = 2;
  double sigma = 4.0;

  int n_bg = 10;
  int n_fg = 10;
  double fg_threshold = 0.9;

  int channels = 32;
  int depth = 4;

  int heads = 4;
  int ffn_hidden = 0;

  bool spr_enabled = true;
  int spr_k = 8;
  int spr_kappa = 3;
  double spr_beta = 0.0;  // 0 = working_size / 8
  std::string spr_graph = "mixed";  // none | ring | adaptive | mixed
  double spr_alpha_init = 0.0;      // pre-sigmoid
  int spr_hidden = 0;

  double tau = 0.1;
  double lambda_heat = 1e3;
  double lambda_coor = 1e-4;
  int erosion = 2;
  bool rac_include_pos = false;

  double lr = 1e-4;
  double lr_decay = 0.95;
  int lr_decay_every = 1000;
  int iterations = 2000;
  int checkpoint_every = 1000;
  int log_every = 1;
  std::string setting = "gt";

  int slic_k = 5;
  double slic_compactness = 15.0;
  int slic_iters = 10;

  int categories = 10;
  int novel = 4;
  int fold = 0;
  int domain = 0;

  std::string backend_kind = "oracle";
  double backend_tolerance = 0.25;

  int eval_episodes = 200;
  bool eval_parallel = true;
  bool eval_with_baselines = true;
  bool eval_overlays = false;
};

// Parse a config file (empty path = defaults) then apply `key=value`
// overrides in order. Validates keys, types and value ranges.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides);
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

// Deterministic `key = value` dump of every key (the resolved snapshot).
std::string dump_config(const RunConfig& cfg);

ModelConfig make_model_config(const RunConfig& cfg);
TrainConfig make_train_config(const RunConfig& cfg);
LossConfig make_loss_config(const RunConfig& cfg);
EvalConfig make_eval_config(const RunConfig& cfg);
OracleConfig make_oracle_config(const RunConfig& cfg);

// Fold-rotated disjoint base/novel category split.
std::vector<CategorySpec> base_categories(const RunConfig& cfg);
std::vector<CategorySpec> novel_categories(const RunConfig& cfg);

// Threads + kernel mode.
void apply_runtime(const RunConfig& cfg);

// out_dir, prefixed by $HALO_OUT_ROOT when set and out_dir is relative.
std::string resolve_out_dir(const RunConfig& cfg);

// Builds the model (applies spr.alpha_init to the mixing parameter).
Model build_model(const RunConfig& cfg);

}  // namespace halo
