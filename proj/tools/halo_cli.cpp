// halo: background-adjacent point-prompt generator for few-shot segmentation.
//
// Subcommands: train, eval, gen-prompts, export-episodes.
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <CLI11.hpp>

#include "halo/checkpoint.hpp"
#include "halo/config.hpp"
#include "halo/image_io.hpp"
#include "halo/prompts.hpp"

namespace fs = std::filesystem;
using namespace halo;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  int iters = -1;
  long long seed = -1;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool train_flags) {
  cmd->add_option("--config", a.config_path, "config file (key = value lines)");
  cmd->add_option("--set", a.overrides, "dotted-path override, e.g. --set spr.kappa=5")
      ->take_all();
  cmd->add_option("--seed", a.seed, "override seed");
  cmd->add_option("--out", a.out, "override output directory");
  if (train_flags) cmd->add_option("--iters", a.iters, "override train.iterations");
}

RunConfig resolve(const CommonArgs& a) {
  RunConfig cfg = load_config(a.config_path, a.overrides);
  if (a.iters > 0) cfg.iterations = a.iters;
  if (a.seed >= 0) cfg.seed = static_cast<uint64_t>(a.seed);
  if (!a.out.empty()) cfg.out_dir = a.out;
  apply_runtime(cfg);
  return cfg;
}

void write_snapshot(const RunConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream f(fs::path(dir) / "config_resolved.toml");
  require(f.good(), Err::Io, "cannot write config snapshot in " + dir);
  f << dump_config(cfg);
}

Mask mask_from_image(const Tensor& t) {
  Mask m(t.dim(0), t.dim(1));
  for (int64_t i = 0; i < t.size(); ++i) m.v[static_cast<size_t>(i)] = t[i] >= 0.5 ? 1 : 0;
  return m;
}

int cmd_train(const CommonArgs& args) {
  RunConfig cfg = resolve(args);
  const std::string out = resolve_out_dir(cfg);
  write_snapshot(cfg, out);

  Model model = build_model(cfg);
  EpisodeSampler sampler(base_categories(cfg), cfg.working_size);
  TrainConfig tcfg = make_train_config(cfg);
  tcfg.out_dir = out;
  const TrainResult res = train(model, sampler, tcfg, make_loss_config(cfg));
  std::printf("trained %d iterations: total loss %.6g -> %.6g\n", res.iterations_run,
              res.first_total, res.last_total);
  std::printf("checkpoint: %s\nmetrics: %s\n", res.checkpoint_path.c_str(),
              res.metrics_path.c_str());
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, const std::string& backend,
             int n_episodes, const std::string& ablate) {
  RunConfig cfg = resolve(args);
  if (!backend.empty()) cfg.backend_kind = backend;
  if (n_episodes > 0) cfg.eval_episodes = n_episodes;
  const std::string out = resolve_out_dir(cfg);
  write_snapshot(cfg, out);

  Model model = load_checkpoint(checkpoint);
  require(model.cfg.encoder.channels == cfg.channels &&
              model.cfg.bppc.n_prompts == cfg.n_bg &&
              model.cfg.working_size == cfg.working_size,
          Err::Config,
          "checkpoint/config mismatch: channels/n_bg/working_size differ between '" + checkpoint +
              "' and the resolved config");

  EvalConfig ecfg = make_eval_config(cfg);
  ecfg.out_dir = out;
  ecfg.compare_no_bg = true;
  if (ablate == "no-bg-prompts") ecfg.ablate_no_bg = true;

  auto be = make_backend(cfg.backend_kind, make_oracle_config(cfg));
  const EvalReport rep = evaluate(model, novel_categories(cfg), *be, ecfg);

  std::printf("category  n     mean_dice\n");
  for (const auto& c : rep.per_category) std::printf("%8d  %4d  %.4f\n", c.id, c.n, c.mean_dice);
  std::printf("    mean  %4d  %.4f\n", rep.n_episodes, rep.mean_dice);
  std::printf("fg-only mean dice: %.4f\n", rep.mean_dice_fg_only);
  std::printf("bg prompts: boundary dist %.2f px, %.1f%% outside GT fg\n",
              rep.bg_mean_boundary_dist, 100.0 * rep.bg_frac_outside_fg);
  return 0;
}

int cmd_gen_prompts(const CommonArgs& args, const std::string& checkpoint,
                    const std::string& support_image, const std::string& support_mask,
                    const std::string& query_dir, bool overlays) {
  RunConfig cfg = resolve(args);
  const std::string out = resolve_out_dir(cfg);
  write_snapshot(cfg, out);

  Model model = load_checkpoint(checkpoint);
  const int s = model.cfg.working_size;
  const Tensor sup_img = img::resize_bilinear(img::read_gray(support_image), s, s);
  const Mask sup_mask = mask_from_image(
      [&] {
        Tensor t = img::read_gray(support_mask);
        return t;
      }());
  const Mask sup_mask_s = img::resize_nearest(sup_mask, s, s);

  std::vector<fs::path> queries;
  for (const auto& e : fs::directory_iterator(query_dir))
    if (e.is_regular_file()) {
      const auto ext = e.path().extension().string();
      if (ext == ".png" || ext == ".pgm") queries.push_back(e.path());
    }
  std::sort(queries.begin(), queries.end());

  int failures = 0;
  for (const auto& q : queries) {
    try {
      const Tensor raw = img::read_gray(q.string());
      const Tensor qimg = img::resize_bilinear(raw, s, s);
      const InferResult res = infer_prompts(model, sup_img, sup_mask_s, qimg, raw.dim(0),
                                            raw.dim(1), cfg.seed);
      const std::string base = (fs::path(out) / q.stem().string()).string();
      std::ofstream jf(base + ".prompts.json");
      require(jf.good(), Err::Io, "cannot write " + base + ".prompts.json");
      jf << prompt_set_to_json(res.prompts) << "\n";
      if (overlays) {
        Mask empty(raw.dim(0), raw.dim(1));
        write_overlay(base + ".overlay.png", raw, res.prompts, empty, empty);
      }
    } catch (const Error& e) {
      std::fprintf(stderr, "halo: %s: %s\n", q.string().c_str(), e.what());
      ++failures;
    }
  }
  std::printf("wrote prompts for %zu queries (%d failed) to %s\n", queries.size() - failures,
              failures, out.c_str());
  return failures == 0 ? 0 : 1;
}

int cmd_export_episodes(const CommonArgs& args, int count) {
  RunConfig cfg = resolve(args);
  const std::string out = resolve_out_dir(cfg);
  write_snapshot(cfg, out);
  EpisodeSampler sampler(base_categories(cfg), cfg.working_size);
  std::vector<Episode> eps;
  for (int i = 0; i < count; ++i)
    eps.push_back(sampler.sample(Rng::derive(cfg.seed, static_cast<uint64_t>(i))));
  export_episodes(out, eps, cfg.seed);
  std::printf("exported %d episodes to %s\n", count, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"background-adjacent point prompt generator"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, gen_args, exp_args;
  std::string checkpoint, backend = "", ablate = "";
  std::string support_image, support_mask, query_dir;
  int n_episodes = -1, export_count = 20;
  bool overlays = false;

  auto* train_cmd = app.add_subcommand("train", "episodic training");
  add_common(train_cmd, train_args, true);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, eval_args, false);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--backend", backend, "oracle | external:<url>");
  eval_cmd->add_option("--episodes", n_episodes, "number of evaluation episodes");
  eval_cmd->add_option("--ablate", ablate, "'no-bg-prompts' drops background points");

  auto* gen_cmd = app.add_subcommand("gen-prompts", "prompt JSONs for a query folder");
  add_common(gen_cmd, gen_args, false);
  gen_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  gen_cmd->add_option("--support-image", support_image)->required();
  gen_cmd->add_option("--support-mask", support_mask)->required();
  gen_cmd->add_option("--query-dir", query_dir)->required();
  gen_cmd->add_flag("--overlays", overlays, "also write overlay PNGs");

  auto* exp_cmd = app.add_subcommand("export-episodes", "write synthetic episodes as PNG + JSON");
  add_common(exp_cmd, exp_args, false);
  exp_cmd->add_option("--count", export_count, "episodes to export");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, checkpoint, backend, n_episodes, ablate);
    if (gen_cmd->parsed())
      return cmd_gen_prompts(gen_args, checkpoint, support_image, support_mask, query_dir,
                             overlays);
    if (exp_cmd->parsed()) return cmd_export_episodes(exp_args, export_count);
  } catch (const Error& e) {
    std::fprintf(stderr, "halo: error: %s\n", e.what());
    return e.code() == Err::Config || e.code() == Err::InvalidParameter ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "halo: error: %s\n", e.what());
    return 1;
  }
  return 2;
}
