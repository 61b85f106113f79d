#include "halo/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "halo/baselines.hpp"
#include "halo/image_io.hpp"
#include "halo/kernels.hpp"
#include "halo/prompts.hpp"

namespace fs = std::filesystem;

namespace halo {

namespace {

struct EpisodeResult {
  int category_id = 0;
  double dice_full = 0.0;
  double dice_fg_only = 0.0;
  PromptStats bg_stats;
  double baseline_conf_dist = 0.0;
  double ellipse_msr = 0.0;
  bool ok = false;
  std::string error;
};

PromptSet gt_prompts(const Episode& ep, const Model& m, uint64_t seed, bool random_bg) {
  PromptSet ps;
  ps.image_h = ep.query_image.dim(0);
  ps.image_w = ep.query_image.dim(1);
  Rng rng(seed);
  // foreground: uniform inside the GT mask
  Mask fg = ep.query_mask;
  ps.foreground = geom::sample_points(fg, m.cfg.n_fg, rng);
  if (random_bg) {
    for (int i = 0; i < m.cfg.bppc.n_prompts; ++i)
      ps.background.push_back({rng.uniform(0.0, ps.image_h - 1.0),
                               rng.uniform(0.0, ps.image_w - 1.0)});
  } else {
    const Mask band = geom::differential_ring(ep.query_mask, m.cfg.bppc.r, m.cfg.bppc.eps);
    ps.background =
        geom::sample_points(band, m.cfg.bppc.n_prompts, rng, geom::centroid(ep.query_mask));
  }
  return ps;
}

EpisodeResult run_episode(const Model& m, const std::vector<CategorySpec>& novel,
                          const SegBackend& backend, const EvalConfig& cfg, int index) {
  EpisodeResult res;
  const uint64_t ep_seed = Rng::derive(cfg.seed, static_cast<uint64_t>(index));
  Rng pick(ep_seed);
  const CategorySpec& spec = novel[pick.uniform_int(novel.size())];
  res.category_id = spec.id;
  const int s = m.cfg.working_size;
  const Episode ep = synth::generate_episode(spec, s, s, Rng::derive(ep_seed, 0xe9u));

  PromptSet prompts;
  Tensor calibrated;
  switch (cfg.source) {
    case PromptSource::Model: {
      InferResult ir = infer_prompts(m, ep.support_image, ep.support_mask, ep.query_image, s, s,
                                     Rng::derive(ep_seed, 0x9fu));
      prompts = ir.prompts;
      calibrated = ir.calibrated;
      break;
    }
    case PromptSource::GtRing:
      prompts = gt_prompts(ep, m, Rng::derive(ep_seed, 0x9fu), false);
      break;
    case PromptSource::RandomBg:
      prompts = gt_prompts(ep, m, Rng::derive(ep_seed, 0x9fu), true);
      break;
    case PromptSource::BaselineConfidence: {
      InferResult ir = infer_prompts(m, ep.support_image, ep.support_mask, ep.query_image, s, s,
                                     Rng::derive(ep_seed, 0x9fu));
      prompts = baseline_confidence_prompts(ir.calibrated, m.cfg.n_fg, m.cfg.bppc.n_prompts);
      break;
    }
    case PromptSource::BaselineMask: {
      InferResult ir = infer_prompts(m, ep.support_image, ep.support_mask, ep.query_image, s, s,
                                     Rng::derive(ep_seed, 0x9fu));
      Mask coarse(s, s);
      for (int64_t i = 0; i < ir.calibrated.size(); ++i)
        coarse.v[static_cast<size_t>(i)] = ir.calibrated[i] > 0.5 ? 1 : 0;
      Rng rng(Rng::derive(ep_seed, 0xabu));
      prompts = baseline_mask_prompts(coarse, m.cfg.n_fg, m.cfg.bppc.n_prompts, rng);
      break;
    }
  }

  PromptSet used = prompts;
  if (cfg.ablate_no_bg) used.background.clear();

  const Mask pred = backend.segment(ep.query_image, used);
  res.dice_full = dice(pred, ep.query_mask);

  if (cfg.compare_no_bg) {
    PromptSet fg_only = prompts;
    fg_only.background.clear();
    res.dice_fg_only = dice(backend.segment(ep.query_image, fg_only), ep.query_mask);
  }

  res.bg_stats = background_prompt_stats(prompts.background, ep.query_mask);

  if (cfg.with_baselines && calibrated.size() > 0) {
    PromptSet bc = baseline_confidence_prompts(calibrated, m.cfg.n_fg, m.cfg.bppc.n_prompts);
    res.baseline_conf_dist =
        background_prompt_stats(bc.background, ep.query_mask).mean_boundary_dist;
  }

  // ring-shape deviation: residual of the produced background prompts against
  // an ellipse fitted through an independent GT ring sample
  if (!prompts.background.empty()) {
    Rng rring(Rng::derive(ep_seed, 0xce11u));
    const Mask band = geom::differential_ring(ep.query_mask, m.cfg.bppc.r, m.cfg.bppc.eps);
    const auto ring_pts =
        geom::sample_points(band, m.cfg.bppc.n_prompts, rring, geom::centroid(ep.query_mask));
    res.ellipse_msr = ellipse_residual(fit_ellipse(ring_pts), prompts.background);
  }

  if (cfg.overlays && !cfg.out_dir.empty()) {
    char name[64];
    std::snprintf(name, sizeof(name), "overlay_%04d.png", index);
    write_overlay((fs::path(cfg.out_dir) / name).string(), ep.query_image, used, pred,
                  ep.query_mask);
  }

  res.ok = true;
  return res;
}

}  // namespace

EvalReport evaluate(const Model& m, const std::vector<CategorySpec>& novel,
                    const SegBackend& backend, const EvalConfig& cfg) {
  require(!novel.empty(), Err::InvalidParameter, "evaluate: empty category list");
  require(cfg.n_episodes > 0, Err::InvalidParameter, "evaluate: empty episode stream");
  if (cfg.overlays && !cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);

  std::vector<EpisodeResult> results(static_cast<size_t>(cfg.n_episodes));
  const bool par = cfg.episode_parallel && kernels::mode() == kernels::Mode::Parallel;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
  for (int i = 0; i < cfg.n_episodes; ++i) {
    try {
      results[static_cast<size_t>(i)] = run_episode(m, novel, backend, cfg, i);
    } catch (const Error& e) {
      results[static_cast<size_t>(i)].ok = false;
      results[static_cast<size_t>(i)].error = e.what();
    }
  }

  EvalReport rep;
  std::map<int, std::pair<double, int>> by_cat;
  double dsum = 0.0, dfg = 0.0, bdist = 0.0, binside = 0.0, bconf = 0.0, emsr = 0.0;
  int n = 0;
  for (const auto& r : results) {
    if (!r.ok) fail(Err::Generation, "evaluate: episode failed: " + r.error);
    by_cat[r.category_id].first += r.dice_full;
    by_cat[r.category_id].second += 1;
    dsum += r.dice_full;
    dfg += r.dice_fg_only;
    bdist += r.bg_stats.mean_boundary_dist;
    binside += r.bg_stats.frac_inside_fg;
    bconf += r.baseline_conf_dist;
    emsr += r.ellipse_msr;
    ++n;
  }
  rep.n_episodes = n;
  rep.mean_dice = dsum / n;
  rep.mean_dice_fg_only = dfg / n;
  rep.bg_mean_boundary_dist = bdist / n;
  rep.bg_frac_inside_fg = binside / n;
  rep.bg_frac_outside_fg = 1.0 - rep.bg_frac_inside_fg;
  rep.baseline_conf_boundary_dist = bconf / n;
  rep.ellipse_msr = emsr / n;
  for (const auto& [id, acc] : by_cat)
    rep.per_category.push_back({id, acc.first / acc.second, acc.second});

  if (!cfg.out_dir.empty()) write_report(rep, cfg.out_dir);
  return rep;
}

void write_report(const EvalReport& r, const std::string& out_dir) {
  fs::create_directories(out_dir);
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["n_episodes"] = r.n_episodes;
  j["mean_dice"] = r.mean_dice;
  j["mean_dice_fg_only"] = r.mean_dice_fg_only;
  j["bg_mean_boundary_dist"] = r.bg_mean_boundary_dist;
  j["bg_frac_inside_fg"] = r.bg_frac_inside_fg;
  j["bg_frac_outside_fg"] = r.bg_frac_outside_fg;
  j["baseline_conf_boundary_dist"] = r.baseline_conf_boundary_dist;
  j["ellipse_msr"] = r.ellipse_msr;
  j["per_category"] = nlohmann::ordered_json::array();
  for (const auto& c : r.per_category)
    j["per_category"].push_back({{"category_id", c.id}, {"mean_dice", c.mean_dice}, {"n", c.n}});
  std::ofstream jf(fs::path(out_dir) / "report.json");
  require(jf.good(), Err::Io, "cannot write report.json in " + out_dir);
  jf << j.dump(2) << "\n";

  std::ofstream cf(fs::path(out_dir) / "report.csv");
  require(cf.good(), Err::Io, "cannot write report.csv in " + out_dir);
  char line[256];
  cf << "category_id,n,mean_dice\n";
  for (const auto& c : r.per_category) {
    std::snprintf(line, sizeof(line), "%d,%d,%.17g\n", c.id, c.n, c.mean_dice);
    cf << line;
  }
  std::snprintf(line, sizeof(line), "mean,%d,%.17g\n", r.n_episodes, r.mean_dice);
  cf << line;
}

void write_overlay(const std::string& path, const Tensor& image, const PromptSet& prompts,
                   const Mask& predicted, const Mask& gt) {
  const int h = image.dim(0), w = image.dim(1);
  Tensor rgb({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) rgb.at(c, y, x) = image.at(y, x);

  auto paint = [&](const std::vector<Point>& pts, double r, double g, double b) {
    for (const Point& p : pts) {
      const int pr = std::clamp(static_cast<int>(std::lround(p.row)), 0, h - 1);
      const int pc = std::clamp(static_cast<int>(std::lround(p.col)), 0, w - 1);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int y = std::clamp(pr + dy, 0, h - 1), x = std::clamp(pc + dx, 0, w - 1);
          rgb.at(0, y, x) = r;
          rgb.at(1, y, x) = g;
          rgb.at(2, y, x) = b;
        }
    }
  };
  for (const Point& p : boundary_pixels(gt)) {
    const int y = static_cast<int>(p.row), x = static_cast<int>(p.col);
    rgb.at(0, y, x) = 0.0;
    rgb.at(1, y, x) = 1.0;
    rgb.at(2, y, x) = 0.0;
  }
  for (const Point& p : boundary_pixels(predicted)) {
    const int y = static_cast<int>(p.row), x = static_cast<int>(p.col);
    rgb.at(0, y, x) = 1.0;
    rgb.at(1, y, x) = 0.0;
    rgb.at(2, y, x) = 0.0;
  }
  paint(prompts.foreground, 0.2, 0.4, 1.0);
  paint(prompts.background, 1.0, 0.9, 0.1);
  img::write_rgb_png(path, rgb);
}

}  // namespace halo
