#pragma once

#include <string>
#include <vector>

#include "halo/backend.hpp"
#include "halo/episodes.hpp"
#include "halo/metrics.hpp"
#include "halo/model.hpp"

namespace halo {

// What produces the prompts fed to the backend. GtRing and RandomBg are the
// upper/lower reference bounds used to calibrate thresholds; the baselines
// are the coarse-prediction extraction strategies.
enum class PromptSource { Model, GtRing, RandomBg, BaselineConfidence, BaselineMask };

struct EvalConfig {
  int n_episodes = 200;
  uint64_t seed = 7;
  bool episode_parallel = true;
  bool ablate_no_bg = false;   // drop background prompts before the backend call
  bool compare_no_bg = false;  // additionally evaluate a fg-only pass per episode
  bool with_baselines = false; // record confidence-baseline prompt statistics
  PromptSource source = PromptSource::Model;
  bool overlays = false;
  std::string out_dir;  // report.json / report.csv / overlays; empty = memory only
};

struct EvalReport {
  struct Category {
    int id = 0;
    double mean_dice = 0.0;
    int n = 0;
  };
  std::vector<Category> per_category;
  double mean_dice = 0.0;
  double mean_dice_fg_only = 0.0;        // filled when compare_no_bg
  double bg_mean_boundary_dist = 0.0;    // background prompts vs GT boundary
  double bg_frac_inside_fg = 0.0;
  double bg_frac_outside_fg = 0.0;
  double baseline_conf_boundary_dist = 0.0;  // filled when with_baselines
  double ellipse_msr = 0.0;  // prompt residual to the GT-ring-fitted ellipse
  int n_episodes = 0;
};

// Episodic evaluation over novel categories through a segmentation backend.
// Deterministic at fixed seed regardless of episode_parallel (results are
// reduced in episode order).
EvalReport evaluate(const Model& m, const std::vector<CategorySpec>& novel,
                    const SegBackend& backend, const EvalConfig& cfg);

// report.json (schema-versioned) + report.csv in out_dir.
void write_report(const EvalReport& r, const std::string& out_dir);

// Query image + prompt markers + GT (green) and predicted (red) contours.
void write_overlay(const std::string& path, const Tensor& image, const PromptSet& prompts,
                   const Mask& predicted, const Mask& gt);

}  // namespace halo
