#pragma once

#include <string>
#include <vector>

#include "halo/model.hpp"

namespace halo {

// Labeled point prompts in continuous image coordinates.
struct PromptSet {
  std::vector<Point> foreground;  // <= N_f, ordered by descending confidence
  std::vector<Point> background;  // N_p, canonical ring order
  int image_h = 0, image_w = 0;
};

// JSON exchange format consumed by external segmentation backends:
// {"image_size":[H,W], "foreground":[[r,c],...], "background":[[r,c],...]}
std::string prompt_set_to_json(const PromptSet& ps);
PromptSet prompt_set_from_json(const std::string& json_text);

// Uniform sample (without replacement) from pixels whose calibrated value
// exceeds the threshold; when fewer than n_fg qualify, falls back to the
// top-n_fg by value. Output is ordered by descending value.
std::vector<Point> sample_foreground_prompts(const Tensor& calibrated, double threshold,
                                             int n_fg, Rng& rng);

struct InferResult {
  PromptSet prompts;       // at the requested image size
  PromptSet working;       // same prompts at the working grid
  Tensor calibrated;       // [S,S] correlation map (calibrated)
  std::vector<Point> coarse;
};

// Full inference pass: encode both images, build prototypes, context
// modeling, refinement, foreground sampling; coordinates are rescaled from
// the working grid to image_h x image_w.
InferResult infer_prompts(const Model& m, const Tensor& support_image, const Mask& support_mask,
                          const Tensor& query_image, int image_h, int image_w, uint64_t seed);

// Half-pixel-center coordinate mapping between grids (exact round trip).
Point rescale_point(Point p, int from_h, int from_w, int to_h, int to_w);

}  // namespace halo
