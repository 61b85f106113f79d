#pragma once

#include <vector>

#include "halo/autodiff.hpp"
#include "halo/geometry.hpp"
#include "halo/rng.hpp"

namespace halo {

struct BppcConfig {
  int r = 15;         // dilation kernel size
  int eps = 2;        // differential band width
  int n_prompts = 10; // N_p
  double sigma = 4.0; // heatmap stddev
};

// Support-side prompt prototypes: sampled ring points (canonical order),
// their Gaussian heatmaps, a prototype per prompt and one foreground
// prototype (mask-weighted mean).
struct SupportPrototypes {
  std::vector<Point> points;  // N_p, canonically ordered
  Tensor heatmaps;            // [N_p, H, W], constant pooling weights
  ad::Var background;         // [N_p, C]
  ad::Var foreground;         // [C]
};

SupportPrototypes build_prototypes(ad::Tape& t, ad::Var feat_s, const Mask& mask_s,
                                   const BppcConfig& cfg, Rng& rng);

// Tape version of the weighted mean used above: [N,H,W] weights -> [N,C].
// Thin wrapper kept so callers don't reach into Tape for the common case.
inline ad::Var masked_average_pool(ad::Tape& t, ad::Var feat, const Tensor& weights) {
  return t.map_pool(feat, weights);
}

}  // namespace halo
