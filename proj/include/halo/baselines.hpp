#pragma once

#include "halo/prompts.hpp"

namespace halo {

// The two coarse-prediction prompt extraction strategies this pipeline is
// compared against: confidence extremes and plain mask sampling.

// n_fg highest- and n_bg lowest-probability pixels (ties by row-major index).
PromptSet baseline_confidence_prompts(const Tensor& prob_map, int n_fg, int n_bg);

// Uniform samples inside (foreground) and outside (background) a coarse mask.
PromptSet baseline_mask_prompts(const Mask& coarse_mask, int n_fg, int n_bg, Rng& rng);

}  // namespace halo
