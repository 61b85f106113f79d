#pragma once

#include <vector>

#include "halo/geometry.hpp"

namespace halo {

// 2|a&b| / (|a|+|b|); 1 when both masks are empty.
double dice(const Mask& pred, const Mask& gt);

// Foreground pixels with a 4-neighbor outside the mask (or on the border).
std::vector<Point> boundary_pixels(const Mask& m);

struct PromptStats {
  double mean_boundary_dist = 0.0;  // mean Euclidean distance to the GT boundary
  double frac_inside_fg = 0.0;      // fraction of points landing on GT foreground
  int count = 0;
};
PromptStats background_prompt_stats(const std::vector<Point>& pts, const Mask& gt);

// Moment-fit ellipse (center from the mean, axes/orientation from the
// second moments of points assumed spread over the ellipse).
struct EllipseFit {
  double row = 0.0, col = 0.0;  // center
  double a = 1.0, b = 1.0;      // semi-axes
  double cos_t = 1.0, sin_t = 0.0;
};
EllipseFit fit_ellipse(const std::vector<Point>& pts);

// Mean squared algebraic residual ((u/a)^2 + (v/b)^2 - 1)^2 of points
// against a fitted ellipse; the ring-shape deviation measure.
double ellipse_residual(const EllipseFit& e, const std::vector<Point>& pts);

}  // namespace halo
