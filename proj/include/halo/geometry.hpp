#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "halo/rng.hpp"
#include "halo/tensor.hpp"

namespace halo {

// Binary mask, values are exactly 0 or 1.
struct Mask {
  int h = 0, w = 0;
  std::vector<uint8_t> v;

  Mask() = default;
  Mask(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {}

  uint8_t& at(int r, int c) { return v[static_cast<size_t>(r) * w + c]; }
  uint8_t at(int r, int c) const { return v[static_cast<size_t>(r) * w + c]; }
  int64_t count() const;
  bool empty() const { return count() == 0; }
};

// Continuous image coordinates, origin at the top-left pixel center.
struct Point {
  double row = 0.0, col = 0.0;
};

namespace geom {

// Morphological dilation with an r x r square structuring element, clipped at
// the image border. r must be odd; output is a superset of the input.
Mask dilate(const Mask& m, int r);

// Square erosion (dilation of the complement); e is rounded up to odd.
Mask erode(const Mask& m, int e);

// dilate(m, r) minus dilate(m, r - eps): the band background prompts are
// sampled from. eps must be even so r - eps keeps odd parity. Throws the
// empty-ring error when the band comes out empty (incl. the eps = 0 case,
// where the set difference is empty by definition).
Mask differential_ring(const Mask& m, int r, int eps);

// n points drawn uniformly without replacement from the region's pixels
// (with replacement, and a warning on stderr, iff the region has fewer than n
// pixels), then canonically ordered. anchor defaults to the region centroid;
// callers that know the foreground centroid should pass it.
std::vector<Point> sample_points(const Mask& region, int n, Rng& rng,
                                 std::optional<Point> anchor = std::nullopt);

// Sort by ascending polar angle about the anchor (angle in [0, 2pi), measured
// from the +col axis, increasing toward +row), ties by radius, row, col.
// Stable, so fully tied points keep their input order.
std::vector<Point> canonical_order(std::vector<Point> pts, Point anchor);

// grid(u,v) = exp(-((u-row)^2 + (v-col)^2) / (2 sigma^2)); unnormalized,
// value 1 at the exact center.
Tensor gaussian_heatmap(Point center, double sigma, int h, int w);

// One gaussian_heatmap per point, stacked as [n, h, w].
Tensor heatmap_stack(const std::vector<Point>& pts, double sigma, int h, int w);

// 4-neighbor bilinear interpolation of a [C,H,W] feature map at p, with p
// clamped into [0,H-1] x [0,W-1] first. Returns the C-vector.
std::vector<double> bilinear_sample(const Tensor& feat, Point p);

// Coordinates of the maximum of a [H,W] map; ties go to the smallest
// row-major index.
Point argmax_location(const Tensor& heatmap);

Point centroid(const Mask& m);

// Weighted mean feature: sum_uv F(:,u,v) w(u,v) / sum_uv w(u,v).
// weights must be nonnegative with a positive sum.
std::vector<double> masked_average_pool(const Tensor& feat, const Tensor& weights);

}  // namespace geom
}  // namespace halo
