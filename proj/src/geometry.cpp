#include "halo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "halo/kernels.hpp"

namespace halo {

int64_t Mask::count() const {
  int64_t n = 0;
  for (uint8_t x : v) n += x;
  return n;
}

namespace geom {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

Mask dilate(const Mask& m, int r) {
  require(r >= 1 && r % 2 == 1, Err::InvalidParameter, "dilate: kernel size must be odd and >= 1");
  require(!m.empty(), Err::EmptyMask, "dilate: empty mask");
  Mask out(m.h, m.w);
  kernels::dilate_square(m.v.data(), m.h, m.w, r, out.v.data());
  return out;
}

Mask erode(const Mask& m, int e) {
  if (e % 2 == 0) ++e;
  Mask inv(m.h, m.w);
  for (size_t i = 0; i < m.v.size(); ++i) inv.v[i] = m.v[i] ? 0 : 1;
  Mask dil(m.h, m.w);
  kernels::dilate_square(inv.v.data(), m.h, m.w, e, dil.v.data());
  Mask out(m.h, m.w);
  for (size_t i = 0; i < m.v.size(); ++i) out.v[i] = dil.v[i] ? 0 : 1;
  return out;
}

Mask differential_ring(const Mask& m, int r, int eps) {
  require(eps >= 0 && eps % 2 == 0, Err::InvalidParameter, "differential_ring: eps must be even");
  require(r - eps >= 1, Err::InvalidParameter, "differential_ring: need r - eps >= 1");
  Mask outer = dilate(m, r);
  Mask inner = dilate(m, r - eps);
  Mask band(m.h, m.w);
  int64_t n = 0;
  for (size_t i = 0; i < band.v.size(); ++i) {
    band.v[i] = static_cast<uint8_t>(outer.v[i] && !inner.v[i]);
    n += band.v[i];
  }
  require(n > 0, Err::EmptyRing, "differential_ring: band is empty (widen r or shrink the mask)");
  return band;
}

std::vector<Point> sample_points(const Mask& region, int n, Rng& rng,
                                 std::optional<Point> anchor) {
  require(n >= 1, Err::InvalidParameter, "sample_points: n must be >= 1");
  std::vector<Point> pixels;
  for (int r = 0; r < region.h; ++r)
    for (int c = 0; c < region.w; ++c)
      if (region.at(r, c)) pixels.push_back({static_cast<double>(r), static_cast<double>(c)});
  require(!pixels.empty(), Err::EmptyRing, "sample_points: region is empty");

  std::vector<Point> out;
  out.reserve(static_cast<size_t>(n));
  if (static_cast<int>(pixels.size()) >= n) {
    // partial Fisher-Yates, without replacement
    for (int i = 0; i < n; ++i) {
      const size_t j = i + static_cast<size_t>(rng.uniform_int(pixels.size() - i));
      std::swap(pixels[i], pixels[j]);
      out.push_back(pixels[i]);
    }
  } else {
    std::fprintf(stderr, "halo: sample_points: region has %zu px < n=%d, sampling with replacement\n",
                 pixels.size(), n);
    for (int i = 0; i < n; ++i) out.push_back(pixels[rng.uniform_int(pixels.size())]);
  }

  Point a;
  if (anchor) {
    a = *anchor;
  } else {
    double sr = 0.0, sc = 0.0;
    for (const Point& p : out) {
      sr += p.row;
      sc += p.col;
    }
    a = {sr / out.size(), sc / out.size()};
  }
  return canonical_order(std::move(out), a);
}

std::vector<Point> canonical_order(std::vector<Point> pts, Point anchor) {
  struct Key {
    double ang, rad, row, col;
  };
  auto key = [&](const Point& p) {
    const double dr = p.row - anchor.row, dc = p.col - anchor.col;
    double ang = std::atan2(dr, dc);
    if (ang < 0.0) ang += kTwoPi;
    return Key{ang, std::hypot(dr, dc), p.row, p.col};
  };
  std::stable_sort(pts.begin(), pts.end(), [&](const Point& x, const Point& y) {
    const Key a = key(x), b = key(y);
    if (a.ang != b.ang) return a.ang < b.ang;
    if (a.rad != b.rad) return a.rad < b.rad;
    if (a.row != b.row) return a.row < b.row;
    return a.col < b.col;
  });
  return pts;
}

Tensor gaussian_heatmap(Point center, double sigma, int h, int w) {
  require(sigma > 0.0, Err::InvalidParameter, "gaussian_heatmap: sigma must be > 0");
  Tensor t({h, w});
  kernels::gaussian_stamp(center.row, center.col, sigma, h, w, t.data());
  return t;
}

Tensor heatmap_stack(const std::vector<Point>& pts, double sigma, int h, int w) {
  require(sigma > 0.0, Err::InvalidParameter, "heatmap_stack: sigma must be > 0");
  Tensor t({static_cast<int>(pts.size()), h, w});
  for (size_t i = 0; i < pts.size(); ++i)
    kernels::gaussian_stamp(pts[i].row, pts[i].col, sigma, h, w,
                            t.data() + static_cast<int64_t>(i) * h * w);
  return t;
}

std::vector<double> bilinear_sample(const Tensor& feat, Point p) {
  const int c = feat.dim(0), h = feat.dim(1), w = feat.dim(2);
  const double r = std::clamp(p.row, 0.0, static_cast<double>(h - 1));
  const double cc = std::clamp(p.col, 0.0, static_cast<double>(w - 1));
  const int r0 = std::min(static_cast<int>(std::floor(r)), h - 1);
  const int c0 = std::min(static_cast<int>(std::floor(cc)), w - 1);
  const int r1 = std::min(r0 + 1, h - 1);
  const int c1 = std::min(c0 + 1, w - 1);
  const double tr = r - r0, tc = cc - c0;
  std::vector<double> out(static_cast<size_t>(c));
  for (int ch = 0; ch < c; ++ch) {
    const double v00 = feat.at(ch, r0, c0), v01 = feat.at(ch, r0, c1);
    const double v10 = feat.at(ch, r1, c0), v11 = feat.at(ch, r1, c1);
    out[static_cast<size_t>(ch)] =
        (1.0 - tr) * ((1.0 - tc) * v00 + tc * v01) + tr * ((1.0 - tc) * v10 + tc * v11);
  }
  return out;
}

Point argmax_location(const Tensor& heatmap) {
  const int w = heatmap.dim(1);
  int64_t best = 0;
  for (int64_t i = 1; i < heatmap.size(); ++i)
    if (heatmap[i] > heatmap[best]) best = i;
  return {static_cast<double>(best / w), static_cast<double>(best % w)};
}

Point centroid(const Mask& m) {
  double sr = 0.0, sc = 0.0;
  int64_t n = 0;
  for (int r = 0; r < m.h; ++r)
    for (int c = 0; c < m.w; ++c)
      if (m.at(r, c)) {
        sr += r;
        sc += c;
        ++n;
      }
  require(n > 0, Err::EmptyMask, "centroid: empty mask");
  return {sr / n, sc / n};
}

std::vector<double> masked_average_pool(const Tensor& feat, const Tensor& weights) {
  const int c = feat.dim(0);
  const int64_t hw = static_cast<int64_t>(feat.dim(1)) * feat.dim(2);
  require(weights.size() == hw, Err::ShapeMismatch, "masked_average_pool: weight shape mismatch");
  double wsum = 0.0;
  for (int64_t i = 0; i < hw; ++i) wsum += weights[i];
  require(wsum > 0.0, Err::ZeroWeight, "masked_average_pool: weights sum to zero");
  std::vector<double> out(static_cast<size_t>(c));
  kernels::map_pool_forward(feat.data(), c, hw, weights.data(), 1, &wsum, out.data());
  return out;
}

}  // namespace geom
}  // namespace halo
