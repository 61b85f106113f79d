#include "halo/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace halo {

double dice(const Mask& pred, const Mask& gt) {
  require(pred.h == gt.h && pred.w == gt.w, Err::ShapeMismatch, "dice: shape mismatch");
  int64_t inter = 0, a = 0, b = 0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    inter += pred.v[i] & gt.v[i];
    a += pred.v[i];
    b += gt.v[i];
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

std::vector<Point> boundary_pixels(const Mask& m) {
  std::vector<Point> out;
  for (int r = 0; r < m.h; ++r)
    for (int c = 0; c < m.w; ++c) {
      if (!m.at(r, c)) continue;
      const bool edge = r == 0 || r == m.h - 1 || c == 0 || c == m.w - 1 || !m.at(r - 1, c) ||
                        !m.at(r + 1, c) || !m.at(r, c - 1) || !m.at(r, c + 1);
      if (edge) out.push_back({static_cast<double>(r), static_cast<double>(c)});
    }
  return out;
}

PromptStats background_prompt_stats(const std::vector<Point>& pts, const Mask& gt) {
  PromptStats s;
  s.count = static_cast<int>(pts.size());
  if (pts.empty()) return s;
  const std::vector<Point> boundary = boundary_pixels(gt);
  double dist_sum = 0.0;
  int inside = 0;
  for (const Point& p : pts) {
    double best = 1e300;
    for (const Point& b : boundary) best = std::min(best, std::hypot(p.row - b.row, p.col - b.col));
    dist_sum += boundary.empty() ? 0.0 : best;
    const int r = std::clamp(static_cast<int>(std::lround(p.row)), 0, gt.h - 1);
    const int c = std::clamp(static_cast<int>(std::lround(p.col)), 0, gt.w - 1);
    inside += gt.at(r, c) ? 1 : 0;
  }
  s.mean_boundary_dist = dist_sum / static_cast<double>(pts.size());
  s.frac_inside_fg = static_cast<double>(inside) / static_cast<double>(pts.size());
  return s;
}

EllipseFit fit_ellipse(const std::vector<Point>& pts) {
  require(pts.size() >= 3, Err::InvalidParameter, "fit_ellipse: need at least 3 points");
  EllipseFit e;
  double sr = 0.0, sc = 0.0;
  for (const Point& p : pts) {
    sr += p.row;
    sc += p.col;
  }
  e.row = sr / pts.size();
  e.col = sc / pts.size();
  double crr = 0.0, ccc = 0.0, crc = 0.0;
  for (const Point& p : pts) {
    const double dr = p.row - e.row, dc = p.col - e.col;
    crr += dr * dr;
    ccc += dc * dc;
    crc += dr * dc;
  }
  crr /= pts.size();
  ccc /= pts.size();
  crc /= pts.size();
  // closed-form 2x2 symmetric eigendecomposition; for uniform samples on an
  // ellipse the eigenvalues are (semi-axis)^2 / 2
  const double tr = crr + ccc;
  const double det = crr * ccc - crc * crc;
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  const double l1 = tr / 2.0 + disc, l2 = std::max(1e-12, tr / 2.0 - disc);
  e.a = std::sqrt(2.0 * l1);
  e.b = std::sqrt(2.0 * l2);
  double vr, vc;  // eigenvector of l1 in (row, col)
  if (std::abs(crc) > 1e-12) {
    vr = l1 - ccc;
    vc = crc;
  } else {
    vr = crr >= ccc ? 1.0 : 0.0;
    vc = crr >= ccc ? 0.0 : 1.0;
  }
  const double n = std::hypot(vr, vc);
  e.cos_t = vc / n;  // angle measured against the +col axis
  e.sin_t = vr / n;
  return e;
}

double ellipse_residual(const EllipseFit& e, const std::vector<Point>& pts) {
  double acc = 0.0;
  for (const Point& p : pts) {
    const double dr = p.row - e.row, dc = p.col - e.col;
    const double u = e.cos_t * dc + e.sin_t * dr;
    const double v = -e.sin_t * dc + e.cos_t * dr;
    const double q = (u / e.a) * (u / e.a) + (v / e.b) * (v / e.b) - 1.0;
    acc += q * q;
  }
  return pts.empty() ? 0.0 : acc / static_cast<double>(pts.size());
}

}  // namespace halo
