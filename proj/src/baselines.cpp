#include "halo/baselines.hpp"

#include <algorithm>

namespace halo {

namespace {

std::vector<Point> extreme_pixels(const Tensor& map, int n, bool highest) {
  struct Scored {
    double v;
    int64_t idx;
  };
  std::vector<Scored> all;
  all.reserve(static_cast<size_t>(map.size()));
  for (int64_t i = 0; i < map.size(); ++i) all.push_back({map[i], i});
  const size_t take = std::min<size_t>(static_cast<size_t>(n), all.size());
  auto cmp = [highest](const Scored& a, const Scored& b) {
    if (a.v != b.v) return highest ? a.v > b.v : a.v < b.v;
    return a.idx < b.idx;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), cmp);
  const int w = map.dim(1);
  std::vector<Point> out;
  for (size_t i = 0; i < take; ++i)
    out.push_back({static_cast<double>(all[i].idx / w), static_cast<double>(all[i].idx % w)});
  return out;
}

std::vector<Point> sample_class(const Mask& m, uint8_t cls, int n, Rng& rng) {
  std::vector<Point> pixels;
  for (int r = 0; r < m.h; ++r)
    for (int c = 0; c < m.w; ++c)
      if (m.at(r, c) == cls) pixels.push_back({static_cast<double>(r), static_cast<double>(c)});
  std::vector<Point> out;
  if (static_cast<int>(pixels.size()) >= n) {
    for (int i = 0; i < n; ++i) {
      const size_t j = i + static_cast<size_t>(rng.uniform_int(pixels.size() - i));
      std::swap(pixels[static_cast<size_t>(i)], pixels[j]);
      out.push_back(pixels[static_cast<size_t>(i)]);
    }
  } else {
    for (int i = 0; i < n; ++i) out.push_back(pixels[rng.uniform_int(pixels.size())]);
  }
  return out;
}

}  // namespace

PromptSet baseline_confidence_prompts(const Tensor& prob_map, int n_fg, int n_bg) {
  PromptSet ps;
  ps.image_h = prob_map.dim(0);
  ps.image_w = prob_map.dim(1);
  ps.foreground = extreme_pixels(prob_map, n_fg, true);
  ps.background = extreme_pixels(prob_map, n_bg, false);
  return ps;
}

PromptSet baseline_mask_prompts(const Mask& coarse_mask, int n_fg, int n_bg, Rng& rng) {
  const int64_t fg = coarse_mask.count();
  const int64_t total = static_cast<int64_t>(coarse_mask.h) * coarse_mask.w;
  require(fg > 0 && fg < total, Err::DegenerateMask,
          "baseline_mask_prompts: mask must have both classes");
  PromptSet ps;
  ps.image_h = coarse_mask.h;
  ps.image_w = coarse_mask.w;
  ps.foreground = sample_class(coarse_mask, 1, n_fg, rng);
  ps.background = sample_class(coarse_mask, 0, n_bg, rng);
  return ps;
}

}  // namespace halo
