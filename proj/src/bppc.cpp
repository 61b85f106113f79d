#include "halo/bppc.hpp"

namespace halo {

SupportPrototypes build_prototypes(ad::Tape& t, ad::Var feat_s, const Mask& mask_s,
                                   const BppcConfig& cfg, Rng& rng) {
  const int c = t.val(feat_s).dim(0), h = t.val(feat_s).dim(1), w = t.val(feat_s).dim(2);
  require(mask_s.h == h && mask_s.w == w, Err::ShapeMismatch,
          "build_prototypes: mask and features disagree on the grid");
  require(!mask_s.empty(), Err::EmptyMask, "build_prototypes: empty support mask");

  const Mask band = geom::differential_ring(mask_s, cfg.r, cfg.eps);
  const Point anchor = geom::centroid(mask_s);

  SupportPrototypes out;
  out.points = geom::sample_points(band, cfg.n_prompts, rng, anchor);
  out.heatmaps = geom::heatmap_stack(out.points, cfg.sigma, h, w);
  out.background = t.map_pool(feat_s, out.heatmaps);

  Tensor mask_w({1, h, w});
  for (int64_t i = 0; i < mask_w.size(); ++i)
    mask_w[i] = mask_s.v[static_cast<size_t>(i)] ? 1.0 : 0.0;
  out.foreground = t.reshape(t.map_pool(feat_s, mask_w), {c});
  return out;
}

}  // namespace halo
