#include "halo/losses.hpp"

#include <cmath>
#include <cstdio>

namespace halo {

ad::Var rac_loss(ad::Tape& t, ad::Var fg_proto, ad::Var pos_proto, ad::Var bg_protos, double tau,
                 bool include_pos) {
  require(tau > 0.0, Err::InvalidParameter, "rac_loss: tau must be > 0");
  const int c = static_cast<int>(t.val(fg_proto).size());
  ad::Var pos_cos = t.cos_rows(t.reshape(pos_proto, {1, c}), fg_proto);  // [1]
  ad::Var neg_cos = t.cos_rows(bg_protos, fg_proto);                     // [N_p]
  ad::Var pos_logit = t.scale(pos_cos, 1.0 / tau);
  ad::Var neg_logits = t.scale(neg_cos, 1.0 / tau);
  ad::Var denom = include_pos ? t.logsumexp(t.concat(neg_logits, pos_logit))
                              : t.logsumexp(neg_logits);
  return t.sub(denom, pos_logit);
}

ad::Var positive_prototype(ad::Tape& t, ad::Var feat_s, const Mask& mask_s, int erosion_px) {
  require(!mask_s.empty(), Err::EmptyMask, "positive_prototype: empty mask");
  const Mask inner = geom::erode(mask_s, erosion_px);
  Mask band(mask_s.h, mask_s.w);
  int64_t n = 0;
  for (size_t i = 0; i < band.v.size(); ++i) {
    band.v[i] = static_cast<uint8_t>(mask_s.v[i] && !inner.v[i]);
    n += band.v[i];
  }
  if (n == 0) {
    std::fprintf(stderr, "halo: positive_prototype: empty outer band, using the whole mask\n");
    band = mask_s;
  }
  Tensor w({1, mask_s.h, mask_s.w});
  for (int64_t i = 0; i < w.size(); ++i) w[i] = band.v[static_cast<size_t>(i)] ? 1.0 : 0.0;
  const int c = t.val(feat_s).dim(0);
  return t.reshape(t.map_pool(feat_s, w), {c});
}

ad::Var heatmap_loss(ad::Tape& t, ad::Var proposals, ad::Var predicted, const Tensor& target) {
  require(t.val(proposals).same_shape(target) && t.val(predicted).same_shape(target),
          Err::ShapeMismatch, "heatmap_loss: stack shapes differ");
  const double denom = static_cast<double>(target.size());
  return t.scale(t.add(t.sse(proposals, target), t.sse(predicted, target)), 1.0 / denom);
}

ad::Var coord_loss(ad::Tape& t, ad::Var refined, const std::vector<Point>& gt) {
  const int n = t.val(refined).dim(0);
  require(static_cast<size_t>(n) == gt.size(), Err::ShapeMismatch,
          "coord_loss: point count mismatch");
  Tensor g({n, 2});
  for (int i = 0; i < n; ++i) {
    g.at(i, 0) = gt[static_cast<size_t>(i)].row;
    g.at(i, 1) = gt[static_cast<size_t>(i)].col;
  }
  return t.mean_sq_point_dist(refined, g);
}

ad::Var foreground_loss(ad::Tape& t, ad::Var calibrated, const Mask& mask_q) {
  const Tensor& cv = t.val(calibrated);
  require(cv.dim(0) == mask_q.h && cv.dim(1) == mask_q.w, Err::ShapeMismatch,
          "foreground_loss: mask/map shape mismatch");
  Tensor target({mask_q.h, mask_q.w});
  for (int64_t i = 0; i < target.size(); ++i)
    target[i] = mask_q.v[static_cast<size_t>(i)] ? 1.0 : 0.0;
  return t.bce_mean(calibrated, target);
}

EpisodeLosses episode_losses(ad::Tape& t, const Model& m, const EpisodeForward& fwd,
                             const Episode& ep, const LossConfig& cfg, uint64_t gt_seed) {
  require(ep.has_query_mask, Err::InvalidParameter, "episode_losses: query mask required");
  const int s = m.cfg.working_size;

  // ground-truth query ring, ordered the same way as the support prompts
  Rng rng(gt_seed);
  const Mask band = geom::differential_ring(ep.query_mask, m.cfg.bppc.r, m.cfg.bppc.eps);
  EpisodeLosses out;
  out.gt_ring =
      geom::sample_points(band, m.cfg.bppc.n_prompts, rng, geom::centroid(ep.query_mask));
  const Tensor target = geom::heatmap_stack(out.gt_ring, m.cfg.bppc.sigma, s, s);

  out.heat = heatmap_loss(t, fwd.bcm.proposals, fwd.bcm.heatmaps, target);
  ad::Var refined = m.cfg.spr.enabled
                        ? fwd.spr.refined
                        : t.constant([&] {
                            Tensor c({m.cfg.bppc.n_prompts, 2});
                            for (int i = 0; i < c.dim(0); ++i) {
                              c.at(i, 0) = fwd.refined[static_cast<size_t>(i)].row;
                              c.at(i, 1) = fwd.refined[static_cast<size_t>(i)].col;
                            }
                            return c;
                          }());
  out.coor = coord_loss(t, refined, out.gt_ring);
  ad::Var pos = positive_prototype(t, fwd.feat_s, ep.support_mask, cfg.erosion);
  out.rac = rac_loss(t, fwd.protos.foreground, pos, fwd.protos.background, cfg.tau,
                     cfg.rac_include_positive_in_denominator);
  out.fore = foreground_loss(t, fwd.bcm.sup.calibrated, ep.query_mask);

  const struct {
    const char* name;
    ad::Var v;
  } parts[] = {{"L_rac", out.rac}, {"L_heat", out.heat}, {"L_coor", out.coor}, {"L_fore", out.fore}};
  for (const auto& p : parts)
    require(std::isfinite(t.val(p.v)[0]), Err::TrainingDivergence,
            std::string("non-finite loss term: ") + p.name);

  out.total = t.add(t.add(out.rac, t.scale(out.heat, cfg.lambda_heat)),
                    t.add(t.scale(out.coor, cfg.lambda_coor), out.fore));
  return out;
}

}  // namespace halo
