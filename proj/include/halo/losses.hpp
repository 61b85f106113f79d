#pragma once

#include "halo/model.hpp"

namespace halo {

struct LossConfig {
  double tau = 0.1;           // contrastive temperature
  double lambda_heat = 1e3;   // heatmap term weight
  double lambda_coor = 1e-4;  // coordinate term weight
  int erosion = 2;            // positive-region band width, px
  bool rac_include_positive_in_denominator = false;
};

// -log( exp(cos(fg,pos)/tau) / sum_i exp(cos(fg,bg_i)/tau) ). The positive
// term stays out of the denominator unless include_pos is set.
ad::Var rac_loss(ad::Tape& t, ad::Var fg_proto, ad::Var pos_proto, ad::Var bg_protos, double tau,
                 bool include_pos);

// Mean feature over the outermost foreground band (mask minus its eroded
// interior); falls back to the whole-mask mean, with a warning, when the
// band is empty.
ad::Var positive_prototype(ad::Tape& t, ad::Var feat_s, const Mask& mask_s, int erosion_px);

// (1/(N HW)) (|proposals - target|_F^2 + |predicted - target|_F^2)
ad::Var heatmap_loss(ad::Tape& t, ad::Var proposals, ad::Var predicted, const Tensor& target);

// (1/N) sum_i |refined_i - gt_i|^2, both lists canonically ordered.
ad::Var coord_loss(ad::Tape& t, ad::Var refined, const std::vector<Point>& gt);

// Mean pixel-wise binary cross-entropy of the calibrated correlation map.
ad::Var foreground_loss(ad::Tape& t, ad::Var calibrated, const Mask& mask_q);

struct EpisodeLosses {
  ad::Var rac, heat, coor, fore, total;
  std::vector<Point> gt_ring;  // the sampled ground-truth query ring
};

// All four terms plus the weighted total for one training episode. gt_seed
// drives the ground-truth query ring sample. Throws the training-divergence
// error, naming the offending term, if any part is non-finite.
EpisodeLosses episode_losses(ad::Tape& t, const Model& m, const EpisodeForward& fwd,
                             const Episode& ep, const LossConfig& cfg, uint64_t gt_seed);

}  // namespace halo
