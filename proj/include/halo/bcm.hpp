#pragma once

#include <string>
#include <vector>

#include "halo/autodiff.hpp"
#include "halo/geometry.hpp"
#include "halo/rng.hpp"

namespace halo {

struct BcmConfig {
  int channels = 32;
  int n_prompts = 10;
  int heads = 4;
  int ffn_hidden = 0;   // 0 -> 2 * channels
  double ln_eps = 1e-5; // layer-norm stability constant
};

struct BcmParams {
  BcmConfig cfg;
  // Eq-5 projections and the per-prototype channel gate
  int w_s, w_q;
  int gate_w1, gate_b1, gate_w2, gate_b2;
  // key bias: 1x1 conv collapsing the proposal stack to one map
  int bias_w, bias_b;
  // attention block
  int att_wq, att_bq, att_wk, att_bk, att_wv, att_bv, att_wo, att_bo;
  int ln1_g, ln1_b, ln2_g, ln2_b;
  int ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  // detection head
  int head_w1, head_b1, head_w2, head_b2;
};

BcmParams make_bcm(ad::ParamStore& ps, const BcmConfig& cfg, Rng& rng,
                   const std::string& prefix = "bcm");

// Foreground suppression: raw cosine map against the foreground prototype
// and the (1 - cos)-scaled feature map.
struct Suppressed {
  ad::Var raw;         // [H,W] in [-1,1]
  ad::Var calibrated;  // [H,W] in (0,1)
  ad::Var features;    // [C,H,W]
};
Suppressed suppress_foreground(ad::Tape& t, ad::Var feat_q, ad::Var fg_proto);

// Coarse proposals: channel i is <gate_i . (p_i W_s), W_q f(u,v)>.
ad::Var coarse_proposals(ad::Tape& t, const BcmParams& p, ad::Var bg_protos, ad::Var f_sup);

// Transformer block with the proposal-derived per-key logit bias.
ad::Var masked_attention_block(ad::Tape& t, const BcmParams& p, ad::Var f_sup, ad::Var proposals);

// conv3x3 + ReLU + conv1x1 + sigmoid -> [N_p,H,W] in (0,1).
ad::Var predict_heatmaps(ad::Tape& t, const BcmParams& p, ad::Var modulated);

// Per-channel argmax (non-differentiable; the coordinates are a stop-gradient
// boundary, heatmap supervision carries the gradient instead).
std::vector<Point> extract_coarse_prompts(const Tensor& heatmaps);

struct BcmOut {
  Suppressed sup;
  ad::Var proposals;  // [N_p,H,W]
  ad::Var modulated;  // [C,H,W]
  ad::Var heatmaps;   // [N_p,H,W]
  std::vector<Point> coarse;
};
BcmOut bcm_forward(ad::Tape& t, const BcmParams& p, ad::Var feat_q, ad::Var fg_proto,
                   ad::Var bg_protos);

}  // namespace halo
