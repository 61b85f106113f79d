#include "halo/bcm.hpp"

#include <cmath>

namespace halo {

namespace {

Tensor gauss_init(std::vector<int> dims, double std, Rng& rng) {
  Tensor t(dims);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
  return t;
}

Tensor xavier_init(std::vector<int> dims, int fan_in, int fan_out, Rng& rng) {
  return gauss_init(std::move(dims), std::sqrt(2.0 / (fan_in + fan_out)), rng);
}

}  // namespace

BcmParams make_bcm(ad::ParamStore& ps, const BcmConfig& cfg, Rng& rng,
                   const std::string& prefix) {
  const int c = cfg.channels, np = cfg.n_prompts;
  require(c % cfg.heads == 0, Err::InvalidParameter, "bcm: heads must divide channels");
  const int ffn = cfg.ffn_hidden > 0 ? cfg.ffn_hidden : 2 * c;
  BcmParams p;
  p.cfg = cfg;
  p.cfg.ffn_hidden = ffn;
  auto add = [&](const std::string& n, Tensor t) { return ps.add(prefix + "." + n, std::move(t)); };

  // small init keeps the raw proposal maps near zero early in training, where
  // they are regressed against peak-1 Gaussian targets
  p.w_s = add("w_s", gauss_init({c, c}, 0.02, rng));
  p.w_q = add("w_q", gauss_init({c, c}, 0.02, rng));
  p.gate_w1 = add("gate.w1", xavier_init({c, c}, c, c, rng));
  p.gate_b1 = add("gate.b1", Tensor({c}));
  p.gate_w2 = add("gate.w2", xavier_init({c, c}, c, c, rng));
  p.gate_b2 = add("gate.b2", Tensor({c}));
  p.bias_w = add("bias.w", gauss_init({1, np}, 0.1, rng));
  p.bias_b = add("bias.b", Tensor({1}));
  p.att_wq = add("att.wq", xavier_init({c, c}, c, c, rng));
  p.att_bq = add("att.bq", Tensor({c}));
  p.att_wk = add("att.wk", xavier_init({c, c}, c, c, rng));
  p.att_bk = add("att.bk", Tensor({c}));
  p.att_wv = add("att.wv", xavier_init({c, c}, c, c, rng));
  p.att_bv = add("att.bv", Tensor({c}));
  p.att_wo = add("att.wo", xavier_init({c, c}, c, c, rng));
  p.att_bo = add("att.bo", Tensor({c}));
  p.ln1_g = add("ln1.g", Tensor({c}, 1.0));
  p.ln1_b = add("ln1.b", Tensor({c}));
  p.ln2_g = add("ln2.g", Tensor({c}, 1.0));
  p.ln2_b = add("ln2.b", Tensor({c}));
  p.ffn_w1 = add("ffn.w1", xavier_init({c, ffn}, c, ffn, rng));
  p.ffn_b1 = add("ffn.b1", Tensor({ffn}));
  p.ffn_w2 = add("ffn.w2", xavier_init({ffn, c}, ffn, c, rng));
  p.ffn_b2 = add("ffn.b2", Tensor({c}));
  p.head_w1 = add("head.w1", gauss_init({c, c, 3, 3}, std::sqrt(2.0 / (c * 9)), rng));
  p.head_b1 = add("head.b1", Tensor({c}));
  p.head_w2 = add("head.w2", gauss_init({np, c, 1, 1}, std::sqrt(2.0 / c), rng));
  // negative bias starts the sigmoid output near the mostly-zero targets
  p.head_b2 = add("head.b2", Tensor({np}, -2.0));
  return p;
}

Suppressed suppress_foreground(ad::Tape& t, ad::Var feat_q, ad::Var fg_proto) {
  Suppressed s;
  s.raw = t.cosine_map(feat_q, fg_proto);  // throws on a zero prototype
  s.calibrated = t.calibrate(s.raw, 1e-6);
  ad::Var one_minus = t.add_const(t.scale(s.raw, -1.0), 1.0);
  s.features = t.mul_map(feat_q, one_minus);
  return s;
}

ad::Var coarse_proposals(ad::Tape& t, const BcmParams& p, ad::Var bg_protos, ad::Var f_sup) {
  const Tensor& fv = t.val(f_sup);
  const int c = fv.dim(0), h = fv.dim(1), w = fv.dim(2);
  // gate_i = sigmoid(MLP(p_i))
  ad::Var g1 = t.relu(t.broadcast_add_row(t.matmul(bg_protos, t.param(p.gate_w1)),
                                          t.param(p.gate_b1)));
  ad::Var gate = t.sigmoid(t.broadcast_add_row(t.matmul(g1, t.param(p.gate_w2)),
                                               t.param(p.gate_b2)));
  ad::Var proj = t.mul(gate, t.matmul(bg_protos, t.param(p.w_s)));       // [N_p,C]
  ad::Var fmat = t.reshape(f_sup, {c, h * w});                            // [C,HW]
  ad::Var fproj = t.matmul(t.param(p.w_q), fmat);                         // [C,HW]
  return t.reshape(t.matmul(proj, fproj), {p.cfg.n_prompts, h, w});
}

ad::Var masked_attention_block(ad::Tape& t, const BcmParams& p, ad::Var f_sup,
                               ad::Var proposals) {
  const Tensor& fv = t.val(f_sup);
  const int c = fv.dim(0), h = fv.dim(1), w = fv.dim(2);
  const int hw = h * w;

  // per-key bias from the proposal stack
  ad::Var phi_flat = t.reshape(proposals, {p.cfg.n_prompts, hw});
  ad::Var bias = t.relu(t.reshape(
      t.add_scalarvar(t.matmul(t.param(p.bias_w), phi_flat), t.param(p.bias_b)), {hw}));

  ad::Var x = t.transpose(t.reshape(f_sup, {c, hw}));  // [HW,C] tokens
  ad::Var q = t.broadcast_add_row(t.matmul(x, t.param(p.att_wq)), t.param(p.att_bq));
  ad::Var k = t.broadcast_add_row(t.matmul(x, t.param(p.att_wk)), t.param(p.att_bk));
  ad::Var v = t.broadcast_add_row(t.matmul(x, t.param(p.att_wv)), t.param(p.att_bv));
  ad::Var att = t.attention(q, k, v, bias, p.cfg.heads);
  ad::Var proj = t.broadcast_add_row(t.matmul(att, t.param(p.att_wo)), t.param(p.att_bo));
  ad::Var h1 = t.layer_norm(t.add(proj, x), t.param(p.ln1_g), t.param(p.ln1_b), p.cfg.ln_eps);
  ad::Var ff = t.broadcast_add_row(
      t.matmul(t.relu(t.broadcast_add_row(t.matmul(h1, t.param(p.ffn_w1)), t.param(p.ffn_b1))),
               t.param(p.ffn_w2)),
      t.param(p.ffn_b2));
  ad::Var h2 = t.layer_norm(t.add(ff, h1), t.param(p.ln2_g), t.param(p.ln2_b), p.cfg.ln_eps);
  return t.reshape(t.transpose(h2), {c, h, w});
}

ad::Var predict_heatmaps(ad::Tape& t, const BcmParams& p, ad::Var modulated) {
  ad::Var x = t.relu(t.conv2d(modulated, t.param(p.head_w1), t.param(p.head_b1), 1, 1));
  return t.sigmoid(t.conv2d(x, t.param(p.head_w2), t.param(p.head_b2), 1, 0));
}

std::vector<Point> extract_coarse_prompts(const Tensor& heatmaps) {
  const int n = heatmaps.dim(0), h = heatmaps.dim(1), w = heatmaps.dim(2);
  std::vector<Point> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor channel({h, w});
    std::copy(heatmaps.data() + static_cast<int64_t>(i) * h * w,
              heatmaps.data() + static_cast<int64_t>(i + 1) * h * w, channel.data());
    out.push_back(geom::argmax_location(channel));
  }
  return out;
}

BcmOut bcm_forward(ad::Tape& t, const BcmParams& p, ad::Var feat_q, ad::Var fg_proto,
                   ad::Var bg_protos) {
  BcmOut o;
  o.sup = suppress_foreground(t, feat_q, fg_proto);
  o.proposals = coarse_proposals(t, p, bg_protos, o.sup.features);
  o.modulated = masked_attention_block(t, p, o.sup.features, o.proposals);
  o.heatmaps = predict_heatmaps(t, p, o.modulated);
  o.coarse = extract_coarse_prompts(t.val(o.heatmaps));
  return o;
}

}  // namespace halo
