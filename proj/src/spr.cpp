#include "halo/spr.hpp"

#include <cmath>

namespace halo {

namespace {
Tensor gauss_init(std::vector<int> dims, double std, Rng& rng) {
  Tensor t(dims);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
  return t;
}
}  // namespace

SprParams make_spr(ad::ParamStore& ps, const SprConfig& cfg, Rng& rng,
                   const std::string& prefix) {
  require(cfg.k >= 1 && cfg.kappa >= 1, Err::InvalidParameter, "spr: k and kappa must be >= 1");
  const int c = cfg.channels;
  const int hidden = cfg.hidden > 0 ? cfg.hidden : 2 * c;
  SprParams p;
  p.cfg = cfg;
  p.cfg.hidden = hidden;
  auto add = [&](const std::string& n, Tensor t) { return ps.add(prefix + "." + n, std::move(t)); };
  p.w_theta = add("w_theta", gauss_init({c, c}, std::sqrt(1.0 / c), rng));
  p.w_phi = add("w_phi", gauss_init({c, c}, std::sqrt(1.0 / c), rng));
  p.alpha_raw = add("alpha_raw", Tensor({1}));  // alpha starts at 0.5
  p.w_g = add("w_g", gauss_init({c, c}, std::sqrt(2.0 / c), rng));
  p.off_w1 = add("off.w1", gauss_init({2 * c, hidden}, std::sqrt(2.0 / (2 * c)), rng));
  p.off_b1 = add("off.b1", Tensor({hidden}));
  // small last layer so refinement starts near the coarse points
  p.off_w2 = add("off.w2", gauss_init({hidden, 2 * cfg.k}, 0.01, rng));
  p.off_b2 = add("off.b2", Tensor({2 * cfg.k}));
  p.w_att = add("w_att", gauss_init({c, cfg.k}, std::sqrt(1.0 / c), rng));
  return p;
}

ad::Var adaptive_graph(ad::Tape& t, const SprParams& p, ad::Var protos) {
  const int c = t.val(protos).dim(1);
  require(t.val(protos).dim(0) >= 2, Err::InvalidParameter, "adaptive_graph: need N_p >= 2");
  ad::Var a = t.matmul(protos, t.param(p.w_theta));
  ad::Var b = t.matmul(protos, t.param(p.w_phi));
  ad::Var logits = t.scale(t.matmul(a, t.transpose(b)), 1.0 / std::sqrt(static_cast<double>(c)));
  return t.softmax_rows(logits);
}

Tensor ring_graph(int n_prompts) {
  require(n_prompts >= 2, Err::InvalidParameter, "ring_graph: need N_p >= 2");
  Tensor a({n_prompts, n_prompts});
  for (int i = 0; i < n_prompts; ++i) {
    a.at(i, (i + 1) % n_prompts) = 1.0;
    a.at(i, (i + n_prompts - 1) % n_prompts) = 1.0;  // binary, so N_p=2 stays 0/1
  }
  return a;
}

ad::Var mix_graphs(ad::Tape& t, ad::Var adaptive, ad::Var ring, ad::Var alpha) {
  require(t.val(adaptive).same_shape(t.val(ring)), Err::ShapeMismatch,
          "mix_graphs: size mismatch");
  const double av = t.val(alpha)[0];
  require(av >= 0.0 && av <= 1.0, Err::InvalidParameter, "mix_graphs: alpha outside [0,1]");
  ad::Var one_minus = t.add_const(t.scale(alpha, -1.0), 1.0);
  return t.add(t.scalar_mul(adaptive, alpha), t.scalar_mul(ring, one_minus));
}

ad::Var gcn_propagate(ad::Tape& t, const SprParams& p, ad::Var adjacency, ad::Var protos) {
  ad::Var deg = t.row_sums(adjacency);
  for (int64_t i = 0; i < t.val(deg).size(); ++i)
    require(t.val(deg)[i] > 0.0, Err::DegenerateGraph, "gcn_propagate: zero row sum");
  ad::Var dinv = t.rsqrt(deg);
  ad::Var norm = t.scale_cols(t.scale_rows(adjacency, dinv), dinv);
  return t.relu(t.matmul(norm, t.matmul(protos, t.param(p.w_g))));
}

ad::Var build_query_prototypes(ad::Tape& t, ad::Var feat_q, const std::vector<Point>& coarse,
                               double sigma) {
  const Tensor& fv = t.val(feat_q);
  const Tensor stack = geom::heatmap_stack(coarse, sigma, fv.dim(1), fv.dim(2));
  return t.map_pool(feat_q, stack);
}

ad::Var deformable_refine(ad::Tape& t, const SprParams& p, const std::vector<Point>& coarse,
                          ad::Var q_protos, ad::Var q_updated, ad::Var feat_q) {
  const Tensor& fv = t.val(feat_q);
  const double rmax = fv.dim(1) - 1.0, cmax = fv.dim(2) - 1.0;
  const int np = static_cast<int>(coarse.size());
  std::vector<ad::Var> rows;
  rows.reserve(static_cast<size_t>(np));
  for (int i = 0; i < np; ++i) {
    ad::Var qi = t.row(q_protos, i);
    ad::Var f = t.row(q_updated, i);
    // candidate weights depend only on q_i, so they are fixed across steps
    ad::Var w = t.softmax_rows(t.affine(qi, t.param(p.w_att), ad::Var{}));
    ad::Var mu = t.constant(Tensor::from({2}, {coarse[static_cast<size_t>(i)].row,
                                               coarse[static_cast<size_t>(i)].col}));
    for (int step = 0; step < p.cfg.kappa; ++step) {
      ad::Var hid = t.relu(t.affine(t.concat(qi, f), t.param(p.off_w1), t.param(p.off_b1)));
      ad::Var off = t.scale(t.tanh_(t.reshape(t.affine(hid, t.param(p.off_w2), t.param(p.off_b2)),
                                              {p.cfg.k, 2})),
                            p.cfg.beta);
      ad::Var cand = t.broadcast_add_row(off, mu);  // mu + d_mu, one row per candidate
      mu = t.reshape(t.clamp_coords(t.reshape(t.weighted_rows(w, cand), {1, 2}), rmax, cmax), {2});
      f = t.weighted_rows(w, t.bilinear_sample(feat_q, cand));
    }
    rows.push_back(mu);
  }
  return t.stack_rows(rows);
}

SprOut spr_forward(ad::Tape& t, const SprParams& p, ad::Var support_protos,
                   const std::vector<Point>& coarse, ad::Var feat_q) {
  const int np = p.cfg.n_prompts;
  SprOut o;
  switch (p.cfg.graph) {
    case GraphKind::None: {
      Tensor eye({np, np});
      for (int i = 0; i < np; ++i) eye.at(i, i) = 1.0;
      o.adjacency = t.constant(eye);
      break;
    }
    case GraphKind::Ring:
      o.adjacency = t.constant(ring_graph(np));
      break;
    case GraphKind::Adaptive:
      o.adjacency = adaptive_graph(t, p, support_protos);
      break;
    case GraphKind::Mixed: {
      ad::Var alpha = t.sigmoid(t.param(p.alpha_raw));
      o.adjacency = mix_graphs(t, adaptive_graph(t, p, support_protos),
                               t.constant(ring_graph(np)), alpha);
      break;
    }
  }
  o.query_protos = build_query_prototypes(t, feat_q, coarse, p.cfg.sigma);
  o.updated = gcn_propagate(t, p, o.adjacency, o.query_protos);
  o.refined = deformable_refine(t, p, coarse, o.query_protos, o.updated, feat_q);
  return o;
}

}  // namespace halo
