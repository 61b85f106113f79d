#pragma once

#include <string>
#include <vector>

#include "halo/autodiff.hpp"
#include "halo/geometry.hpp"
#include "halo/rng.hpp"

namespace halo {

enum class GraphKind { None, Ring, Adaptive, Mixed };

struct SprConfig {
  int channels = 32;
  int n_prompts = 10;
  int k = 8;           // candidate offsets per step
  int kappa = 3;       // refinement iterations
  double beta = 8.0;   // per-step offset bound, px (working size / 8 by default)
  double sigma = 4.0;  // heatmap stddev for query prototypes
  GraphKind graph = GraphKind::Mixed;
  int hidden = 0;      // offset-net hidden width, 0 -> 2 * channels
  bool enabled = true;
};

struct SprParams {
  SprConfig cfg;
  int w_theta, w_phi;  // adaptive graph projections
  int alpha_raw;       // mixing factor, alpha = sigmoid(alpha_raw)
  int w_g;             // GCN projection
  int off_w1, off_b1, off_w2, off_b2;  // offset net, 2C -> hidden -> 2k
  int w_att;           // [C,k] candidate weights
};

SprParams make_spr(ad::ParamStore& ps, const SprConfig& cfg, Rng& rng,
                   const std::string& prefix = "spr");

// Row-softmax of (P W_theta)(P W_phi)^T / sqrt(C). Rows sum to 1.
ad::Var adaptive_graph(ad::Tape& t, const SprParams& p, ad::Var protos);

// Static ring adjacency: ones at j = i +- 1 (mod N_p). Plain tensor since it
// has no parameters.
Tensor ring_graph(int n_prompts);

// alpha * a + (1 - alpha) * r, alpha in [0,1].
ad::Var mix_graphs(ad::Tape& t, ad::Var adaptive, ad::Var ring, ad::Var alpha);

// ReLU(D^-1/2 A D^-1/2 Q W_g) with D = diag(row sums). Throws the degenerate
// graph error when a row sum is not positive.
ad::Var gcn_propagate(ad::Tape& t, const SprParams& p, ad::Var adjacency, ad::Var protos);

// Gaussian heatmap per coarse point pooled against the query features; the
// same stamping/pooling path the support side uses.
ad::Var build_query_prototypes(ad::Tape& t, ad::Var feat_q, const std::vector<Point>& coarse,
                               double sigma);

// Iterative deformable update of the coarse coordinates (kappa steps, k
// bounded candidate offsets aggregated by a per-prompt softmax).
// Returns the refined coordinates stacked as [N_p, 2].
ad::Var deformable_refine(ad::Tape& t, const SprParams& p, const std::vector<Point>& coarse,
                          ad::Var q_protos, ad::Var q_updated, ad::Var feat_q);

struct SprOut {
  ad::Var adjacency;     // [N_p,N_p] per the configured graph kind
  ad::Var query_protos;  // [N_p,C] Q
  ad::Var updated;       // [N_p,C] Q'
  ad::Var refined;       // [N_p,2]
};

// Full stage: graphs from the support prototypes, GCN update of the query
// prototypes, then coordinate refinement. GraphKind::None uses the identity
// adjacency (the GCN collapses to a per-prompt projection).
SprOut spr_forward(ad::Tape& t, const SprParams& p, ad::Var support_protos,
                   const std::vector<Point>& coarse, ad::Var feat_q);

}  // namespace halo
