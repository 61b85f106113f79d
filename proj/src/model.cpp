#include "halo/model.hpp"

namespace halo {

void ModelConfig::sync() {
  encoder.working_size = working_size;
  bcm.channels = encoder.channels;
  bcm.n_prompts = bppc.n_prompts;
  spr.channels = encoder.channels;
  spr.n_prompts = bppc.n_prompts;
  spr.sigma = bppc.sigma;
  if (spr.beta <= 0.0) spr.beta = working_size / 8.0;
}

Model Model::init(ModelConfig cfg, uint64_t seed) {
  cfg.sync();
  Model m;
  m.cfg = cfg;
  Rng rng(Rng::derive(seed, 0x1417u));
  m.enc = make_encoder(m.params, cfg.encoder, rng);
  m.bcm = make_bcm(m.params, cfg.bcm, rng);
  m.spr = make_spr(m.params, cfg.spr, rng);
  return m;
}

EpisodeForward forward_episode(ad::Tape& t, const Model& m, const Tensor& support_image,
                               const Mask& support_mask, const Tensor& query_image,
                               uint64_t prompt_seed) {
  const int s = m.cfg.working_size;
  require(support_image.dim(0) == s && support_image.dim(1) == s && query_image.dim(0) == s &&
              query_image.dim(1) == s,
          Err::ShapeMismatch, "forward_episode: images must be at the working size");

  EpisodeForward out;
  out.feat_s = encode(t, m.enc, t.constant(support_image.reshaped({1, s, s})));
  out.feat_q = encode(t, m.enc, t.constant(query_image.reshaped({1, s, s})));

  Rng prng(prompt_seed);
  out.protos = build_prototypes(t, out.feat_s, support_mask, m.cfg.bppc, prng);
  out.bcm = bcm_forward(t, m.bcm, out.feat_q, out.protos.foreground, out.protos.background);

  if (m.cfg.spr.enabled) {
    out.spr = spr_forward(t, m.spr, out.protos.background, out.bcm.coarse, out.feat_q);
    const Tensor& r = t.val(out.spr.refined);
    for (int i = 0; i < r.dim(0); ++i) out.refined.push_back({r.at(i, 0), r.at(i, 1)});
  } else {
    out.refined = out.bcm.coarse;
  }
  return out;
}

}  // namespace halo
