#pragma once

#include "halo/bcm.hpp"
#include "halo/bppc.hpp"
#include "halo/encoder.hpp"
#include "halo/episodes.hpp"
#include "halo/spr.hpp"

namespace halo {

struct ModelConfig {
  int working_size = 64;
  EncoderConfig encoder;  // channels/depth; spatial size synced below
  BppcConfig bppc;
  BcmConfig bcm;
  SprConfig spr;
  double fg_threshold = 0.9;  // foreground sampling threshold on the calibrated map
  int n_fg = 10;              // N_f

  // Propagates shared dimensions (C, N_p, S, sigma) into the stage configs.
  void sync();
};

struct Model {
  ModelConfig cfg;
  ad::ParamStore params;
  EncoderParams enc;
  BcmParams bcm;
  SprParams spr;

  static Model init(ModelConfig cfg, uint64_t seed);
};

struct EpisodeForward {
  ad::Var feat_s, feat_q;
  SupportPrototypes protos;
  BcmOut bcm;
  SprOut spr;                  // vars invalid when SPR is disabled
  std::vector<Point> refined;  // final background prompt coordinates
};

// Support/query forward pass: encode both images with the shared encoder,
// build support prototypes, run context modeling, optionally refine.
// prompt_seed drives the support ring sampling.
EpisodeForward forward_episode(ad::Tape& t, const Model& m, const Tensor& support_image,
                               const Mask& support_mask, const Tensor& query_image,
                               uint64_t prompt_seed);

}  // namespace halo
