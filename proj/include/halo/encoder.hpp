#pragma once

#include <string>
#include <vector>

#include "halo/autodiff.hpp"
#include "halo/rng.hpp"

namespace halo {

struct EncoderConfig {
  int channels = 32;  // feature width C (>= 8)
  int depth = 4;      // conv stages
  int working_size = 64;
  int in_channels = 1;
};

// Strided conv pyramid with a final bilinear resize back to the working
// grid, so features and heatmaps share one S x S lattice. Stages 2 and 3
// run at stride 2 (when present).
struct EncoderParams {
  EncoderConfig cfg;
  std::vector<int> conv_w, conv_b;  // ParamStore ids per stage
  std::vector<int> strides;
};

EncoderParams make_encoder(ad::ParamStore& ps, const EncoderConfig& cfg, Rng& rng,
                           const std::string& prefix = "encoder");

// image: [in_channels, S, S] var; returns [C, S, S].
ad::Var encode(ad::Tape& t, const EncoderParams& p, ad::Var image);

}  // namespace halo
