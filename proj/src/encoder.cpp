#include "halo/encoder.hpp"

#include <cmath>

namespace halo {

namespace {
Tensor he_init(std::vector<int> dims, int fan_in, Rng& rng) {
  Tensor t(dims);
  const double std = std::sqrt(2.0 / fan_in);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
  return t;
}
}  // namespace

EncoderParams make_encoder(ad::ParamStore& ps, const EncoderConfig& cfg, Rng& rng,
                           const std::string& prefix) {
  require(cfg.channels >= 8, Err::InvalidParameter, "encoder: channels must be >= 8");
  require(cfg.depth >= 1, Err::InvalidParameter, "encoder: depth must be >= 1");
  EncoderParams p;
  p.cfg = cfg;
  int cin = cfg.in_channels;
  for (int i = 0; i < cfg.depth; ++i) {
    const int stride = (i == 1 || i == 2) ? 2 : 1;
    p.strides.push_back(stride);
    const std::string base = prefix + ".stage" + std::to_string(i);
    p.conv_w.push_back(ps.add(base + ".w", he_init({cfg.channels, cin, 3, 3}, cin * 9, rng)));
    p.conv_b.push_back(ps.add(base + ".b", Tensor({cfg.channels})));
    cin = cfg.channels;
  }
  return p;
}

ad::Var encode(ad::Tape& t, const EncoderParams& p, ad::Var image) {
  const Tensor& im = t.val(image);
  require(im.rank() == 3 && im.dim(0) == p.cfg.in_channels && im.dim(1) == p.cfg.working_size &&
              im.dim(2) == p.cfg.working_size,
          Err::ShapeMismatch, "encode: image must be [in_channels, S, S] at the working size");
  ad::Var x = image;
  for (size_t i = 0; i < p.conv_w.size(); ++i) {
    x = t.relu(t.conv2d(x, t.param(p.conv_w[i]), t.param(p.conv_b[i]), p.strides[i], 1));
  }
  const Tensor& xv = t.val(x);
  if (xv.dim(1) != p.cfg.working_size || xv.dim(2) != p.cfg.working_size)
    x = t.resize_bilinear(x, p.cfg.working_size, p.cfg.working_size);
  return x;
}

}  // namespace halo
