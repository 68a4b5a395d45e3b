#include "manigan/acm.hpp"

namespace manigan {

AcmParams AcmParams::create(int v_channels, int h_channels, int upsamples,
                            int mid_channels, Rng& rng) {
  if (upsamples < 0) throw ConfigError("acm upsample count must be >= 0");
  AcmParams p;
  p.upsamples = upsamples;
  p.w1 = ConvSpec::create(v_channels, 2 * mid_channels, 3, 1, 1, rng);
  p.w2 = ConvSpec::create(mid_channels, h_channels, 3, 1, 1, rng);
  p.b1 = ConvSpec::create(v_channels, 2 * mid_channels, 3, 1, 1, rng);
  p.b2 = ConvSpec::create(mid_channels, h_channels, 3, 1, 1, rng);
  return p;
}

static Tensor branch(const Tensor& v, const ConvSpec& c1, const ConvSpec& c2,
                     int upsamples) {
  Tensor x = v;
  for (int i = 0; i < upsamples; ++i) x = upsample2x(x);
  return conv2d(glu(conv2d(x, c1)), c2);
}

AcmMaps acm_inspect(const Tensor& h, const Tensor& v, const AcmParams& params) {
  AcmMaps maps;
  maps.w = branch(v, params.w1, params.w2, params.upsamples);
  maps.b = branch(v, params.b1, params.b2, params.upsamples);
  if (maps.w.shape() != h.shape() || maps.b.shape() != h.shape())
    throw DimensionError("acm branch output " + shape_str(maps.w.shape()) +
                         " does not match h " + shape_str(h.shape()));
  maps.hw = mul(h, maps.w);
  return maps;
}

Tensor acm_forward(const Tensor& h, const Tensor& v, const AcmParams& params) {
  AcmMaps maps = acm_inspect(h, v, params);
  return add(maps.hw, maps.b);
}

}  // namespace manigan
