#pragma once

#include "manigan/nn.hpp"

namespace manigan {

/// Text-image affine combination: h' = h * W(v) + b(v). Each branch maps the
/// regional features v (optionally upsampled to h's spatial size) through
/// conv -> GLU -> conv onto h's exact shape.
struct AcmParams {
  ConvSpec w1, w2;  // multiplicative branch
  ConvSpec b1, b2;  // additive branch
  int upsamples = 0;

  /// Branches from v [v_channels, s, s] to h [h_channels, s*2^upsamples, ...].
  static AcmParams create(int v_channels, int h_channels, int upsamples,
                          int mid_channels, Rng& rng);
};

struct AcmMaps {
  Tensor w;   // W(v)
  Tensor hw;  // h * W(v)
  Tensor b;   // b(v)
};

Tensor acm_forward(const Tensor& h, const Tensor& v, const AcmParams& params);
AcmMaps acm_inspect(const Tensor& h, const Tensor& v, const AcmParams& params);

}  // namespace manigan
