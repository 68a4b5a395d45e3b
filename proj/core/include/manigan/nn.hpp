#pragma once

#include "manigan/tensor.hpp"

namespace manigan {

/// A convolution layer: square kernel, zero padding.
struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 0;
  int stride = 1;
  int padding = 0;
  Tensor weights;  // [out, in, k, k]
  Tensor bias;     // [out]

  /// Trainable layer with N(0, weight_scale) weights and zero bias.
  static ConvSpec create(int in_channels, int out_channels, int kernel_size,
                         int stride, int padding, Rng& rng,
                         float weight_scale = 0.02f);

  void validate() const;
};

/// 2-D convolution of [C_in,H,W] -> [C_out,H',W'],
/// H' = (H + 2p - k)/s + 1. Differentiable in input, weights and bias.
Tensor conv2d(const Tensor& input, const ConvSpec& spec);

/// Nearest-neighbour upsampling: each pixel becomes a 2x2 block.
Tensor upsample2x(const Tensor& input);

/// 2x2 average pooling with stride 2; H and W must be even.
Tensor avg_pool2x(const Tensor& input);

/// Per-channel standardization: (x - mean)/sqrt(var + eps). No affine
/// parameters; scale and shift come from adjacent convolutions.
Tensor instance_norm(const Tensor& input, float eps = 1e-5f);

/// Gated linear unit over the channel split: [2C,H,W] -> a * sigmoid(b).
Tensor glu(const Tensor& input);

}  // namespace manigan
