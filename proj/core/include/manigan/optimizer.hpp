#pragma once

#include <vector>

#include "manigan/tensor.hpp"

namespace manigan {

/// Adam over a fixed parameter list. Parameters with no accumulated
/// gradient are skipped for the step but still advance the bias correction.
class Adam {
 public:
  Adam(std::vector<Tensor> params, float lr, float beta1 = 0.5f,
       float beta2 = 0.999f, float eps = 1e-8f);

  void step();
  void zero_grad();
  float lr() const { return lr_; }
  void set_lr(float lr) { lr_ = lr; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_, v_;
  float lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace manigan
