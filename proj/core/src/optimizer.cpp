#include "manigan/optimizer.hpp"

#include <cmath>

namespace manigan {

Adam::Adam(std::vector<Tensor> params, float lr, float beta1, float beta2,
           float eps)
    : params_(std::move(params)),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  if (lr_ <= 0.0f) throw ConfigError("Adam: lr must be positive");
  if (beta1_ <= 0.0f || beta1_ >= 1.0f || beta2_ <= 0.0f || beta2_ >= 1.0f)
    throw ConfigError("Adam: betas must lie in (0,1)");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0f);
    v_.emplace_back(p.size(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  float c1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  float c2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    if (!p.has_grad()) continue;
    const auto& g = p.grad();
    auto& data = p.raw();
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < data.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0f - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0f - beta2_) * g[i] * g[i];
      float mhat = m[i] / c1;
      float vhat = v[i] / c2;
      data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace manigan
