#pragma once

#include <utility>
#include <vector>

#include "manigan/networks.hpp"

namespace manigan {

struct LossWeights {
  float lambda1 = 1.0f;  // regularization (pixel retention pressure)
  float lambda2 = 1.0f;  // matching loss
  float lambda3 = 1.0f;  // word-region correspondence
  float lambda4 = 1.0f;  // reconstruction
};

/// 1 - mean|I' - I| over [0,1] images; equals 1 exactly when I' == I.
Tensor l_reg(const Tensor& generated01, const Tensor& original01);

/// Symmetric batch-softmax matching loss over paired global features:
/// -(1/B) sum_i log p(text_i | image_i) - (1/B) sum_i log p(image_i | text_i)
/// with score(i,j) = gamma * cosine(image_i, text_j).
Tensor matching_loss_from_features(const std::vector<Tensor>& image_features,
                                   const std::vector<Tensor>& text_features,
                                   float gamma = 10.0f);

/// The checked wrapper over pretrained encoders; batch size must be >= 2.
Tensor damsm_loss(const std::vector<Tensor>& images01,
                  const std::vector<std::vector<int>>& token_lists,
                  const Encoders& encoders, float gamma = 10.0f);

/// Mean over words of cosine(attention-pooled regional feature for word j,
/// projected word j). Lies in [-1,1]; higher means words and regions agree.
Tensor corre_loss(const Tensor& image01, const std::vector<int>& tokens,
                  const Encoders& encoders);

/// Mean absolute pixel difference plus 0.1 * mean squared shallow-feature
/// difference.
Tensor rec_loss(const Tensor& generated01, const Tensor& original01,
                const Encoders& encoders);

/// -1/2 log D(I') - 1/2 log D(I', S) from the stage discriminator.
Tensor generator_adversarial(const Model& model, int stage,
                             const Tensor& image_pm1, const Tensor& sentence);

struct GeneratorSample {
  /// Produced images in generation order, each tagged with its
  /// discriminator stage; the last one is the sample's result.
  std::vector<std::pair<int, Tensor>> images_pm1;
  Tensor original01;
  std::vector<int> tokens;
};

struct GeneratorLossTerms {
  Tensor adversarial;  // mean over samples of the per-image sum
  Tensor damsm;
  Tensor corre;  // mean of (1 - correspondence)
  Tensor rec;
  Tensor reg;
  Tensor total;
};

/// Batch generator objective:
///   adversarial + lambda2*damsm + lambda3*(1-corre) + lambda4*rec
///   + lambda1*reg,
/// with the reconstruction term dropped when include_rec is false (the
/// detail-correction phase). Batches of one are rejected while the matching
/// term is active.
GeneratorLossTerms generator_loss(const Model& model,
                                  const std::vector<GeneratorSample>& batch,
                                  const Encoders& encoders,
                                  const LossWeights& weights,
                                  bool include_rec);

struct DiscriminatorSample {
  Tensor real_pm1;  // at the stage resolution
  Tensor fake_pm1;  // detached internally
  Tensor real01;    // full resolution, for the correspondence terms
  std::vector<int> tokens;
  std::vector<int> mismatched_tokens;
};

/// Batch discriminator objective for one stage:
///   -1/2[log D(I) + log(1-D(I'))] - 1/2[log D(I,S) + log(1-D(I',S))]
///   + lambda3*((1 - corre(I,S)) + corre(I,S'))
Tensor discriminator_loss(const Model& model, int stage,
                          const std::vector<DiscriminatorSample>& batch,
                          const Encoders& encoders, float lambda3);

}  // namespace manigan
