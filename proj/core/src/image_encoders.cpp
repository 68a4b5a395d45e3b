#include "manigan/image_encoders.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "manigan/dataset.hpp"
#include "manigan/errors.hpp"
#include "manigan/objectives.hpp"
#include "manigan/optimizer.hpp"

namespace manigan {
namespace {

void check_image(const Tensor& image) {
  if (image.ndim() != 3 || image.dim(0) != 3 ||
      image.dim(1) != kImageResolution || image.dim(2) != kImageResolution)
    throw DimensionError("encoders expect a [3,64,64] image");
}

}  // namespace

Encoders Encoders::create(const EncoderConfig& config, Rng& rng) {
  if (config.d_text < 2 || config.d_text % 2 != 0)
    throw ConfigError("d_text must be even and >= 2");
  if (config.d_m < 1) throw ConfigError("d_m must be positive");
  if (config.c_s < 2 || config.c_s % 2 != 0)
    throw ConfigError("c_s must be even and >= 2");
  if (config.c_r < 1) throw ConfigError("c_r must be positive");

  Encoders e;
  e.config_ = config;
  // He-scaled weights: the unnormalized four-conv trunk would otherwise
  // shrink activations by orders of magnitude, leaving the matching heads
  // with degenerate, near-collinear features.
  auto he = [](int in, int k) {
    return std::sqrt(2.0f / (static_cast<float>(in) * k * k));
  };
  e.conv1_ = ConvSpec::create(3, config.c_s / 2, 4, 2, 1, rng, he(3, 4));
  e.conv2_ = ConvSpec::create(config.c_s / 2, config.c_s, 3, 1, 1, rng,
                              he(config.c_s / 2, 3));
  e.conv3_ = ConvSpec::create(config.c_s, config.c_r, 4, 2, 1, rng,
                              he(config.c_s, 4));
  e.conv4_ = ConvSpec::create(config.c_r, config.c_r, 4, 2, 1, rng,
                              he(config.c_r, 4));
  // 1/sqrt(fan-in) matching heads keep the matched features at order one,
  // where the cosine gradients are well conditioned.
  e.match_image_w_ = Tensor::randn(
      {config.d_m, config.c_r}, rng,
      1.0f / std::sqrt(static_cast<float>(config.c_r)), true);
  e.match_image_b_ = Tensor::zeros({config.d_m}, true);
  e.match_text_w_ = Tensor::randn(
      {config.d_m, config.d_text}, rng,
      1.0f / std::sqrt(static_cast<float>(config.d_text)), true);
  e.match_text_b_ = Tensor::zeros({config.d_m}, true);
  e.corre_proj_ = Tensor::randn({config.c_r, config.d_text}, rng, 0.02f, false);
  e.text_ = TextEncoder::create(config.vocab_size, config.d_text, rng);
  return e;
}

Tensor Encoders::trunk_to(const Tensor& image, int depth) const {
  check_image(image);
  Tensor x = leaky_relu(conv2d(image, conv1_));
  if (depth >= 2) x = leaky_relu(conv2d(x, conv2_));
  if (depth >= 3) x = leaky_relu(conv2d(x, conv3_));
  if (depth >= 4) x = leaky_relu(conv2d(x, conv4_));
  return x;
}

Tensor Encoders::regional_encode(const Tensor& image) const {
  return trunk_to(image, 4);
}

Tensor Encoders::shallow_encode(const Tensor& image) const {
  return trunk_to(image, 2);
}

TextFeatures Encoders::encode_text(const std::vector<int>& token_ids) const {
  return text_.encode(token_ids);
}

Tensor Encoders::match_image_raw(const Tensor& image) const {
  return linear(spatial_mean(trunk_to(image, 4)), match_image_w_,
                match_image_b_);
}

Tensor Encoders::match_text_raw(const std::vector<int>& token_ids) const {
  return linear(text_.encode(token_ids).sentence_feature, match_text_w_,
                match_text_b_);
}

void Encoders::require_pretrained(const char* op) const {
  if (!pretrained_)
    throw StateError(std::string(op) + " requires pretrained encoders");
}

Tensor Encoders::match_encode_image(const Tensor& image) const {
  require_pretrained("match_encode_image");
  return match_image_raw(image);
}

Tensor Encoders::match_encode_text(const std::vector<int>& token_ids) const {
  require_pretrained("match_encode_text");
  return match_text_raw(token_ids);
}

std::vector<std::pair<std::string, Tensor>> Encoders::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto push_conv = [&out](const std::string& name, const ConvSpec& spec) {
    out.emplace_back(name + ".w", spec.weights);
    out.emplace_back(name + ".b", spec.bias);
  };
  push_conv("conv1", conv1_);
  push_conv("conv2", conv2_);
  push_conv("conv3", conv3_);
  push_conv("conv4", conv4_);
  out.emplace_back("match_image.w", match_image_w_);
  out.emplace_back("match_image.b", match_image_b_);
  out.emplace_back("match_text.w", match_text_w_);
  out.emplace_back("match_text.b", match_text_b_);
  out.emplace_back("corre_proj", corre_proj_);
  std::vector<Tensor> text_params = text_.parameters();
  std::vector<std::string> text_names = text_.parameter_names();
  for (size_t i = 0; i < text_params.size(); ++i)
    out.emplace_back("text/" + text_names[i], text_params[i]);
  return out;
}

void Encoders::set_trainable(bool trainable) {
  for (auto& [name, tensor] : named_parameters()) {
    if (name == "corre_proj") continue;
    tensor.set_requires_grad(trainable);
  }
}

PretrainResult pretrain_matching(Encoders& encoders, const Dataset& dataset,
                                 const Vocabulary& vocab, int epochs,
                                 int batch_size, float lr, uint64_t seed) {
  if (batch_size < 2)
    throw ConfigError("pretraining needs a batch size of at least 2");
  if (epochs < 1) throw ConfigError("pretraining needs at least one epoch");

  std::vector<int> indices = dataset.split("train");
  if (indices.empty()) {
    indices.resize(dataset.size());
    for (int i = 0; i < dataset.size(); ++i) indices[i] = i;
  }
  if (static_cast<int>(indices.size()) < 2)
    throw ConfigError("pretraining needs at least two samples");

  encoders.set_trainable(true);
  std::vector<Tensor> params;
  for (auto& [name, tensor] : encoders.named_parameters()) {
    if (name == "corre_proj") continue;
    params.push_back(tensor);
  }
  Adam opt(params, lr);
  Rng rng(seed);

  // Loss over the train split in its original order, so per-epoch numbers
  // compare the same batch compositions rather than each epoch's shuffle.
  std::vector<int> fixed = indices;
  auto train_loss = [&]() {
    double total = 0.0;
    int batches = 0;
    for (size_t start = 0; start + 2 <= fixed.size(); start += batch_size) {
      size_t stop = std::min(start + batch_size, fixed.size());
      std::vector<Tensor> image_features, text_features;
      for (size_t k = start; k < stop; ++k) {
        const CaptionedSample& sample = dataset.get(fixed[k]);
        image_features.push_back(encoders.match_image_raw(sample.image));
        text_features.push_back(
            encoders.match_text_raw(vocab.encode(sample.tokens)));
      }
      total +=
          matching_loss_from_features(image_features, text_features).item();
      ++batches;
    }
    return total / std::max(batches, 1);
  };

  PretrainResult result;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    // Ramp the step size over the first five epochs; full-rate Adam tends to
    // overshoot this shallow objective while the towers are still aligning.
    opt.set_lr(lr * std::min(1.0f, static_cast<float>(epoch + 1) / 5.0f));
    for (size_t i = indices.size(); i > 1; --i)
      std::swap(indices[i - 1], indices[rng.uniform_index(i)]);
    for (size_t start = 0; start + 2 <= indices.size(); start += batch_size) {
      size_t stop = std::min(start + batch_size, indices.size());
      std::vector<Tensor> image_features, text_features;
      for (size_t k = start; k < stop; ++k) {
        const CaptionedSample& sample = dataset.get(indices[k]);
        image_features.push_back(encoders.match_image_raw(sample.image));
        text_features.push_back(
            encoders.match_text_raw(vocab.encode(sample.tokens)));
      }
      Tensor loss = matching_loss_from_features(image_features, text_features);
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
    result.epoch_losses.push_back(train_loss());
  }

  encoders.set_trainable(false);
  encoders.mark_pretrained();
  return result;
}

}  // namespace manigan
