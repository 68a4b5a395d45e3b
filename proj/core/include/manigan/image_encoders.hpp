#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "manigan/nn.hpp"
#include "manigan/text_encoder.hpp"

namespace manigan {

class Dataset;
struct PretrainResult;

struct EncoderConfig {
  int d_text = 32;  // word/sentence feature width
  int d_m = 32;     // global matching feature width
  int c_r = 64;     // regional feature channels (8x8 spatial)
  int c_s = 32;     // shallow feature channels (32x32 spatial)
  int vocab_size = 0;
};

/// The frozen feature extractors of the pipeline: the recurrent text encoder,
/// a 4-block conv trunk for regional features, its 2-conv prefix for shallow
/// features, and global matching heads for both modalities.
class Encoders {
 public:
  Encoders() = default;
  static Encoders create(const EncoderConfig& config, Rng& rng);

  const EncoderConfig& config() const { return config_; }

  /// [3,64,64] in [0,1] -> [c_r,8,8].
  Tensor regional_encode(const Tensor& image) const;
  /// [3,64,64] in [0,1] -> [c_s,32,32].
  Tensor shallow_encode(const Tensor& image) const;

  TextFeatures encode_text(const std::vector<int>& token_ids) const;
  const TextEncoder& text_encoder() const { return text_; }

  /// Global matching vectors; require pretraining.
  Tensor match_encode_image(const Tensor& image) const;
  Tensor match_encode_text(const std::vector<int>& token_ids) const;

  /// Word projection into regional-feature space for the correspondence
  /// loss; fixed at initialization.
  const Tensor& corre_projection() const { return corre_proj_; }

  bool pretrained() const { return pretrained_; }
  void mark_pretrained() { pretrained_ = true; }

  /// Every trainable tensor, paired with a stable serialization name.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  void set_trainable(bool trainable);

 private:
  friend PretrainResult pretrain_matching(Encoders&, const Dataset&,
                                          const Vocabulary&, int, int, float,
                                          uint64_t);
  void require_pretrained(const char* op) const;
  Tensor trunk_to(const Tensor& image, int depth) const;
  Tensor match_image_raw(const Tensor& image) const;
  Tensor match_text_raw(const std::vector<int>& token_ids) const;

  EncoderConfig config_;
  ConvSpec conv1_, conv2_, conv3_, conv4_;
  Tensor match_image_w_, match_image_b_;  // [d_m, c_r], [d_m]
  Tensor match_text_w_, match_text_b_;    // [d_m, d_text], [d_m]
  Tensor corre_proj_;                     // [c_r, d_text], frozen
  TextEncoder text_;
  bool pretrained_ = false;
};

struct PretrainResult {
  std::vector<double> epoch_losses;
};

/// Jointly trains the text encoder, conv trunk and matching heads with the
/// symmetric batch-softmax matching loss on matched pairs. Marks the
/// encoders pretrained and freezes them.
PretrainResult pretrain_matching(Encoders& encoders, const Dataset& dataset,
                                 const Vocabulary& vocab, int epochs,
                                 int batch_size, float lr, uint64_t seed);

}  // namespace manigan
