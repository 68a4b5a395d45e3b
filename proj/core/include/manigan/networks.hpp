#pragma once

#include <string>
#include <utility>
#include <vector>

#include "manigan/acm.hpp"
#include "manigan/attention.hpp"
#include "manigan/image_encoders.hpp"

namespace manigan {

/// Generated images live in [-1,1]; losses, metrics and encoders work on
/// [0,1] images. These map between the two.
Tensor to_unit_range(const Tensor& image_pm1);
Tensor to_signed_range(const Tensor& image_01);

struct ModelConfig {
  int d_text = 32;
  int d_z = 16;
  int d_m = 32;
  int c_r = 64;
  int c_s = 32;
  int stage_channels[3] = {64, 32, 16};
  int resolutions[3] = {16, 32, 64};
  int acm_mid = 16;
  int vocab_size = 0;
  // none | no-acm | concat | no-main | no-dcm
  std::string ablation = "none";

  int hidden_channels() const { return stage_channels[2]; }
  void validate() const;
};

struct StagePack {
  int stage = 0;
  Tensor h;       // pre-fusion hidden, at half the stage resolution
  Tensor h_fused; // ACM output (or ablation substitute), same shape as h
  Tensor image;   // [3,R,R] in [-1,1]
};

struct DcmPack {
  Tensor h_last;
  Tensor s, c;     // spatial / channel attention features
  Tensor a;        // concat(h_last, s, c)
  Tensor v_tilde;  // shallow features at a's spatial size
  Tensor a_tilde;  // fused features entering the residual stack
  Tensor image;    // [3,64,64] in [-1,1]
};

Tensor sample_noise(int d_z, Rng& rng);

struct UpBlock {
  ConvSpec conv;  // C -> 2C, GLU halves back to C after the upsample
  static UpBlock create(int channels, Rng& rng);
  Tensor forward(const Tensor& x) const;
};

struct ResBlock {
  ConvSpec c1;  // C -> 2C
  ConvSpec c2;  // C -> C
  static ResBlock create(int channels, Rng& rng);
  Tensor forward(const Tensor& x) const;
};

struct StageParams {
  AttentionParams attn;   // stages 1-2
  ConvSpec fuse;          // stages 1-2: concat(prev, attn) -> 2*C_i
  ResBlock res;           // stages 1-2
  AcmParams acm;
  ConvSpec concat_fuse;   // "concat" ablation: 1x1 (C_i + c_r) -> C_i
  UpBlock post_up;
  ConvSpec to_rgb;
};

struct DcmParams {
  AttentionParams attn;
  ConvSpec a_proj;        // 1x1: 3C' -> C'
  AcmParams acm;          // v channels = c_s
  ConvSpec concat_fuse;   // "concat" ablation: 1x1 (C' + c_s) -> C'
  ResBlock res1, res2;
  UpBlock up;
  ConvSpec to_rgb;
};

struct DiscriminatorParams {
  std::vector<ConvSpec> downs;  // stride-2 stack to 4x4
  ConvSpec uncond_head;         // 4x4 valid conv -> 1 logit
  ConvSpec cond_fuse;           // 3x3 (C + d_text) -> C
  ConvSpec cond_head;
  int resolution = 0;
};

/// The full parameter set: 3-stage main module, DCM, and one discriminator
/// per generated resolution (index 3 is the DCM discriminator at 64).
class Model {
 public:
  Model() = default;
  static Model create(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }

  std::vector<StagePack> main_forward(const Tensor& image01,
                                      const std::vector<int>& tokens,
                                      const Tensor& z,
                                      const Encoders& encoders) const;
  DcmPack dcm_forward(const Tensor& h_last, const Tensor& image01,
                      const std::vector<int>& tokens,
                      const Encoders& encoders) const;
  /// "no-main" hidden features built from the image alone.
  Tensor hidden_from_image(const Tensor& image01) const;

  /// Raw logits (uncond, cond); stage 0..2 per main stage, 3 for the DCM.
  std::pair<Tensor, Tensor> discriminator_logits(int stage,
                                                 const Tensor& image_pm1,
                                                 const Tensor& sentence) const;
  /// Sigmoid scores in (0,1).
  std::pair<Tensor, Tensor> discriminator_score(int stage,
                                                const Tensor& image_pm1,
                                                const Tensor& sentence) const;

  std::vector<Tensor> generator_parameters() const;  // main module
  std::vector<Tensor> dcm_generator_parameters() const;
  std::vector<Tensor> discriminator_parameters(int stage) const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  void set_main_trainable(bool trainable);
  void set_dcm_trainable(bool trainable);

  // Exposed for parameter-surgery tests.
  StageParams& stage(int i) { return stages_[i]; }
  DcmParams& dcm() { return dcm_; }

 private:
  Tensor fuse(const Tensor& h, const Tensor& v, const AcmParams& acm,
              const ConvSpec& concat_fuse, int upsamples) const;

  ModelConfig config_;
  Tensor fc_w_, fc_b_;
  UpBlock fc_up_;  // 4x4 seed -> 8x8, the stage-0 hidden resolution
  StageParams stages_[3];
  DcmParams dcm_;
  ConvSpec image_to_hidden_;  // "no-main" ablation
  std::vector<DiscriminatorParams> discriminators_;
};

}  // namespace manigan
