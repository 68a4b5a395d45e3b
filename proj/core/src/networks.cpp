#include "manigan/networks.hpp"

#include <algorithm>

#include "manigan/errors.hpp"

namespace manigan {
namespace {

void push_conv(std::vector<Tensor>& out, const ConvSpec& spec) {
  if (!spec.weights.defined()) return;
  out.push_back(spec.weights);
  out.push_back(spec.bias);
}

void name_conv(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix, const ConvSpec& spec) {
  if (!spec.weights.defined()) return;
  out.emplace_back(prefix + ".w", spec.weights);
  out.emplace_back(prefix + ".b", spec.bias);
}

void push_attn(std::vector<Tensor>& out, const AttentionParams& p) {
  if (!p.word_proj.defined()) return;
  out.push_back(p.word_proj);
  out.push_back(p.spatial_proj);
  out.push_back(p.relevance);
}

void name_attn(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix, const AttentionParams& p) {
  if (!p.word_proj.defined()) return;
  out.emplace_back(prefix + ".word_proj", p.word_proj);
  out.emplace_back(prefix + ".spatial_proj", p.spatial_proj);
  out.emplace_back(prefix + ".relevance", p.relevance);
}

void push_acm(std::vector<Tensor>& out, const AcmParams& p) {
  if (!p.w1.weights.defined()) return;
  push_conv(out, p.w1);
  push_conv(out, p.w2);
  push_conv(out, p.b1);
  push_conv(out, p.b2);
}

void name_acm(std::vector<std::pair<std::string, Tensor>>& out,
              const std::string& prefix, const AcmParams& p) {
  if (!p.w1.weights.defined()) return;
  name_conv(out, prefix + ".w1", p.w1);
  name_conv(out, prefix + ".w2", p.w2);
  name_conv(out, prefix + ".b1", p.b1);
  name_conv(out, prefix + ".b2", p.b2);
}

Tensor upsample_n(Tensor x, int times) {
  for (int i = 0; i < times; ++i) x = upsample2x(x);
  return x;
}

}  // namespace

Tensor to_unit_range(const Tensor& image_pm1) {
  return offset(scale(image_pm1, 0.5f), 0.5f);
}

Tensor to_signed_range(const Tensor& image_01) {
  return offset(scale(image_01, 2.0f), -1.0f);
}

void ModelConfig::validate() const {
  if (d_text < 2 || d_text % 2 != 0) throw ConfigError("d_text must be even and >= 2");
  if (d_z < 1) throw ConfigError("d_z must be positive");
  if (c_r < 1 || c_s < 1 || acm_mid < 1) throw ConfigError("channel widths must be positive");
  if (vocab_size < 2) throw ConfigError("vocab_size must cover pad and unk tokens");
  for (int i = 0; i < 3; ++i) {
    if (stage_channels[i] < 1) throw ConfigError("stage channels must be positive");
    if (resolutions[i] < 8) throw ConfigError("stage resolutions must be at least 8");
    if (i > 0 && resolutions[i] != resolutions[i - 1] * 2)
      throw ConfigError("stage resolutions must double");
  }
  static const char* kAblations[] = {"none", "no-acm", "concat", "no-main", "no-dcm"};
  if (std::find_if(std::begin(kAblations), std::end(kAblations),
                   [&](const char* a) { return ablation == a; }) == std::end(kAblations))
    throw ConfigError("unknown ablation: " + ablation);
}

Tensor sample_noise(int d_z, Rng& rng) {
  return Tensor::randn({d_z}, rng, 1.0f, false);
}

UpBlock UpBlock::create(int channels, Rng& rng) {
  UpBlock b;
  b.conv = ConvSpec::create(channels, 2 * channels, 3, 1, 1, rng);
  return b;
}

Tensor UpBlock::forward(const Tensor& x) const {
  return glu(instance_norm(conv2d(upsample2x(x), conv)));
}

ResBlock ResBlock::create(int channels, Rng& rng) {
  ResBlock b;
  b.c1 = ConvSpec::create(channels, 2 * channels, 3, 1, 1, rng);
  b.c2 = ConvSpec::create(channels, channels, 3, 1, 1, rng);
  return b;
}

Tensor ResBlock::forward(const Tensor& x) const {
  Tensor y = glu(instance_norm(conv2d(x, c1)));
  y = instance_norm(conv2d(y, c2));
  return add(x, y);
}

Model Model::create(const ModelConfig& config, Rng& rng) {
  config.validate();
  Model m;
  m.config_ = config;
  const int c0 = config.stage_channels[0];

  int fc_in = config.d_text + config.d_z;
  if (config.ablation == "no-acm") fc_in += config.c_r;
  m.fc_w_ = Tensor::randn({2 * c0 * 4 * 4, fc_in}, rng, 0.02f, true);
  m.fc_b_ = Tensor::zeros({2 * c0 * 4 * 4}, true);
  m.fc_up_ = UpBlock::create(c0, rng);

  for (int i = 0; i < 3; ++i) {
    StageParams& st = m.stages_[i];
    const int ci = config.stage_channels[i];
    if (i > 0) {
      const int cp = config.stage_channels[i - 1];
      const int positions = (config.resolutions[i - 1]) * (config.resolutions[i - 1]);
      st.attn = AttentionParams::create(cp, positions, config.d_text, rng);
      st.fuse = ConvSpec::create(2 * cp, 2 * ci, 3, 1, 1, rng);
      st.res = ResBlock::create(ci, rng);
    }
    st.acm = AcmParams::create(config.c_r, ci, i, config.acm_mid, rng);
    if (config.ablation == "concat")
      st.concat_fuse = ConvSpec::create(ci + config.c_r, ci, 1, 1, 0, rng);
    st.post_up = UpBlock::create(ci, rng);
    st.to_rgb = ConvSpec::create(ci, 3, 3, 1, 1, rng);
  }

  const int ch = config.hidden_channels();
  const int half = config.resolutions[2] / 2;
  m.dcm_.attn = AttentionParams::create(ch, half * half, config.d_text, rng);
  m.dcm_.a_proj = ConvSpec::create(3 * ch, ch, 1, 1, 0, rng);
  m.dcm_.acm = AcmParams::create(config.c_s, ch, 0, config.acm_mid, rng);
  if (config.ablation == "concat")
    m.dcm_.concat_fuse = ConvSpec::create(ch + config.c_s, ch, 1, 1, 0, rng);
  m.dcm_.res1 = ResBlock::create(ch, rng);
  m.dcm_.res2 = ResBlock::create(ch, rng);
  m.dcm_.up = UpBlock::create(ch, rng);
  m.dcm_.to_rgb = ConvSpec::create(ch, 3, 3, 1, 1, rng);

  if (config.ablation == "no-main")
    m.image_to_hidden_ = ConvSpec::create(3, ch, 4, 2, 1, rng);

  for (int d = 0; d < 4; ++d) {
    DiscriminatorParams disc;
    disc.resolution = d == 3 ? config.resolutions[2] : config.resolutions[d];
    int spatial = disc.resolution;
    int in_ch = 3;
    int width = 16;
    while (spatial > 4) {
      disc.downs.push_back(ConvSpec::create(in_ch, width, 4, 2, 1, rng));
      in_ch = width;
      width = std::min(width * 2, 64);
      spatial /= 2;
    }
    disc.uncond_head = ConvSpec::create(in_ch, 1, 4, 1, 0, rng);
    disc.cond_fuse = ConvSpec::create(in_ch + config.d_text, in_ch, 3, 1, 1, rng);
    disc.cond_head = ConvSpec::create(in_ch, 1, 4, 1, 0, rng);
    m.discriminators_.push_back(std::move(disc));
  }
  return m;
}

Tensor Model::fuse(const Tensor& h, const Tensor& v, const AcmParams& acm,
                   const ConvSpec& concat_fuse, int upsamples) const {
  if (config_.ablation == "no-acm") return h;
  if (config_.ablation == "concat") {
    Tensor vu = upsample_n(v, upsamples);
    return conv2d(concat({h, vu}), concat_fuse);
  }
  return acm_forward(h, v, acm);
}

std::vector<StagePack> Model::main_forward(const Tensor& image01,
                                           const std::vector<int>& tokens,
                                           const Tensor& z,
                                           const Encoders& encoders) const {
  if (config_.ablation == "no-main")
    throw StateError("main module removed in this configuration");
  if (!encoders.pretrained())
    throw StateError("encoders must be pretrained before main_forward");
  if (z.ndim() != 1 || z.dim(0) != config_.d_z)
    throw DimensionError("noise vector must have length d_z");

  TextFeatures tf = encoders.encode_text(tokens);
  Tensor v = encoders.regional_encode(image01);

  Tensor seed;
  if (config_.ablation == "no-acm")
    seed = concat({tf.sentence_feature, z, spatial_mean(v)});
  else
    seed = concat({tf.sentence_feature, z});

  const int c0 = config_.stage_channels[0];
  Tensor x = linear(seed, fc_w_, fc_b_);
  x = glu(instance_norm(reshape(x, {2 * c0, 4, 4})));
  Tensor h = fc_up_.forward(x);

  std::vector<StagePack> packs;
  Tensor carry;  // post-upsample features feeding the next stage
  for (int i = 0; i < 3; ++i) {
    const StageParams& st = stages_[i];
    if (i > 0) {
      Tensor attended = spatial_attention(carry, tf, st.attn);
      Tensor fused = glu(instance_norm(conv2d(concat({carry, attended}), st.fuse)));
      h = st.res.forward(fused);
    }
    Tensor h_fused = fuse(h, v, st.acm, st.concat_fuse, i);
    carry = st.post_up.forward(h_fused);
    Tensor image = tanh(conv2d(carry, st.to_rgb));
    StagePack pack;
    pack.stage = i;
    pack.h = h;
    pack.h_fused = h_fused;
    pack.image = image;
    packs.push_back(std::move(pack));
  }
  return packs;
}

DcmPack Model::dcm_forward(const Tensor& h_last, const Tensor& image01,
                           const std::vector<int>& tokens,
                           const Encoders& encoders) const {
  if (config_.ablation == "no-dcm")
    throw StateError("detail correction module removed in this configuration");
  if (!encoders.pretrained())
    throw StateError("encoders must be pretrained before dcm_forward");
  const int ch = config_.hidden_channels();
  const int half = config_.resolutions[2] / 2;
  if (h_last.ndim() != 3 || h_last.dim(0) != ch || h_last.dim(1) != half ||
      h_last.dim(2) != half)
    throw DimensionError("h_last shape does not match the hidden layout");

  TextFeatures tf = encoders.encode_text(tokens);
  DcmPack pack;
  pack.h_last = h_last;
  pack.s = spatial_attention(h_last, tf, dcm_.attn);
  pack.c = channel_attention(h_last, tf, dcm_.attn);
  pack.a = concat({h_last, pack.s, pack.c});
  Tensor a_proj = conv2d(pack.a, dcm_.a_proj);

  Tensor shallow = encoders.shallow_encode(image01);
  while (shallow.dim(1) < half) shallow = upsample2x(shallow);
  pack.v_tilde = shallow;

  if (config_.ablation == "no-acm")
    pack.a_tilde = a_proj;
  else if (config_.ablation == "concat")
    pack.a_tilde = conv2d(concat({a_proj, pack.v_tilde}), dcm_.concat_fuse);
  else
    pack.a_tilde = acm_forward(a_proj, pack.v_tilde, dcm_.acm);

  Tensor x = dcm_.res2.forward(dcm_.res1.forward(pack.a_tilde));
  Tensor g = dcm_.up.forward(x);
  pack.image = tanh(conv2d(g, dcm_.to_rgb));
  return pack;
}

Tensor Model::hidden_from_image(const Tensor& image01) const {
  if (config_.ablation != "no-main")
    throw StateError("image-only hidden path requires the no-main configuration");
  return leaky_relu(conv2d(image01, image_to_hidden_));
}

std::pair<Tensor, Tensor> Model::discriminator_logits(int stage,
                                                      const Tensor& image_pm1,
                                                      const Tensor& sentence) const {
  if (stage < 0 || stage >= static_cast<int>(discriminators_.size()))
    throw ConfigError("discriminator stage out of range");
  const DiscriminatorParams& disc = discriminators_[stage];
  if (image_pm1.ndim() != 3 || image_pm1.dim(0) != 3 ||
      image_pm1.dim(1) != disc.resolution || image_pm1.dim(2) != disc.resolution)
    throw DimensionError("image resolution does not match this discriminator");
  if (sentence.ndim() != 1 || sentence.dim(0) != config_.d_text)
    throw DimensionError("sentence feature must have length d_text");

  Tensor x = image_pm1;
  for (const ConvSpec& down : disc.downs) x = leaky_relu(conv2d(x, down));
  Tensor uncond = reshape(conv2d(x, disc.uncond_head), {1});
  Tensor tiled = tile_spatial(sentence, x.dim(1), x.dim(2));
  Tensor y = leaky_relu(conv2d(concat({x, tiled}), disc.cond_fuse));
  Tensor cond = reshape(conv2d(y, disc.cond_head), {1});
  return {uncond, cond};
}

std::pair<Tensor, Tensor> Model::discriminator_score(int stage,
                                                     const Tensor& image_pm1,
                                                     const Tensor& sentence) const {
  auto [uncond, cond] = discriminator_logits(stage, image_pm1, sentence);
  return {sigmoid(uncond), sigmoid(cond)};
}

std::vector<Tensor> Model::generator_parameters() const {
  std::vector<Tensor> out;
  out.push_back(fc_w_);
  out.push_back(fc_b_);
  push_conv(out, fc_up_.conv);
  for (const StageParams& st : stages_) {
    push_attn(out, st.attn);
    push_conv(out, st.fuse);
    push_conv(out, st.res.c1);
    push_conv(out, st.res.c2);
    push_acm(out, st.acm);
    push_conv(out, st.concat_fuse);
    push_conv(out, st.post_up.conv);
    push_conv(out, st.to_rgb);
  }
  return out;
}

std::vector<Tensor> Model::dcm_generator_parameters() const {
  std::vector<Tensor> out;
  push_attn(out, dcm_.attn);
  push_conv(out, dcm_.a_proj);
  push_acm(out, dcm_.acm);
  push_conv(out, dcm_.concat_fuse);
  push_conv(out, dcm_.res1.c1);
  push_conv(out, dcm_.res1.c2);
  push_conv(out, dcm_.res2.c1);
  push_conv(out, dcm_.res2.c2);
  push_conv(out, dcm_.up.conv);
  push_conv(out, dcm_.to_rgb);
  push_conv(out, image_to_hidden_);
  return out;
}

std::vector<Tensor> Model::discriminator_parameters(int stage) const {
  if (stage < 0 || stage >= static_cast<int>(discriminators_.size()))
    throw ConfigError("discriminator stage out of range");
  const DiscriminatorParams& disc = discriminators_[stage];
  std::vector<Tensor> out;
  for (const ConvSpec& down : disc.downs) push_conv(out, down);
  push_conv(out, disc.uncond_head);
  push_conv(out, disc.cond_fuse);
  push_conv(out, disc.cond_head);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("gen/fc.w", fc_w_);
  out.emplace_back("gen/fc.b", fc_b_);
  name_conv(out, "gen/fc_up", fc_up_.conv);
  for (int i = 0; i < 3; ++i) {
    const StageParams& st = stages_[i];
    const std::string p = "gen/stage" + std::to_string(i);
    name_attn(out, p + "/attn", st.attn);
    name_conv(out, p + "/fuse", st.fuse);
    name_conv(out, p + "/res.c1", st.res.c1);
    name_conv(out, p + "/res.c2", st.res.c2);
    name_acm(out, p + "/acm", st.acm);
    name_conv(out, p + "/concat_fuse", st.concat_fuse);
    name_conv(out, p + "/up", st.post_up.conv);
    name_conv(out, p + "/to_rgb", st.to_rgb);
  }
  name_attn(out, "dcm/attn", dcm_.attn);
  name_conv(out, "dcm/a_proj", dcm_.a_proj);
  name_acm(out, "dcm/acm", dcm_.acm);
  name_conv(out, "dcm/concat_fuse", dcm_.concat_fuse);
  name_conv(out, "dcm/res1.c1", dcm_.res1.c1);
  name_conv(out, "dcm/res1.c2", dcm_.res1.c2);
  name_conv(out, "dcm/res2.c1", dcm_.res2.c1);
  name_conv(out, "dcm/res2.c2", dcm_.res2.c2);
  name_conv(out, "dcm/up", dcm_.up.conv);
  name_conv(out, "dcm/to_rgb", dcm_.to_rgb);
  name_conv(out, "dcm/image_to_hidden", image_to_hidden_);
  for (size_t d = 0; d < discriminators_.size(); ++d) {
    const DiscriminatorParams& disc = discriminators_[d];
    const std::string p = "disc" + std::to_string(d);
    for (size_t j = 0; j < disc.downs.size(); ++j)
      name_conv(out, p + "/down" + std::to_string(j), disc.downs[j]);
    name_conv(out, p + "/uncond_head", disc.uncond_head);
    name_conv(out, p + "/cond_fuse", disc.cond_fuse);
    name_conv(out, p + "/cond_head", disc.cond_head);
  }
  return out;
}

void Model::set_main_trainable(bool trainable) {
  for (Tensor& t : generator_parameters()) t.set_requires_grad(trainable);
}

void Model::set_dcm_trainable(bool trainable) {
  for (Tensor& t : dcm_generator_parameters()) t.set_requires_grad(trainable);
}

}  // namespace manigan
