#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "manigan/dataset.hpp"
#include "manigan/networks.hpp"

using namespace manigan;
namespace fs = std::filesystem;

namespace {

std::string corpus_dir() {
  fs::path p = fs::temp_directory_path() / "manigan_net_corpus";
  if (!fs::exists(p / "manifest.txt")) {
    fs::create_directories(p);
    make_dataset(p.string(), 12, 4, 1, 91);
  }
  return p.string();
}

ModelConfig small_config(int vocab_size, const std::string& ablation = "none") {
  ModelConfig c;
  c.d_text = 8;
  c.d_z = 4;
  c.d_m = 16;
  c.c_r = 16;
  c.c_s = 8;
  c.stage_channels[0] = 16;
  c.stage_channels[1] = 8;
  c.stage_channels[2] = 8;
  c.acm_mid = 4;
  c.vocab_size = vocab_size;
  c.ablation = ablation;
  return c;
}

Encoders encoders_for(const ModelConfig& mc, uint64_t seed) {
  EncoderConfig ec;
  ec.d_text = mc.d_text;
  ec.d_m = mc.d_m;
  ec.c_r = mc.c_r;
  ec.c_s = mc.c_s;
  ec.vocab_size = mc.vocab_size;
  Rng rng(seed);
  Encoders enc = Encoders::create(ec, rng);
  enc.mark_pretrained();
  return enc;
}

void zero_conv(ConvSpec& spec) {
  std::fill(spec.weights.raw().begin(), spec.weights.raw().end(), 0.0f);
  std::fill(spec.bias.raw().begin(), spec.bias.raw().end(), 0.0f);
}

void force_constant(ConvSpec& spec, float c) {
  std::fill(spec.weights.raw().begin(), spec.weights.raw().end(), 0.0f);
  std::fill(spec.bias.raw().begin(), spec.bias.raw().end(), c);
}

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.size(); ++i)
    if (a.at(i) != b.at(i)) return false;
  return true;
}

bool differs(const Tensor& a, const Tensor& b) { return !same_values(a, b); }

}  // namespace

TEST_CASE("stage packs carry the advertised shapes") {
  Dataset data = Dataset::load(corpus_dir());
  Vocabulary vocab = Vocabulary::build(data.captions());
  ModelConfig mc = small_config(vocab.size());
  Encoders enc = encoders_for(mc, 5);
  Rng rng(7);
  Model model = Model::create(mc, rng);

  const CaptionedSample& s = data.get(0);
  std::vector<int> toks = vocab.encode(s.tokens);
  Tensor z = sample_noise(mc.d_z, rng);
  std::vector<StagePack> packs = model.main_forward(s.image, toks, z, enc);

  REQUIRE(packs.size() == 3);
  for (int i = 0; i < 3; ++i) {
    const StagePack& p = packs[i];
    CHECK(p.stage == i);
    int r = mc.resolutions[i];
    CHECK(p.image.shape() == Shape{3, r, r});
    CHECK(p.h.shape() == Shape{mc.stage_channels[i], r / 2, r / 2});
    CHECK(p.h_fused.shape() == p.h.shape());
    CHECK(p.image.all_finite());
  }
}

TEST_CASE("the dcm pack matches the hidden layout") {
  Dataset data = Dataset::load(corpus_dir());
  Vocabulary vocab = Vocabulary::build(data.captions());
  ModelConfig mc = small_config(vocab.size());
  Encoders enc = encoders_for(mc, 11);
  Rng rng(13);
  Model model = Model::create(mc, rng);

  const CaptionedSample& s = data.get(1);
  std::vector<int> toks = vocab.encode(s.tokens);
  Tensor z = sample_noise(mc.d_z, rng);
  std::vector<StagePack> packs = model.main_forward(s.image, toks, z, enc);
  DcmPack d = model.dcm_forward(packs[2].h_fused, s.image, toks, enc);

  int ch = mc.hidden_channels();
  Shape hidden{ch, 32, 32};
  CHECK(d.h_last.shape() == hidden);
  CHECK(d.s.shape() == hidden);
  CHECK(d.c.shape() == hidden);
  CHECK(d.a.shape() == Shape{3 * ch, 32, 32});
  CHECK(d.v_tilde.shape() == Shape{mc.c_s, 32, 32});
  CHECK(d.a_tilde.shape() == hidden);
  CHECK(d.image.shape() == Shape{3, 64, 64});
  CHECK(d.image.all_finite());

  Tensor bad = Tensor::randn({ch, 16, 16}, rng);
  CHECK_THROWS_AS(model.dcm_forward(bad, s.image, toks, enc), DimensionError);
}

TEST_CASE("forwards are deterministic for fixed inputs") {
  Dataset data = Dataset::load(corpus_dir());
  Vocabulary vocab = Vocabulary::build(data.captions());
  ModelConfig mc = small_config(vocab.size());
  Encoders enc = encoders_for(mc, 17);
  Rng rng(19);
  Model model = Model::create(mc, rng);

  const CaptionedSample& s = data.get(2);
  std::vector<int> toks = vocab.encode(s.tokens);
  Tensor z = sample_noise(mc.d_z, rng);

  std::vector<StagePack> a = model.main_forward(s.image, toks, z, enc);
  std::vector<StagePack> b = model.main_forward(s.image, toks, z, enc);
  for (int i = 0; i < 3; ++i) CHECK(same_values(a[i].image, b[i].image));

  DcmPack da = model.dcm_forward(a[2].h_fused, s.image, toks, enc);
  DcmPack db = model.dcm_forward(b[2].h_fused, s.image, toks, enc);
  CHECK(same_values(da.image, db.image));
}

TEST_CASE("generated images stay finite and inside the signed range") {
  Dataset data = Dataset::load(corpus_dir());
  Vocabulary vocab = Vocabulary::build(data.captions());
  ModelConfig mc = small_config(vocab.size());
  Encoders enc = encoders_for(mc, 23);
  Rng rng(29);
  Model model = Model::create(mc, rng);

  auto in_range = [](const Tensor& img) {
    for (int64_t i = 0; i < img.size(); ++i) {
      float v = img.at(i);
      if (!std::isfinite(v) || v < -1.0f || v > 1.0f) return false;
    }
    return true;
  };

  // 500 main passes and 500 detail passes over rotating samples and noise.
  bool ok = true;
  for (int it = 0; it < 500 && ok; ++it) {
    const CaptionedSample& s = data.get(it % data.size());
    std::vector<int> toks = vocab.encode(s.tokens);
    Tensor z = sample_noise(mc.d_z, rng);
    std::vector<StagePack> packs = model.main_forward(s.image, toks, z, enc);
    for (const StagePack& p : packs) ok = ok && in_range(p.image);
    DcmPack d = model.dcm_forward(packs[2].h_fused, s.image, toks, enc);
    ok = ok && in_range(d.image);
  }
  CHECK(ok);
}

TEST_CASE("identity-configured acm passes hidden features through") {
  Dataset data = Dataset::load(corpus_dir());
  Vocabulary vocab = Vocabulary::build(data.captions());
  ModelConfig mc = small_config(vocab.size());
  Encoders enc = encoders_for(mc, 31);

  const CaptionedSample& s = data.get(3);
  std::vector<int> toks = vocab.encode(s.tokens);

  Rng rng_a(37);
  Model baseline = Model::create(mc, rng_a);
  Rng rng_z(41);
  Tensor z = sample_noise(mc.d_z, rng_z);
  std::vector<StagePack> base = baseline.main_forward(s.image, toks, z, enc);

  Rng rng_b(37);
  Model pinned = Model::create(mc, rng_b);
  for (int i = 0; i < 3; ++i) {
    force_constant(pinned.stage(i).acm.w2, 1.0f);
    force_constant(pinned.stage(i).acm.b2, 0.0f);
  }
  std::vector<StagePack> packs = pinned.main_forward(s.image, toks, z, enc);
  for (int i = 0; i < 3; ++i) CHECK(same_values(packs[i].h_fused, packs[i].h));

  // The identity substitution must actually move the generated images.
  CHECK(differs(packs[0].image, base[0].image));
  CHECK(differs(packs[2].image, base[2].image));
}

TEST_CASE("zeroing the additive acm branch changes every output") {
  Dataset data = Dataset::load(corpus_dir());
  Vocabulary vocab = Vocabulary::build(data.captions());
  ModelConfig mc = small_config(vocab.size());
  Encoders enc = encoders_for(mc, 43);

  const CaptionedSample& s = data.get(4);
  std::vector<int> toks = vocab.encode(s.tokens);
  Rng rng_z(47);
  Tensor z = sample_noise(mc.d_z, rng_z);

  Rng rng_a(53);
  Model baseline = Model::create(mc, rng_a);
  std::vector<StagePack> base = baseline.main_forward(s.image, toks, z, enc);
  DcmPack base_d = baseline.dcm_forward(base[2].h_fused, s.image, toks, enc);

  for (int i = 0; i < 3; ++i) {
    Rng rng_b(53);
    Model cut = Model::create(mc, rng_b);
    zero_conv(cut.stage(i).acm.b2);
    std::vector<StagePack> packs = cut.main_forward(s.image, toks, z, enc);
    CHECK(differs(packs[i].image, base[i].image));
  }

  Rng rng_c(53);
  Model cut = Model::create(mc, rng_c);
  zero_conv(cut.dcm().acm.b2);
  std::vector<StagePack> packs = cut.main_forward(s.image, toks, z, enc);
  DcmPack d = cut.dcm_forward(packs[2].h_fused, s.image, toks, enc);
  CHECK(same_values(packs[2].image, base[2].image));
  CHECK(differs(d.image, base_d.image));
}

TEST_CASE("residual and upsampling blocks behave as documented") {
  Rng rng(59);

  ResBlock res = ResBlock::create(6, rng);
  Tensor x = Tensor::randn({6, 5, 5}, rng);
  Tensor y = res.forward(x);
  CHECK(y.shape() == x.shape());
  CHECK(y.all_finite());

  zero_conv(res.c1);
  zero_conv(res.c2);
  Tensor ident = res.forward(x);
  CHECK(same_values(ident, x));

  UpBlock up = UpBlock::create(6, rng);
  Tensor u = up.forward(x);
  CHECK(u.shape() == Shape{6, 10, 10});
  CHECK(u.all_finite());
}

TEST_CASE("discriminator scores live in the open unit interval") {
  Dataset data = Dataset::load(corpus_dir());
  Vocabulary vocab = Vocabulary::build(data.captions());
  ModelConfig mc = small_config(vocab.size());
  Encoders enc = encoders_for(mc, 61);
  Rng rng(67);
  Model model = Model::create(mc, rng);

  const CaptionedSample& s = data.get(5);
  Tensor sentence = enc.encode_text(vocab.encode(s.tokens)).sentence_feature;
  Tensor other = enc.encode_text(vocab.encode(data.get(6).tokens)).sentence_feature;

  for (int stage = 0; stage < 4; ++stage) {
    int r = stage < 3 ? mc.resolutions[stage] : 64;
    Tensor image = tanh(Tensor::randn({3, r, r}, rng));

    auto [u, c] = model.discriminator_score(stage, image, sentence);
    REQUIRE(u.shape() == Shape{1});
    REQUIRE(c.shape() == Shape{1});
    CHECK(u.at(0) > 0.0f);
    CHECK(u.at(0) < 1.0f);
    CHECK(c.at(0) > 0.0f);
    CHECK(c.at(0) < 1.0f);

    auto [lu, lc] = model.discriminator_logits(stage, image, sentence);
    CHECK(u.at(0) ==
          doctest::Approx(1.0 / (1.0 + std::exp(-lu.at(0)))).epsilon(1e-6));
    CHECK(c.at(0) ==
          doctest::Approx(1.0 / (1.0 + std::exp(-lc.at(0)))).epsilon(1e-6));

    // A different caption moves only the conditional head.
    auto [lu2, lc2] = model.discriminator_logits(stage, image, other);
    CHECK(lu2.at(0) == lu.at(0));
    CHECK(lc2.at(0) != lc.at(0));
  }

  Tensor wrong = tanh(Tensor::randn({3, 16, 16}, rng));
  CHECK_THROWS_AS(model.discriminator_logits(1, wrong, sentence),
                  DimensionError);
  Tensor image64 = tanh(Tensor::randn({3, 64, 64}, rng));
  Tensor bad_sentence = Tensor::randn({mc.d_text + 1}, rng);
  CHECK_THROWS_AS(model.discriminator_logits(3, image64, bad_sentence),
                  DimensionError);
  CHECK_THROWS_AS(model.discriminator_logits(4, image64, sentence),
                  ConfigError);
  CHECK_THROWS_AS(model.discriminator_logits(-1, image64, sentence),
                  ConfigError);
}

TEST_CASE("discriminator gradients flow back to the image") {
  Dataset data = Dataset::load(corpus_dir());
  Vocabulary vocab = Vocabulary::build(data.captions());
  ModelConfig mc = small_config(vocab.size());
  Encoders enc = encoders_for(mc, 71);
  Rng rng(73);
  Model model = Model::create(mc, rng);

  Tensor sentence =
      enc.encode_text(vocab.encode(data.get(7).tokens)).sentence_feature;
  Tensor image = tanh(Tensor::randn({3, 16, 16}, rng));

  double err = grad_check(
      [&](const Tensor& img) {
        auto [u, c] = model.discriminator_logits(0, img, sentence);
        return neg(add(sum(log_sigmoid(u)), sum(log_sigmoid(c))));
      },
      image, 1e-3);
  CHECK(err < 1e-3);
}

TEST_CASE("ablation switches alter exactly the advertised paths") {
  Dataset data = Dataset::load(corpus_dir());
  Vocabulary vocab = Vocabulary::build(data.captions());
  const CaptionedSample& s = data.get(8);
  std::vector<std::string> caption = s.tokens;

  SUBCASE("no-acm passes hidden features straight through") {
    ModelConfig mc = small_config(vocab.size(), "no-acm");
    Encoders enc = encoders_for(mc, 79);
    Rng rng(83);
    Model model = Model::create(mc, rng);
    std::vector<int> toks = vocab.encode(caption);
    Tensor z = sample_noise(mc.d_z, rng);
    std::vector<StagePack> packs = model.main_forward(s.image, toks, z, enc);
    for (const StagePack& p : packs) CHECK(same_values(p.h_fused, p.h));

    DcmPack d = model.dcm_forward(packs[2].h_fused, s.image, toks, enc);
    Tensor projected = conv2d(d.a, model.dcm().a_proj);
    CHECK(same_values(d.a_tilde, projected));
  }

  SUBCASE("concat fuses through a learned projection instead") {
    ModelConfig mc = small_config(vocab.size(), "concat");
    Encoders enc = encoders_for(mc, 89);
    Rng rng(97);
    Model model = Model::create(mc, rng);
    std::vector<int> toks = vocab.encode(caption);
    Tensor z = sample_noise(mc.d_z, rng);
    std::vector<StagePack> packs = model.main_forward(s.image, toks, z, enc);
    for (const StagePack& p : packs) {
      CHECK(p.h_fused.shape() == p.h.shape());
      CHECK(differs(p.h_fused, p.h));
    }
    DcmPack d = model.dcm_forward(packs[2].h_fused, s.image, toks, enc);
    CHECK(d.image.shape() == Shape{3, 64, 64});
  }

  SUBCASE("no-main replaces the generator trunk with an image head") {
    ModelConfig mc = small_config(vocab.size(), "no-main");
    Encoders enc = encoders_for(mc, 101);
    Rng rng(103);
    Model model = Model::create(mc, rng);
    std::vector<int> toks = vocab.encode(caption);
    Tensor z = sample_noise(mc.d_z, rng);
    CHECK_THROWS_AS(model.main_forward(s.image, toks, z, enc), StateError);

    Tensor hidden = model.hidden_from_image(s.image);
    CHECK(hidden.shape() == Shape{mc.hidden_channels(), 32, 32});
    DcmPack d = model.dcm_forward(hidden, s.image, toks, enc);
    CHECK(d.image.shape() == Shape{3, 64, 64});
    CHECK(d.image.all_finite());
  }

  SUBCASE("no-dcm removes only the detail module") {
    ModelConfig mc = small_config(vocab.size(), "no-dcm");
    Encoders enc = encoders_for(mc, 107);
    Rng rng(109);
    Model model = Model::create(mc, rng);
    std::vector<int> toks = vocab.encode(caption);
    Tensor z = sample_noise(mc.d_z, rng);
    std::vector<StagePack> packs = model.main_forward(s.image, toks, z, enc);
    CHECK(packs.size() == 3);
    CHECK_THROWS_AS(model.dcm_forward(packs[2].h_fused, s.image, toks, enc),
                    StateError);
  }

  SUBCASE("the image-only hidden path is exclusive to no-main") {
    ModelConfig mc = small_config(vocab.size());
    Encoders enc = encoders_for(mc, 113);
    Rng rng(127);
    Model model = Model::create(mc, rng);
    CHECK_THROWS_AS(model.hidden_from_image(s.image), StateError);
  }
}

TEST_CASE("configuration validation rejects malformed setups") {
  ModelConfig ok = small_config(21);
  CHECK_NOTHROW(ok.validate());

  ModelConfig bad = ok;
  bad.ablation = "without-acm";
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = ok;
  bad.resolutions[2] = 63;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = ok;
  bad.resolutions[0] = 4;
  bad.resolutions[1] = 8;
  bad.resolutions[2] = 16;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = ok;
  bad.d_text = 7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = ok;
  bad.d_z = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = ok;
  bad.vocab_size = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = ok;
  bad.stage_channels[1] = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("unpretrained encoders and malformed noise are rejected") {
  Dataset data = Dataset::load(corpus_dir());
  Vocabulary vocab = Vocabulary::build(data.captions());
  ModelConfig mc = small_config(vocab.size());
  Rng rng(131);
  Model model = Model::create(mc, rng);

  EncoderConfig ec;
  ec.d_text = mc.d_text;
  ec.d_m = mc.d_m;
  ec.c_r = mc.c_r;
  ec.c_s = mc.c_s;
  ec.vocab_size = mc.vocab_size;
  Rng enc_rng(137);
  Encoders raw = Encoders::create(ec, enc_rng);

  const CaptionedSample& s = data.get(9);
  std::vector<int> toks = vocab.encode(s.tokens);
  Tensor z = sample_noise(mc.d_z, rng);
  CHECK_THROWS_AS(model.main_forward(s.image, toks, z, raw), StateError);

  Encoders enc = encoders_for(mc, 137);
  Tensor bad_z = Tensor::randn({mc.d_z + 1}, rng);
  CHECK_THROWS_AS(model.main_forward(s.image, toks, bad_z, enc),
                  DimensionError);

  std::vector<StagePack> packs = model.main_forward(s.image, toks, z, enc);
  CHECK_THROWS_AS(model.dcm_forward(packs[2].h_fused, s.image, toks, raw),
                  StateError);
}

TEST_CASE("parameter groups are disjoint and trainability toggles work") {
  Dataset data = Dataset::load(corpus_dir());
  Vocabulary vocab = Vocabulary::build(data.captions());
  ModelConfig mc = small_config(vocab.size());
  Rng rng(139);
  Model model = Model::create(mc, rng);

  auto keys = [](std::vector<Tensor> ts) {
    std::set<const float*> out;
    for (Tensor& t : ts) out.insert(t.raw().data());
    return out;
  };

  std::vector<Tensor> gen = model.generator_parameters();
  std::vector<Tensor> dcm = model.dcm_generator_parameters();
  REQUIRE(!gen.empty());
  REQUIRE(!dcm.empty());
  std::set<const float*> gen_keys = keys(gen);
  std::set<const float*> dcm_keys = keys(dcm);
  CHECK(gen_keys.size() == gen.size());
  CHECK(dcm_keys.size() == dcm.size());
  for (const float* k : dcm_keys) CHECK(gen_keys.count(k) == 0);

  std::set<const float*> disc_all;
  size_t disc_total = 0;
  for (int stage = 0; stage < 4; ++stage) {
    std::vector<Tensor> d = model.discriminator_parameters(stage);
    REQUIRE(!d.empty());
    disc_total += d.size();
    for (Tensor& t : d) disc_all.insert(t.raw().data());
  }
  CHECK(disc_all.size() == disc_total);
  for (const float* k : disc_all) {
    CHECK(gen_keys.count(k) == 0);
    CHECK(dcm_keys.count(k) == 0);
  }
  CHECK_THROWS_AS(model.discriminator_parameters(4), ConfigError);

  std::vector<std::pair<std::string, Tensor>> named = model.named_parameters();
  std::set<std::string> names;
  for (const auto& [name, t] : named) {
    CHECK(t.defined());
    names.insert(name);
  }
  CHECK(names.size() == named.size());
  CHECK(named.size() == gen.size() + dcm.size() + disc_total);

  model.set_main_trainable(false);
  for (const Tensor& t : model.generator_parameters())
    CHECK(!t.requires_grad());
  for (const Tensor& t : model.dcm_generator_parameters())
    CHECK(t.requires_grad());

  model.set_dcm_trainable(false);
  for (const Tensor& t : model.dcm_generator_parameters())
    CHECK(!t.requires_grad());

  model.set_main_trainable(true);
  model.set_dcm_trainable(true);
  for (const Tensor& t : model.generator_parameters())
    CHECK(t.requires_grad());
  for (const Tensor& t : model.dcm_generator_parameters())
    CHECK(t.requires_grad());
}

TEST_CASE("range conversions invert each other") {
  Rng rng(149);
  Tensor signed_img = tanh(Tensor::randn({3, 4, 4}, rng));
  Tensor unit = to_unit_range(signed_img);
  for (int64_t i = 0; i < unit.size(); ++i) {
    CHECK(unit.at(i) >= 0.0f);
    CHECK(unit.at(i) <= 1.0f);
    CHECK(unit.at(i) == doctest::Approx(0.5f * (signed_img.at(i) + 1.0f)));
  }
  Tensor back = to_signed_range(unit);
  for (int64_t i = 0; i < back.size(); ++i)
    CHECK(back.at(i) == doctest::Approx(signed_img.at(i)).epsilon(1e-6));

  CHECK(to_unit_range(Tensor::full({1, 1, 1}, -1.0f)).at(0) == 0.0f);
  CHECK(to_unit_range(Tensor::full({1, 1, 1}, 1.0f)).at(0) == 1.0f);
  CHECK(to_signed_range(Tensor::full({1, 1, 1}, 0.5f)).at(0) == 0.0f);
}
