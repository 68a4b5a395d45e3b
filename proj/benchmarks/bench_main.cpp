#include <benchmark/benchmark.h>

#include "manigan/acm.hpp"
#include "manigan/attention.hpp"
#include "manigan/networks.hpp"
#include "manigan/nn.hpp"

namespace {

using namespace manigan;

void bm_conv2d(benchmark::State& state) {
  Rng rng(7);
  ConvSpec spec = ConvSpec::create(16, 32, 3, 1, 1, rng);
  for (Tensor t : {spec.weights, spec.bias}) t.set_requires_grad(false);
  Tensor x = Tensor::randn({16, 64, 64}, rng);
  for (auto _ : state) {
    Tensor y = conv2d(x, spec);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(bm_conv2d);

void bm_spatial_attention(benchmark::State& state) {
  Rng rng(7);
  AttentionParams params = AttentionParams::create(32, 1024, 32, rng);
  for (Tensor t : {params.word_proj, params.spatial_proj, params.relevance})
    t.set_requires_grad(false);
  Tensor h = Tensor::randn({32, 32, 32}, rng);
  TextFeatures words;
  words.word_features = Tensor::randn({12, 32}, rng);
  words.sentence_feature = Tensor::randn({32}, rng);
  words.length = 12;
  for (auto _ : state) {
    Tensor y = spatial_attention(h, words, params);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(bm_spatial_attention);

void bm_acm_forward(benchmark::State& state) {
  Rng rng(7);
  AcmParams params = AcmParams::create(64, 32, 2, 16, rng);
  Tensor h = Tensor::randn({32, 32, 32}, rng);
  Tensor v = Tensor::randn({64, 8, 8}, rng);
  for (auto _ : state) {
    Tensor y = acm_forward(h, v, params);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(bm_acm_forward);

void bm_generator_forward(benchmark::State& state) {
  Rng rng(7);
  EncoderConfig ec;
  ec.vocab_size = 32;
  Encoders encoders = Encoders::create(ec, rng);
  encoders.set_trainable(false);
  encoders.mark_pretrained();
  ModelConfig mc;
  mc.vocab_size = 32;
  Model model = Model::create(mc, rng);
  for (Tensor& t : model.generator_parameters()) t.set_requires_grad(false);
  Tensor image = Tensor::randn({3, 64, 64}, rng, 0.25f);
  std::vector<int> tokens = {2, 3, 4, 5, 6, 7, 8};
  Tensor z = sample_noise(mc.d_z, rng);
  for (auto _ : state) {
    auto packs = model.main_forward(image, tokens, z, encoders);
    benchmark::DoNotOptimize(packs.back().image.data().data());
  }
}
BENCHMARK(bm_generator_forward);

}  // namespace

BENCHMARK_MAIN();
