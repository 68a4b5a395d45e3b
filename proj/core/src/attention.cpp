#include "manigan/attention.hpp"

#include <cmath>
#include <vector>

namespace manigan {

// Bias of -ln(multiplicity) per word column, tiled over the score rows.
// Duplicate word rows then split the softmax mass a single copy would get,
// so repeating a word leaves both attention outputs unchanged.  Distinct
// rows keep a zero bias and plain softmax semantics.
static Tensor duplicate_bias(const TextFeatures& words, int rows) {
  int l = words.length;
  int d = words.word_features.dim(1);
  const std::vector<float>& w = words.word_features.data();
  std::vector<float> bias(static_cast<size_t>(l), 0.0f);
  for (int j = 0; j < l; ++j) {
    int count = 0;
    for (int k = 0; k < l; ++k) {
      bool same = true;
      for (int t = 0; t < d; ++t) {
        if (w[static_cast<size_t>(j * d + t)] !=
            w[static_cast<size_t>(k * d + t)]) {
          same = false;
          break;
        }
      }
      if (same) ++count;
    }
    bias[static_cast<size_t>(j)] = -std::log(static_cast<float>(count));
  }
  Tensor row = Tensor::from_data({1, l}, bias);
  Tensor ones = Tensor::full({rows, 1}, 1.0f);
  return matmul(ones, row);
}

AttentionParams AttentionParams::create(int channels, int n_positions,
                                        int d_text, Rng& rng) {
  AttentionParams p;
  p.word_proj = Tensor::randn({channels, d_text}, rng, 0.02f, true);
  p.spatial_proj = Tensor::randn({n_positions, d_text}, rng, 0.02f, true);
  p.relevance = Tensor::randn({d_text, 1}, rng, 0.02f, true);
  return p;
}

static void check_hidden(const Tensor& hidden, const AttentionParams& params,
                         const TextFeatures& words) {
  if (hidden.ndim() != 3)
    throw DimensionError("attention expects hidden [C,H,W]");
  if (words.length < 1) throw DimensionError("attention needs >= 1 word");
  if (params.word_proj.dim(1) != words.word_features.dim(1))
    throw DimensionError("word projection width does not match d_text");
  if (params.temperature <= 0.0f)
    throw ConfigError("attention temperature must be positive");
}

Tensor spatial_attention(const Tensor& hidden, const TextFeatures& words,
                         const AttentionParams& params) {
  check_hidden(hidden, params, words);
  int c = hidden.dim(0);
  int n = hidden.dim(1) * hidden.dim(2);
  if (params.word_proj.dim(0) != c)
    throw DimensionError("word projection does not match channel count");

  Tensor projected =
      matmul(words.word_features, transpose(params.word_proj));  // [L, C]
  Tensor flat = transpose(reshape(hidden, {c, n}));              // [N, C]
  Tensor scores =
      scale(matmul(flat, transpose(projected)), 1.0f / params.temperature);
  Tensor weights =
      softmax(add(scores, duplicate_bias(words, n)));  // [N, L], rows sum to 1
  Tensor mixed = matmul(weights, projected);   // [N, C]
  return reshape(transpose(mixed), hidden.shape());
}

Tensor channel_attention(const Tensor& hidden, const TextFeatures& words,
                         const AttentionParams& params) {
  check_hidden(hidden, params, words);
  int c = hidden.dim(0);
  int n = hidden.dim(1) * hidden.dim(2);
  if (params.spatial_proj.dim(0) != n)
    throw DimensionError("spatial projection does not match position count");

  Tensor maps =
      matmul(words.word_features, transpose(params.spatial_proj));  // [L, N]
  Tensor channels = reshape(hidden, {c, n});
  Tensor scores =
      scale(matmul(channels, transpose(maps)), 1.0f / params.temperature);
  Tensor weights = softmax(add(scores, duplicate_bias(words, c)));  // [C, L]
  Tensor word_relevance =
      matmul(words.word_features, params.relevance);        // [L, 1]
  Tensor gains = reshape(matmul(weights, word_relevance), {c});  // [C]
  return scale_channels(hidden, gains);
}

}  // namespace manigan
