#pragma once

#include "manigan/tensor.hpp"
#include "manigan/text_encoder.hpp"

namespace manigan {

/// Parameters for the word-level spatial and channel-wise attentions over a
/// [C',H',D'] hidden map with H'*D' = n_positions.
struct AttentionParams {
  Tensor word_proj;     // [C', d_text]: word -> channel space
  Tensor spatial_proj;  // [n_positions, d_text]: word -> spatial map
  Tensor relevance;     // [d_text]: word -> relevance scalar
  float temperature = 1.0f;

  static AttentionParams create(int channels, int n_positions, int d_text,
                                Rng& rng);
};

/// Per location i: alpha_i = softmax_j(hidden_i . proj(word_j) / tau),
/// output_i = sum_j alpha_ij proj(word_j).  Word rows that are exact
/// duplicates split the mass one copy would receive, so repeating a word
/// leaves the output unchanged.
Tensor spatial_attention(const Tensor& hidden, const TextFeatures& words,
                         const AttentionParams& params);

/// Per channel k: beta_k = softmax_j(channel_k . spatial_proj(word_j) / tau),
/// output channel k = channel_k * sum_j beta_kj relevance(word_j).  Duplicate
/// word rows split their mass the same way as in spatial_attention.
Tensor channel_attention(const Tensor& hidden, const TextFeatures& words,
                         const AttentionParams& params);

}  // namespace manigan
