#pragma once

#include <string>
#include <vector>

#include "manigan/tensor.hpp"

namespace manigan {

inline constexpr int kMaxCaptionTokens = 16;

struct Vocabulary {
  std::vector<std::string> tokens;  // index -> token
  int pad_index = 0;
  int unk_index = 1;

  int size() const { return static_cast<int>(tokens.size()); }
  int lookup(const std::string& token) const;
  /// Token ids for a caption; unknown words map to unk, captions longer
  /// than l_max are truncated.
  std::vector<int> encode(const std::vector<std::string>& words,
                          int l_max = kMaxCaptionTokens) const;

  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
};

/// Whitespace split, lowered.
std::vector<std::string> tokenize(const std::string& caption);

struct TextFeatures {
  Tensor word_features;     // [L, d_text]
  Tensor sentence_feature;  // [d_text], row-mean of word_features
  int length = 0;
};

/// Bidirectional gated recurrent encoder over an embedding table.
/// Each word feature is the concatenated forward/backward hidden state.
class TextEncoder {
 public:
  TextEncoder() = default;
  static TextEncoder create(int vocab_size, int d_text, Rng& rng);

  TextFeatures encode(const std::vector<int>& token_ids) const;

  int d_text() const { return d_text_; }
  std::vector<Tensor> parameters() const;
  void set_trainable(bool trainable);

  // Exposed for serialization; order matches parameters().
  static std::vector<std::string> parameter_names();

 private:
  Tensor gru_step(const Tensor& x, const Tensor& h, const Tensor& w,
                  const Tensor& u, const Tensor& bw, const Tensor& bu) const;

  int d_text_ = 0;
  int hidden_ = 0;
  Tensor embedding_;                  // [V, d_text]
  Tensor w_fwd_, u_fwd_, bw_fwd_, bu_fwd_;
  Tensor w_bwd_, u_bwd_, bw_bwd_, bu_bwd_;
};

}  // namespace manigan
