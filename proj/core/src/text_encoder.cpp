#include "manigan/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace manigan {

int Vocabulary::lookup(const std::string& token) const {
  for (size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] == token) return static_cast<int>(i);
  return unk_index;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& words,
                                    int l_max) const {
  if (words.empty()) throw EncodingError("cannot encode an empty caption");
  std::vector<int> ids;
  ids.reserve(std::min<size_t>(words.size(), l_max));
  for (const auto& w : words) {
    if (static_cast<int>(ids.size()) == l_max) break;
    ids.push_back(lookup(w));
  }
  return ids;
}

Vocabulary Vocabulary::build(
    const std::vector<std::vector<std::string>>& corpus) {
  if (corpus.empty()) throw ConfigError("vocabulary needs a non-empty corpus");
  std::set<std::string> distinct;
  for (const auto& caption : corpus)
    distinct.insert(caption.begin(), caption.end());
  Vocabulary v;
  v.tokens = {"<pad>", "<unk>"};
  v.tokens.insert(v.tokens.end(), distinct.begin(), distinct.end());
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary to " + path);
  for (const auto& t : tokens) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary from " + path);
  Vocabulary v;
  v.tokens.clear();
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) v.tokens.push_back(line);
  if (v.tokens.size() < 2 || v.tokens[0] != "<pad>" || v.tokens[1] != "<unk>")
    throw IoError("malformed vocabulary file " + path);
  return v;
}

std::vector<std::string> tokenize(const std::string& caption) {
  std::istringstream in(caption);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) {
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    words.push_back(w);
  }
  return words;
}

TextEncoder TextEncoder::create(int vocab_size, int d_text, Rng& rng) {
  if (vocab_size < 2 || d_text < 2 || d_text % 2 != 0)
    throw ConfigError("text encoder needs vocab >= 2 and even d_text >= 2");
  TextEncoder e;
  e.d_text_ = d_text;
  e.hidden_ = d_text / 2;
  int h = e.hidden_;
  // Moderate-scale embeddings with 1/sqrt(fan-in) gate matrices keep the
  // gate preactivations and hidden states near order one from the start.
  auto mat = [&rng](int rows, int cols) {
    return Tensor::randn({rows, cols}, rng,
                         1.0f / std::sqrt(static_cast<float>(cols)), true);
  };
  e.embedding_ = Tensor::randn({vocab_size, d_text}, rng, 1.0f, true);
  e.w_fwd_ = mat(3 * h, d_text);
  e.u_fwd_ = mat(3 * h, h);
  e.bw_fwd_ = Tensor::zeros({3 * h}, true);
  e.bu_fwd_ = Tensor::zeros({3 * h}, true);
  e.w_bwd_ = mat(3 * h, d_text);
  e.u_bwd_ = mat(3 * h, h);
  e.bw_bwd_ = Tensor::zeros({3 * h}, true);
  e.bu_bwd_ = Tensor::zeros({3 * h}, true);
  return e;
}

Tensor TextEncoder::gru_step(const Tensor& x, const Tensor& h, const Tensor& w,
                             const Tensor& u, const Tensor& bw,
                             const Tensor& bu) const {
  Tensor wx = reshape(linear(x, w, bw), {3, hidden_});
  Tensor uh = reshape(linear(h, u, bu), {3, hidden_});
  Tensor r = sigmoid(add(row(wx, 0), row(uh, 0)));
  Tensor z = sigmoid(add(row(wx, 1), row(uh, 1)));
  Tensor n = manigan::tanh(add(row(wx, 2), mul(r, row(uh, 2))));
  return add(mul(z, h), mul(offset(neg(z), 1.0f), n));
}

TextFeatures TextEncoder::encode(const std::vector<int>& token_ids) const {
  if (d_text_ == 0) throw StateError("text encoder not initialized");
  if (token_ids.empty()) throw EncodingError("empty token list");
  if (static_cast<int>(token_ids.size()) > kMaxCaptionTokens)
    throw EncodingError("caption exceeds the token limit");
  Tensor embedded = embed(embedding_, token_ids);  // [L, d_text]
  int l = static_cast<int>(token_ids.size());

  std::vector<Tensor> fwd(l), bwd(l);
  Tensor h = Tensor::zeros({hidden_});
  for (int t = 0; t < l; ++t) {
    h = gru_step(row(embedded, t), h, w_fwd_, u_fwd_, bw_fwd_, bu_fwd_);
    fwd[t] = h;
  }
  h = Tensor::zeros({hidden_});
  for (int t = l - 1; t >= 0; --t) {
    h = gru_step(row(embedded, t), h, w_bwd_, u_bwd_, bw_bwd_, bu_bwd_);
    bwd[t] = h;
  }

  std::vector<Tensor> rows;
  rows.reserve(l);
  for (int t = 0; t < l; ++t)
    rows.push_back(reshape(concat({fwd[t], bwd[t]}), {1, d_text_}));

  TextFeatures out;
  out.word_features = concat(rows);
  out.sentence_feature = mean_rows(out.word_features);
  out.length = l;
  return out;
}

std::vector<Tensor> TextEncoder::parameters() const {
  return {embedding_, w_fwd_, u_fwd_, bw_fwd_, bu_fwd_,
          w_bwd_,     u_bwd_, bw_bwd_, bu_bwd_};
}

std::vector<std::string> TextEncoder::parameter_names() {
  return {"embedding", "w_fwd", "u_fwd", "bw_fwd", "bu_fwd",
          "w_bwd",     "u_bwd", "bw_bwd", "bu_bwd"};
}

void TextEncoder::set_trainable(bool trainable) {
  for (auto& p : parameters()) {
    Tensor t = p;
    t.set_requires_grad(trainable);
  }
}

}  // namespace manigan
