#include "manigan/objectives.hpp"

#include "manigan/errors.hpp"

namespace manigan {
namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shapes differ");
}

Tensor mean_of(std::vector<Tensor> parts) {
  Tensor acc = parts[0];
  for (size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
  return scale(acc, 1.0f / static_cast<float>(parts.size()));
}

}  // namespace

Tensor l_reg(const Tensor& generated01, const Tensor& original01) {
  check_same_shape(generated01, original01, "l_reg");
  return offset(neg(mean_abs(sub(generated01, original01))), 1.0f);
}

Tensor matching_loss_from_features(const std::vector<Tensor>& image_features,
                                   const std::vector<Tensor>& text_features,
                                   float gamma) {
  const int b = static_cast<int>(image_features.size());
  if (b < 2) throw ConfigError("matching loss needs a batch of at least 2");
  if (text_features.size() != image_features.size())
    throw DimensionError("matching loss: feature lists differ in length");

  std::vector<Tensor> rows;
  rows.reserve(b);
  for (int i = 0; i < b; ++i) {
    std::vector<Tensor> cells;
    cells.reserve(b);
    for (int j = 0; j < b; ++j)
      cells.push_back(scale(
          cosine_similarity(image_features[i], text_features[j]), gamma));
    rows.push_back(reshape(concat(cells), {1, b}));
  }
  Tensor scores = concat(rows);  // [B,B], scores[i][j] = s(image_i, text_j)

  std::vector<float> eye(static_cast<size_t>(b) * b, 0.0f);
  for (int i = 0; i < b; ++i) eye[static_cast<size_t>(i) * b + i] = 1.0f;
  Tensor mask = Tensor::from_data({b, b}, std::move(eye), false);

  Tensor text_given_image = sum(mul(log(softmax(scores)), mask));
  Tensor image_given_text = sum(mul(log(softmax(transpose(scores))), mask));
  return scale(add(text_given_image, image_given_text),
               -1.0f / static_cast<float>(b));
}

Tensor damsm_loss(const std::vector<Tensor>& images01,
                  const std::vector<std::vector<int>>& token_lists,
                  const Encoders& encoders, float gamma) {
  if (images01.size() < 2)
    throw ConfigError("damsm_loss needs a batch of at least 2");
  if (images01.size() != token_lists.size())
    throw DimensionError("damsm_loss: image and caption counts differ");
  std::vector<Tensor> image_features, text_features;
  image_features.reserve(images01.size());
  text_features.reserve(images01.size());
  for (size_t i = 0; i < images01.size(); ++i) {
    image_features.push_back(encoders.match_encode_image(images01[i]));
    text_features.push_back(encoders.match_encode_text(token_lists[i]));
  }
  return matching_loss_from_features(image_features, text_features, gamma);
}

Tensor corre_loss(const Tensor& image01, const std::vector<int>& tokens,
                  const Encoders& encoders) {
  Tensor v = encoders.regional_encode(image01);
  const int n = v.dim(1) * v.dim(2);
  Tensor flat = reshape(v, {v.dim(0), n});  // [c_r, N]
  TextFeatures tf = encoders.encode_text(tokens);

  Tensor projected = matmul(tf.word_features,
                            transpose(encoders.corre_projection()));  // [L,c_r]
  Tensor attention = softmax(matmul(projected, flat));                // [L,N]
  Tensor pooled = matmul(attention, transpose(flat));                 // [L,c_r]

  const int l = projected.dim(0);
  std::vector<Tensor> per_word;
  per_word.reserve(l);
  for (int j = 0; j < l; ++j)
    per_word.push_back(cosine_similarity(row(pooled, j), row(projected, j)));
  return mean_of(std::move(per_word));
}

Tensor rec_loss(const Tensor& generated01, const Tensor& original01,
                const Encoders& encoders) {
  check_same_shape(generated01, original01, "rec_loss");
  Tensor pixel = mean_abs(sub(generated01, original01));
  Tensor feature = mean(square(sub(encoders.shallow_encode(generated01),
                                   encoders.shallow_encode(original01))));
  return add(pixel, scale(feature, 0.1f));
}

Tensor generator_adversarial(const Model& model, int stage,
                             const Tensor& image_pm1, const Tensor& sentence) {
  auto [uncond, cond] = model.discriminator_logits(stage, image_pm1, sentence);
  return scale(add(sum(log_sigmoid(uncond)), sum(log_sigmoid(cond))), -0.5f);
}

GeneratorLossTerms generator_loss(const Model& model,
                                  const std::vector<GeneratorSample>& batch,
                                  const Encoders& encoders,
                                  const LossWeights& weights,
                                  bool include_rec) {
  if (batch.empty()) throw ConfigError("generator_loss: empty batch");
  if (batch.size() < 2 && weights.lambda2 != 0.0f)
    throw ConfigError(
        "generator_loss: the matching term needs a batch of at least 2");

  std::vector<Tensor> adv, corre, rec, reg;
  std::vector<Tensor> finals01;
  std::vector<std::vector<int>> token_lists;
  for (const GeneratorSample& sample : batch) {
    if (sample.images_pm1.empty())
      throw ConfigError("generator_loss: sample produced no images");
    Tensor sentence = encoders.encode_text(sample.tokens).sentence_feature;
    Tensor adv_sum;
    for (const auto& [stage, image] : sample.images_pm1) {
      Tensor term = generator_adversarial(model, stage, image, sentence);
      adv_sum = adv_sum.defined() ? add(adv_sum, term) : term;
    }
    adv.push_back(adv_sum);

    Tensor final01 = to_unit_range(sample.images_pm1.back().second);
    finals01.push_back(final01);
    token_lists.push_back(sample.tokens);
    corre.push_back(offset(neg(corre_loss(final01, sample.tokens, encoders)),
                           1.0f));
    if (include_rec)
      rec.push_back(rec_loss(final01, sample.original01, encoders));
    reg.push_back(l_reg(final01, sample.original01));
  }

  GeneratorLossTerms terms;
  terms.adversarial = mean_of(std::move(adv));
  terms.damsm = weights.lambda2 != 0.0f
                    ? damsm_loss(finals01, token_lists, encoders)
                    : Tensor::scalar(0.0f);
  terms.corre = mean_of(std::move(corre));
  terms.rec = include_rec ? mean_of(std::move(rec)) : Tensor::scalar(0.0f);
  terms.reg = mean_of(std::move(reg));
  terms.total = add(
      terms.adversarial,
      add(scale(terms.damsm, weights.lambda2),
          add(scale(terms.corre, weights.lambda3),
              add(scale(terms.rec, weights.lambda4),
                  scale(terms.reg, weights.lambda1)))));
  return terms;
}

Tensor discriminator_loss(const Model& model, int stage,
                          const std::vector<DiscriminatorSample>& batch,
                          const Encoders& encoders, float lambda3) {
  if (batch.empty()) throw ConfigError("discriminator_loss: empty batch");
  std::vector<Tensor> losses;
  losses.reserve(batch.size());
  for (const DiscriminatorSample& sample : batch) {
    Tensor fake = sample.fake_pm1.detach();
    Tensor matched = encoders.encode_text(sample.tokens).sentence_feature;
    auto [u_real, c_real] =
        model.discriminator_logits(stage, sample.real_pm1, matched);
    auto [u_fake, c_fake] = model.discriminator_logits(stage, fake, matched);

    Tensor uncond = scale(add(sum(log_sigmoid(u_real)),
                              sum(log_sigmoid(neg(u_fake)))),
                          -0.5f);
    Tensor cond = scale(add(sum(log_sigmoid(c_real)),
                            sum(log_sigmoid(neg(c_fake)))),
                        -0.5f);
    Tensor loss = add(uncond, cond);
    if (lambda3 != 0.0f) {
      Tensor corre_matched = corre_loss(sample.real01, sample.tokens, encoders);
      Tensor corre_mismatched =
          corre_loss(sample.real01, sample.mismatched_tokens, encoders);
      Tensor aux = add(offset(neg(corre_matched), 1.0f), corre_mismatched);
      loss = add(loss, scale(aux, lambda3));
    }
    losses.push_back(loss);
  }
  return mean_of(std::move(losses));
}

}  // namespace manigan
