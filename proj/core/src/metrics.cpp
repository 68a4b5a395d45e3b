#include "manigan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "manigan/dataset.hpp"
#include "manigan/errors.hpp"
#include "manigan/optimizer.hpp"

#include "json.hpp"

namespace manigan {
namespace {

double norm_of(const Tensor& v) {
  double acc = 0.0;
  for (float x : v.data()) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

int shape_class(const std::string& shape) {
  const std::vector<std::string>& names = shape_names();
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == shape) return static_cast<int>(i);
  throw ConfigError("unknown shape class: " + shape);
}

}  // namespace

double pixel_diff(const Tensor& a01, const Tensor& b01) {
  if (a01.shape() != b01.shape())
    throw DimensionError("pixel_diff: shapes differ");
  const std::vector<float>& a = a01.data();
  const std::vector<float>& b = b01.data();
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    acc += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  return acc / static_cast<double>(a.size());
}

double text_image_similarity(const Tensor& image01,
                             const std::vector<int>& tokens,
                             const Encoders& encoders) {
  Tensor iv = encoders.match_encode_image(image01);
  Tensor tv = encoders.match_encode_text(tokens);
  double ni = norm_of(iv), nt = norm_of(tv);
  if (ni == 0.0 || nt == 0.0)
    throw NumericError("text_image_similarity: zero-norm feature vector");
  double dot = 0.0;
  for (int i = 0; i < iv.dim(0); ++i)
    dot += static_cast<double>(iv.data()[i]) * tv.data()[i];
  return dot / (ni * nt);
}

double manipulative_precision(double diff, double sim) {
  return (1.0 - diff) * sim;
}

ShapeClassifier ShapeClassifier::create(Rng& rng) {
  ShapeClassifier c;
  c.conv1_ = ConvSpec::create(3, 8, 4, 2, 1, rng);
  c.conv2_ = ConvSpec::create(8, 16, 4, 2, 1, rng);
  const int flat = 16 * (kImageResolution / 4) * (kImageResolution / 4);
  c.head_w_ = Tensor::randn({static_cast<int>(shape_names().size()), flat},
                            rng, 0.02f, true);
  c.head_b_ = Tensor::zeros({static_cast<int>(shape_names().size())}, true);
  return c;
}

int ShapeClassifier::num_classes() const {
  return static_cast<int>(shape_names().size());
}

Tensor ShapeClassifier::logits(const Tensor& image01) const {
  if (image01.ndim() != 3 || image01.dim(0) != 3 ||
      image01.dim(1) != kImageResolution || image01.dim(2) != kImageResolution)
    throw DimensionError("classifier expects a [3,64,64] image");
  Tensor x = leaky_relu(conv2d(image01, conv1_));
  x = leaky_relu(conv2d(x, conv2_));
  return linear(reshape(x, {static_cast<int>(x.size())}), head_w_, head_b_);
}

std::vector<double> ShapeClassifier::probabilities(const Tensor& image01) const {
  Tensor raw = logits(image01);
  double max_logit = -1e300;
  for (float v : raw.data()) max_logit = std::max(max_logit, static_cast<double>(v));
  std::vector<double> p(raw.data().size());
  double z = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(static_cast<double>(raw.data()[i]) - max_logit);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

int ShapeClassifier::predict(const Tensor& image01) const {
  std::vector<double> p = probabilities(image01);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::vector<std::pair<std::string, Tensor>> ShapeClassifier::named_parameters()
    const {
  return {{"conv1.w", conv1_.weights}, {"conv1.b", conv1_.bias},
          {"conv2.w", conv2_.weights}, {"conv2.b", conv2_.bias},
          {"head.w", head_w_},         {"head.b", head_b_}};
}

void ShapeClassifier::set_trainable(bool trainable) {
  for (auto& [name, t] : named_parameters()) t.set_requires_grad(trainable);
}

std::vector<double> train_shape_classifier(ShapeClassifier& classifier,
                                           const Dataset& dataset, int epochs,
                                           int batch_size, float lr,
                                           uint64_t seed) {
  if (batch_size < 1) throw ConfigError("classifier batch size must be positive");
  if (epochs < 1) throw ConfigError("classifier training needs at least one epoch");
  std::vector<int> indices = dataset.split("train");
  if (indices.empty()) {
    indices.resize(dataset.size());
    for (int i = 0; i < dataset.size(); ++i) indices[i] = i;
  }
  if (indices.empty()) throw ConfigError("classifier training set is empty");

  classifier.set_trainable(true);
  std::vector<Tensor> params;
  for (auto& [name, t] : classifier.named_parameters()) params.push_back(t);
  Adam opt(params, lr, 0.9f, 0.999f);
  Rng rng(seed);
  const int k = classifier.num_classes();

  std::vector<double> epoch_losses;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (size_t i = indices.size(); i > 1; --i)
      std::swap(indices[i - 1], indices[rng.uniform_index(i)]);
    double total = 0.0;
    int batches = 0;
    for (size_t start = 0; start < indices.size(); start += batch_size) {
      size_t stop = std::min(start + batch_size, indices.size());
      Tensor loss;
      for (size_t j = start; j < stop; ++j) {
        const CaptionedSample& sample = dataset.get(indices[j]);
        int target = shape_class(sample.attributes.shape);
        std::vector<float> onehot(k, 0.0f);
        onehot[target] = 1.0f;
        Tensor mask = Tensor::from_data({1, k}, std::move(onehot), false);
        Tensor log_probs =
            log(softmax(reshape(classifier.logits(sample.image), {1, k})));
        Tensor nll = neg(sum(mul(log_probs, mask)));
        loss = loss.defined() ? add(loss, nll) : nll;
      }
      loss = scale(loss, 1.0f / static_cast<float>(stop - start));
      opt.zero_grad();
      loss.backward();
      opt.step();
      total += loss.item();
      ++batches;
    }
    epoch_losses.push_back(total / std::max(batches, 1));
  }
  classifier.set_trainable(false);
  return epoch_losses;
}

double classifier_accuracy(const ShapeClassifier& classifier,
                           const Dataset& dataset,
                           const std::vector<int>& indices) {
  if (indices.empty()) throw ConfigError("accuracy over an empty index set");
  int hits = 0;
  for (int idx : indices) {
    const CaptionedSample& sample = dataset.get(idx);
    if (classifier.predict(sample.image) == shape_class(sample.attributes.shape))
      ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(indices.size());
}

double proxy_inception_score(const ShapeClassifier& classifier,
                             const std::vector<Tensor>& images01) {
  if (images01.size() < 2)
    throw ConfigError("proxy inception score needs at least 2 images");
  const int k = classifier.num_classes();
  std::vector<std::vector<double>> dists;
  dists.reserve(images01.size());
  std::vector<double> marginal(k, 0.0);
  for (const Tensor& image : images01) {
    dists.push_back(classifier.probabilities(image));
    for (int c = 0; c < k; ++c) marginal[c] += dists.back()[c];
  }
  for (double& v : marginal) v /= static_cast<double>(images01.size());

  double mean_kl = 0.0;
  for (const std::vector<double>& p : dists) {
    double kl = 0.0;
    for (int c = 0; c < k; ++c)
      if (p[c] > 0.0) kl += p[c] * std::log(p[c] / marginal[c]);
    mean_kl += kl;
  }
  mean_kl /= static_cast<double>(dists.size());
  return std::exp(mean_kl);
}

MetricsReport evaluate_pairs(const std::vector<EvalPair>& pairs,
                             const Encoders& encoders,
                             const ShapeClassifier* classifier,
                             bool per_sample) {
  if (pairs.empty()) throw ConfigError("evaluate_pairs: no samples");
  MetricsReport report;
  report.sample_count = static_cast<int>(pairs.size());
  std::vector<Tensor> edited;
  edited.reserve(pairs.size());
  for (const EvalPair& pair : pairs) {
    double d = pixel_diff(pair.edited01, pair.original01);
    double s = text_image_similarity(pair.edited01, pair.tokens, encoders);
    report.diff += d;
    report.sim += s;
    if (per_sample)
      report.per_sample.push_back({d, s, manipulative_precision(d, s)});
    edited.push_back(pair.edited01);
  }
  report.diff /= report.sample_count;
  report.sim /= report.sample_count;
  report.mp = manipulative_precision(report.diff, report.sim);
  if (classifier != nullptr && pairs.size() >= 2)
    report.is_proxy = proxy_inception_score(*classifier, edited);
  return report;
}

std::string format_metrics(const MetricsReport& report) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "diff = " << report.diff << "\n";
  out << "sim = " << report.sim << "\n";
  out << "mp = " << report.mp << "\n";
  out << "is_proxy = " << report.is_proxy << "\n";
  out << "samples = " << report.sample_count << "\n";
  return out.str();
}

void write_metrics_record(const MetricsReport& report, const std::string& path) {
  nlohmann::json j;
  j["diff"] = report.diff;
  j["sim"] = report.sim;
  j["mp"] = report.mp;
  j["is_proxy"] = report.is_proxy;
  j["samples"] = report.sample_count;
  if (!report.per_sample.empty()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const SampleMetrics& m : report.per_sample)
      rows.push_back({{"diff", m.diff}, {"sim", m.sim}, {"mp", m.mp}});
    j["per_sample"] = rows;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("short write to " + path);
}

}  // namespace manigan
