#pragma once

#include <string>
#include <utility>
#include <vector>

#include "manigan/image_encoders.hpp"

namespace manigan {

class Dataset;

/// Mean absolute pixel difference between [0,1] images.
double pixel_diff(const Tensor& a01, const Tensor& b01);

/// Cosine similarity of the global matching vectors of an image and a
/// caption. Throws NumericError when either vector has zero norm.
double text_image_similarity(const Tensor& image01,
                             const std::vector<int>& tokens,
                             const Encoders& encoders);

/// (1 - diff) * sim.
double manipulative_precision(double diff, double sim);

/// A small shape classifier backing the inception-score proxy (K classes,
/// one per shape word).
class ShapeClassifier {
 public:
  ShapeClassifier() = default;
  static ShapeClassifier create(Rng& rng);

  int num_classes() const;
  Tensor logits(const Tensor& image01) const;
  std::vector<double> probabilities(const Tensor& image01) const;
  int predict(const Tensor& image01) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  void set_trainable(bool trainable);

 private:
  ConvSpec conv1_, conv2_;
  Tensor head_w_, head_b_;
};

/// Trains on shape labels; returns per-epoch mean cross-entropy.
std::vector<double> train_shape_classifier(ShapeClassifier& classifier,
                                           const Dataset& dataset, int epochs,
                                           int batch_size, float lr,
                                           uint64_t seed);
/// Fraction of correct predictions over the given split indices.
double classifier_accuracy(const ShapeClassifier& classifier,
                           const Dataset& dataset,
                           const std::vector<int>& indices);

/// exp(mean_i KL(p(y|x_i) || mean_j p(y|x_j))); needs at least 2 images and
/// lies in [1, K].
double proxy_inception_score(const ShapeClassifier& classifier,
                             const std::vector<Tensor>& images01);

struct EvalPair {
  Tensor original01;
  Tensor edited01;
  std::vector<int> tokens;  // the target caption
};

struct SampleMetrics {
  double diff = 0.0, sim = 0.0, mp = 0.0;
};

struct MetricsReport {
  double diff = 0.0;
  double sim = 0.0;
  double mp = 0.0;       // from the averaged diff and sim
  double is_proxy = 1.0;
  int sample_count = 0;
  std::vector<SampleMetrics> per_sample;  // filled on request
};

/// Aggregates metrics over edited/original pairs. diff and sim are averaged
/// across samples and mp is computed from the averages; per-sample numbers
/// are recorded when per_sample is set. classifier may be null, leaving the
/// proxy score at 1.
MetricsReport evaluate_pairs(const std::vector<EvalPair>& pairs,
                             const Encoders& encoders,
                             const ShapeClassifier* classifier,
                             bool per_sample = false);

/// "metric = value" lines.
std::string format_metrics(const MetricsReport& report);
/// Machine-readable JSON record.
void write_metrics_record(const MetricsReport& report, const std::string& path);

}  // namespace manigan
