#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "manigan/dataset.hpp"
#include "manigan/metrics.hpp"
#include "manigan/objectives.hpp"

namespace manigan {

struct TrainConfig {
  float lr = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  int batch_size = 16;
  int epochs = 60;
  LossWeights weights;
  uint64_t seed = 1;
  int eval_every = 5;         // epochs between validation passes
  int max_eval_samples = 64;  // pairs per validation pass
  std::ostream* progress = nullptr;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double diff = 0.0, sim = 0.0, mp = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> mp_log;
  int best_epoch = -1;
  std::string best_checkpoint;
};

/// Index of the best validation entry: highest MP, earliest epoch on ties.
int select_checkpoint(const std::vector<EpochMetrics>& log);

/// Builds validation pairs (mismatched captions drawn deterministically from
/// the seed) and measures the edit quality of the current model. With
/// use_dcm the detail-corrected output is scored, otherwise the last stage.
MetricsReport validate_model(const Model& model, const Encoders& encoders,
                             const Dataset& dataset, const Vocabulary& vocab,
                             bool use_dcm, int max_samples, uint64_t seed,
                             const ShapeClassifier* classifier = nullptr,
                             bool per_sample = false);

/// Adversarial training of the main module: per batch one discriminator step
/// (matched and mismatched captions) and one generator step. Writes
/// `epoch,diff,sim,mp` rows to <out_dir>/main_mp_log.csv, snapshots each
/// validated epoch and returns the MP log with the best entry marked.
TrainResult train_main(Model& model, const Encoders& encoders,
                       const Dataset& dataset, const Vocabulary& vocab,
                       const TrainConfig& config, const std::string& out_dir);

/// Trains the detail correction module with the main module frozen; the
/// reconstruction term is omitted. Logs to <out_dir>/dcm_mp_log.csv.
TrainResult train_dcm(Model& model, const Encoders& encoders,
                      const Dataset& dataset, const Vocabulary& vocab,
                      const TrainConfig& config, const std::string& out_dir);

}  // namespace manigan
