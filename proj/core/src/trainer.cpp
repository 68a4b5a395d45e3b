#include "manigan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "manigan/checkpoint.hpp"
#include "manigan/errors.hpp"
#include "manigan/optimizer.hpp"

namespace manigan {
namespace {

struct BatchSample {
  int index = 0;
  std::vector<int> tokens;
  std::vector<int> mismatched_tokens;
};

Tensor real_at(const Tensor& image01, int resolution) {
  Tensor x = image01;
  while (x.dim(1) > resolution) x = avg_pool2x(x);
  return to_signed_range(x);
}

void check_finite(const Tensor& value, const std::string& term, int epoch) {
  if (!std::isfinite(value.item()))
    throw NumericError("non-finite " + term + " at epoch " +
                       std::to_string(epoch));
}

void check_generator_terms(const GeneratorLossTerms& terms, int epoch) {
  check_finite(terms.adversarial, "generator adversarial term", epoch);
  check_finite(terms.damsm, "generator matching term", epoch);
  check_finite(terms.corre, "generator correspondence term", epoch);
  check_finite(terms.rec, "generator reconstruction term", epoch);
  check_finite(terms.reg, "generator regularization term", epoch);
  check_finite(terms.total, "generator loss", epoch);
}

std::string checkpoint_path(const std::string& out_dir,
                            const std::string& prefix, int epoch) {
  char name[64];
  std::snprintf(name, sizeof(name), "%s_epoch_%03d.ckpt", prefix.c_str(),
                epoch);
  return out_dir + "/" + name;
}

uint64_t eval_seed(uint64_t seed, int epoch) {
  return seed ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(epoch + 1));
}

std::vector<int> training_indices(const Dataset& dataset) {
  std::vector<int> indices = dataset.split("train");
  if (indices.empty()) {
    indices.resize(dataset.size());
    for (int i = 0; i < dataset.size(); ++i) indices[i] = i;
  }
  return indices;
}

void shuffle(std::vector<int>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

}  // namespace

void TrainConfig::validate() const {
  if (lr <= 0.0f) throw ConfigError("learning rate must be positive");
  if (beta1 < 0.0f || beta1 >= 1.0f || beta2 < 0.0f || beta2 >= 1.0f)
    throw ConfigError("Adam betas must lie in [0,1)");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (batch_size < 2 && weights.lambda2 != 0.0f)
    throw ConfigError("the matching term needs a batch size of at least 2");
  if (epochs < 1) throw ConfigError("epoch count must be positive");
  if (eval_every < 1) throw ConfigError("eval_every must be positive");
  if (max_eval_samples < 1) throw ConfigError("max_eval_samples must be positive");
}

int select_checkpoint(const std::vector<EpochMetrics>& log) {
  if (log.empty()) throw ConfigError("select_checkpoint: empty log");
  int best = 0;
  for (int i = 1; i < static_cast<int>(log.size()); ++i)
    if (log[i].mp > log[best].mp) best = i;
  return best;
}

MetricsReport validate_model(const Model& model, const Encoders& encoders,
                             const Dataset& dataset, const Vocabulary& vocab,
                             bool use_dcm, int max_samples, uint64_t seed,
                             const ShapeClassifier* classifier,
                             bool per_sample) {
  std::vector<int> val = dataset.split("val");
  if (val.empty()) val = training_indices(dataset);
  const int n = std::min<int>(max_samples, static_cast<int>(val.size()));
  if (n < 1) throw ConfigError("validation set is empty");

  Rng rng(seed);
  std::vector<EvalPair> pairs;
  pairs.reserve(n);
  for (int i = 0; i < n; ++i) {
    const CaptionedSample& sample = dataset.get(val[i]);
    MismatchedPair mm = sample_mismatch(sample, rng);
    std::vector<int> tokens = vocab.encode(mm.new_tokens);
    Tensor z = sample_noise(model.config().d_z, rng);
    Tensor edited;
    if (model.config().ablation == "no-main") {
      Tensor h = model.hidden_from_image(sample.image);
      edited = model.dcm_forward(h, sample.image, tokens, encoders).image;
    } else if (use_dcm) {
      auto packs = model.main_forward(sample.image, tokens, z, encoders);
      edited = model
                   .dcm_forward(packs.back().h_fused, sample.image, tokens,
                                encoders)
                   .image;
    } else {
      edited = model.main_forward(sample.image, tokens, z, encoders)
                   .back()
                   .image;
    }
    EvalPair pair;
    pair.original01 = sample.image;
    pair.edited01 = to_unit_range(edited).detach();
    pair.tokens = tokens;
    pairs.push_back(std::move(pair));
  }
  return evaluate_pairs(pairs, encoders, classifier, per_sample);
}

namespace {

/// Shared epoch loop: forwards each batch once, runs a discriminator step on
/// the detached fakes, then a generator step, validating and snapshotting on
/// the configured cadence.
TrainResult run_phase(Model& model, const Encoders& encoders,
                      const Dataset& dataset, const Vocabulary& vocab,
                      const TrainConfig& config, const std::string& out_dir,
                      bool dcm_phase) {
  config.validate();
  if (!encoders.pretrained())
    throw StateError("training requires pretrained encoders");
  std::filesystem::create_directories(out_dir);

  const std::string prefix = dcm_phase ? "dcm" : "main";
  std::ofstream csv(out_dir + "/" + prefix + "_mp_log.csv");
  if (!csv) throw IoError("cannot open the MP log in " + out_dir);
  csv << "epoch,diff,sim,mp\n";

  std::vector<Tensor> gen_params =
      dcm_phase ? model.dcm_generator_parameters() : model.generator_parameters();
  std::vector<Tensor> disc_params;
  if (dcm_phase) {
    disc_params = model.discriminator_parameters(3);
  } else {
    for (int stage = 0; stage < 3; ++stage)
      for (Tensor& t : model.discriminator_parameters(stage))
        disc_params.push_back(t);
  }
  for (Tensor& t : gen_params) t.set_requires_grad(true);
  for (Tensor& t : disc_params) t.set_requires_grad(true);
  Adam opt_g(gen_params, config.lr, config.beta1, config.beta2);
  Adam opt_d(disc_params, config.lr, config.beta1, config.beta2);

  std::vector<int> indices = training_indices(dataset);
  if (static_cast<int>(indices.size()) < config.batch_size)
    throw ConfigError("training split is smaller than one batch");

  Rng rng(config.seed);
  TrainResult result;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(indices, rng);
    double epoch_d = 0.0, epoch_g = 0.0;
    int batches = 0;

    for (size_t start = 0; start + 2 <= indices.size();
         start += config.batch_size) {
      size_t stop =
          std::min(start + static_cast<size_t>(config.batch_size),
                   indices.size());

      // One forward per sample, shared by both steps.
      std::vector<BatchSample> meta;
      std::vector<std::vector<StagePack>> packs;
      std::vector<DcmPack> dcm_packs;
      for (size_t k = start; k < stop; ++k) {
        const CaptionedSample& sample = dataset.get(indices[k]);
        BatchSample bs;
        bs.index = indices[k];
        bs.tokens = vocab.encode(sample.tokens);
        bs.mismatched_tokens =
            vocab.encode(sample_mismatch(sample, rng).new_tokens);
        if (dcm_phase) {
          Tensor h_last;
          if (model.config().ablation == "no-main") {
            h_last = model.hidden_from_image(sample.image);
          } else {
            Tensor z = sample_noise(model.config().d_z, rng);
            h_last = model.main_forward(sample.image, bs.tokens, z, encoders)
                         .back()
                         .h_fused;
          }
          dcm_packs.push_back(
              model.dcm_forward(h_last, sample.image, bs.tokens, encoders));
        } else {
          Tensor z = sample_noise(model.config().d_z, rng);
          packs.push_back(
              model.main_forward(sample.image, bs.tokens, z, encoders));
        }
        meta.push_back(std::move(bs));
      }

      // Discriminator step.
      Tensor d_loss;
      if (dcm_phase) {
        std::vector<DiscriminatorSample> batch;
        for (size_t k = 0; k < meta.size(); ++k) {
          const CaptionedSample& sample = dataset.get(meta[k].index);
          DiscriminatorSample ds;
          ds.real_pm1 = to_signed_range(sample.image);
          ds.fake_pm1 = dcm_packs[k].image;
          ds.real01 = sample.image;
          ds.tokens = meta[k].tokens;
          ds.mismatched_tokens = meta[k].mismatched_tokens;
          batch.push_back(std::move(ds));
        }
        d_loss = discriminator_loss(model, 3, batch, encoders,
                                    config.weights.lambda3);
      } else {
        for (int stage = 0; stage < 3; ++stage) {
          std::vector<DiscriminatorSample> batch;
          for (size_t k = 0; k < meta.size(); ++k) {
            const CaptionedSample& sample = dataset.get(meta[k].index);
            DiscriminatorSample ds;
            ds.real_pm1 =
                real_at(sample.image, model.config().resolutions[stage]);
            ds.fake_pm1 = packs[k][stage].image;
            ds.real01 = sample.image;
            ds.tokens = meta[k].tokens;
            ds.mismatched_tokens = meta[k].mismatched_tokens;
            batch.push_back(std::move(ds));
          }
          Tensor stage_loss = discriminator_loss(model, stage, batch, encoders,
                                                 config.weights.lambda3);
          d_loss = d_loss.defined() ? add(d_loss, stage_loss) : stage_loss;
        }
      }
      check_finite(d_loss, "discriminator loss", epoch);
      opt_d.zero_grad();
      d_loss.backward();
      opt_d.step();

      // Generator step.
      std::vector<GeneratorSample> gbatch;
      for (size_t k = 0; k < meta.size(); ++k) {
        const CaptionedSample& sample = dataset.get(meta[k].index);
        GeneratorSample gs;
        if (dcm_phase) {
          gs.images_pm1.emplace_back(3, dcm_packs[k].image);
        } else {
          for (int stage = 0; stage < 3; ++stage)
            gs.images_pm1.emplace_back(stage, packs[k][stage].image);
        }
        gs.original01 = sample.image;
        gs.tokens = meta[k].tokens;
        gbatch.push_back(std::move(gs));
      }
      GeneratorLossTerms terms = generator_loss(model, gbatch, encoders,
                                                config.weights, !dcm_phase);
      check_generator_terms(terms, epoch);
      opt_g.zero_grad();
      terms.total.backward();
      opt_g.step();

      epoch_d += d_loss.item();
      epoch_g += terms.total.item();
      ++batches;
    }

    if (config.progress != nullptr && batches > 0)
      (*config.progress) << "[" << prefix << "] epoch " << epoch << "/"
                         << config.epochs << "  d " << epoch_d / batches
                         << "  g " << epoch_g / batches << "\n";

    if (epoch % config.eval_every == 0 || epoch == config.epochs) {
      MetricsReport report = validate_model(
          model, encoders, dataset, vocab, dcm_phase, config.max_eval_samples,
          eval_seed(config.seed, epoch));
      result.mp_log.push_back({epoch, report.diff, report.sim, report.mp});
      csv << epoch << "," << report.diff << "," << report.sim << ","
          << report.mp << "\n";
      csv.flush();

      Checkpoint ckpt;
      ckpt.phase = prefix;
      ckpt.epoch = static_cast<uint32_t>(epoch);
      for (const EpochMetrics& m : result.mp_log)
        ckpt.mp_history.push_back(m.mp);
      ckpt.tensors = model.named_parameters();
      save_checkpoint(checkpoint_path(out_dir, prefix, epoch), ckpt);

      if (config.progress != nullptr)
        (*config.progress) << "[" << prefix << "] epoch " << epoch
                           << "  mp " << report.mp << "\n";
    }
  }

  int best = select_checkpoint(result.mp_log);
  result.best_epoch = result.mp_log[best].epoch;
  result.best_checkpoint =
      checkpoint_path(out_dir, prefix, result.best_epoch);
  restore_tensors(load_checkpoint(result.best_checkpoint),
                  model.named_parameters());
  return result;
}

}  // namespace

TrainResult train_main(Model& model, const Encoders& encoders,
                       const Dataset& dataset, const Vocabulary& vocab,
                       const TrainConfig& config, const std::string& out_dir) {
  if (model.config().ablation == "no-main")
    throw StateError("cannot train the main module in the no-main configuration");
  return run_phase(model, encoders, dataset, vocab, config, out_dir, false);
}

TrainResult train_dcm(Model& model, const Encoders& encoders,
                      const Dataset& dataset, const Vocabulary& vocab,
                      const TrainConfig& config, const std::string& out_dir) {
  if (model.config().ablation == "no-dcm")
    throw StateError("cannot train the detail correction module in the no-dcm "
                     "configuration");
  model.set_main_trainable(false);
  return run_phase(model, encoders, dataset, vocab, config, out_dir, true);
}

}  // namespace manigan
