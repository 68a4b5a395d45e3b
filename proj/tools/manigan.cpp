#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "manigan/checkpoint.hpp"
#include "manigan/config.hpp"
#include "manigan/dataset.hpp"
#include "manigan/errors.hpp"
#include "manigan/image_io.hpp"
#include "manigan/metrics.hpp"
#include "manigan/networks.hpp"
#include "manigan/objectives.hpp"
#include "manigan/trainer.hpp"

namespace {

using namespace manigan;

struct Overrides {
  std::optional<std::string> root, data, out, config_path, ablation;
  std::optional<int> n_train, n_val, n_test, epochs, dcm_epochs, batch_size;
  std::optional<int> eval_every, eval_samples, pretrain_epochs, pretrain_batch;
  std::optional<int> classifier_epochs;
  std::optional<float> lr, lambda1, lambda2, lambda3, lambda4, pretrain_lr;
  std::optional<uint64_t> seed;
};

void add_common_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--root", o.root, "base directory for relative paths");
  cmd->add_option("--config", o.config_path, "key = value config file");
  cmd->add_option("--data", o.data, "dataset directory");
  cmd->add_option("--out", o.out, "artifact directory");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--n-train", o.n_train, "training samples");
  cmd->add_option("--n-val", o.n_val, "validation samples");
  cmd->add_option("--n-test", o.n_test, "test samples");
  cmd->add_option("--epochs", o.epochs, "main training epochs");
  cmd->add_option("--dcm-epochs", o.dcm_epochs, "detail correction epochs");
  cmd->add_option("--batch-size", o.batch_size, "training batch size");
  cmd->add_option("--lr", o.lr, "learning rate");
  cmd->add_option("--lambda1", o.lambda1, "regularization weight");
  cmd->add_option("--lambda2", o.lambda2, "matching loss weight");
  cmd->add_option("--lambda3", o.lambda3, "correspondence weight");
  cmd->add_option("--lambda4", o.lambda4, "reconstruction weight");
  cmd->add_option("--eval-every", o.eval_every, "epochs between validations");
  cmd->add_option("--eval-samples", o.eval_samples, "validation pair count");
  cmd->add_option("--pretrain-epochs", o.pretrain_epochs, "encoder epochs");
  cmd->add_option("--pretrain-batch", o.pretrain_batch, "encoder batch size");
  cmd->add_option("--pretrain-lr", o.pretrain_lr, "encoder learning rate");
  cmd->add_option("--classifier-epochs", o.classifier_epochs,
                  "shape classifier epochs");
  cmd->add_option("--ablation", o.ablation,
                  "none | no-acm | concat | no-main | no-dcm");
}

RunConfig resolve_config(const Overrides& o) {
  RunConfig cfg;
  if (o.config_path) {
    std::string path = *o.config_path;
    if (o.root && !path.empty() && path.front() != '/')
      path = *o.root + "/" + path;
    cfg = load_run_config(path, cfg);
  }
  if (o.root) cfg.root = *o.root;
  if (o.data) cfg.data = *o.data;
  if (o.out) cfg.out = *o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.n_train) cfg.n_train = *o.n_train;
  if (o.n_val) cfg.n_val = *o.n_val;
  if (o.n_test) cfg.n_test = *o.n_test;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.dcm_epochs) cfg.dcm_epochs = *o.dcm_epochs;
  if (o.batch_size) cfg.batch_size = *o.batch_size;
  if (o.lr) cfg.lr = *o.lr;
  if (o.lambda1) cfg.lambda1 = *o.lambda1;
  if (o.lambda2) cfg.lambda2 = *o.lambda2;
  if (o.lambda3) cfg.lambda3 = *o.lambda3;
  if (o.lambda4) cfg.lambda4 = *o.lambda4;
  if (o.eval_every) cfg.eval_every = *o.eval_every;
  if (o.eval_samples) cfg.eval_samples = *o.eval_samples;
  if (o.pretrain_epochs) cfg.pretrain_epochs = *o.pretrain_epochs;
  if (o.pretrain_batch) cfg.pretrain_batch = *o.pretrain_batch;
  if (o.pretrain_lr) cfg.pretrain_lr = *o.pretrain_lr;
  if (o.classifier_epochs) cfg.classifier_epochs = *o.classifier_epochs;
  if (o.ablation) cfg.ablation = *o.ablation;
  cfg.validate();
  return cfg;
}

EncoderConfig encoder_config(int vocab_size) {
  EncoderConfig cfg;
  cfg.vocab_size = vocab_size;
  return cfg;
}

ModelConfig model_config(int vocab_size, const std::string& ablation) {
  ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.ablation = ablation;
  return cfg;
}

TrainConfig train_config(const RunConfig& cfg, bool dcm) {
  TrainConfig tc;
  tc.lr = cfg.lr;
  tc.batch_size = cfg.batch_size;
  tc.epochs = dcm ? cfg.dcm_epochs : cfg.epochs;
  tc.weights = {cfg.lambda1, cfg.lambda2, cfg.lambda3, cfg.lambda4};
  tc.seed = cfg.seed;
  tc.eval_every = cfg.eval_every;
  tc.max_eval_samples = cfg.eval_samples;
  tc.progress = &std::cout;
  return tc;
}

std::string encoders_ckpt(const RunConfig& cfg) {
  return cfg.resolve(cfg.out) + "/encoders/encoders.ckpt";
}

std::string vocab_path(const RunConfig& cfg) {
  return cfg.resolve(cfg.out) + "/encoders/vocab.txt";
}

std::string classifier_ckpt(const RunConfig& cfg) {
  return cfg.resolve(cfg.out) + "/classifier/classifier.ckpt";
}

Encoders load_pretrained_encoders(const RunConfig& cfg, const Vocabulary& vocab) {
  Rng rng(1);
  Encoders encoders = Encoders::create(encoder_config(vocab.size()), rng);
  restore_tensors(load_checkpoint(encoders_ckpt(cfg)),
                  encoders.named_parameters());
  encoders.set_trainable(false);
  encoders.mark_pretrained();
  return encoders;
}

std::optional<ShapeClassifier> load_classifier(const RunConfig& cfg) {
  std::string path = classifier_ckpt(cfg);
  if (!std::filesystem::exists(path)) return std::nullopt;
  Rng rng(1);
  ShapeClassifier classifier = ShapeClassifier::create(rng);
  restore_tensors(load_checkpoint(path), classifier.named_parameters());
  classifier.set_trainable(false);
  return classifier;
}

Model load_model(const RunConfig& cfg, const std::string& checkpoint,
                 int vocab_size, std::string* phase_out = nullptr) {
  Rng rng(cfg.seed);
  Model model = Model::create(model_config(vocab_size, cfg.ablation), rng);
  if (!checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(cfg.resolve(checkpoint));
    restore_tensors(ckpt, model.named_parameters());
    if (phase_out != nullptr) *phase_out = ckpt.phase;
  }
  return model;
}

/// Nearest-neighbour upscale of a [3,h,w] image to 64x64 for grid cells.
Tensor to_cell(const Tensor& image01) {
  Tensor x = image01.detach();
  while (x.dim(1) < kImageResolution) x = upsample2x(x);
  return x;
}

Tensor assemble_grid(const std::vector<std::vector<Tensor>>& rows, int pad = 2) {
  const int r = kImageResolution;
  size_t columns = 0;
  for (const auto& row : rows) columns = std::max(columns, row.size());
  const int width =
      static_cast<int>(columns) * (r + pad) + pad;
  const int height = static_cast<int>(rows.size()) * (r + pad) + pad;
  std::vector<float> data(static_cast<size_t>(3) * width * height, 1.0f);
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < rows[i].size(); ++j) {
      const Tensor& cell = rows[i][j];
      int y0 = pad + static_cast<int>(i) * (r + pad);
      int x0 = pad + static_cast<int>(j) * (r + pad);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < r; ++y)
          for (int x = 0; x < r; ++x)
            data[(static_cast<size_t>(c) * height + y0 + y) * width + x0 + x] =
                cell.data()[(static_cast<size_t>(c) * r + y) * r + x];
    }
  }
  return Tensor::from_data({3, height, width}, std::move(data), false);
}

int cmd_make_dataset(const RunConfig& cfg) {
  std::string root = cfg.resolve(cfg.data);
  int count = make_dataset(root, cfg.n_train, cfg.n_val, cfg.n_test, cfg.seed);
  std::cout << "wrote " << count << " samples to " << root << "\n";
  return 0;
}

int cmd_pretrain(const RunConfig& cfg) {
  Dataset dataset = Dataset::load(cfg.resolve(cfg.data));
  Vocabulary vocab = Vocabulary::build(dataset.captions());
  Rng rng(cfg.seed);
  Encoders encoders = Encoders::create(encoder_config(vocab.size()), rng);
  PretrainResult result =
      pretrain_matching(encoders, dataset, vocab, cfg.pretrain_epochs,
                        cfg.pretrain_batch, cfg.pretrain_lr, cfg.seed);

  std::string out = cfg.resolve(cfg.out);
  std::filesystem::create_directories(out + "/encoders");
  vocab.save(vocab_path(cfg));
  Checkpoint ckpt;
  ckpt.phase = "encoders";
  ckpt.epoch = static_cast<uint32_t>(cfg.pretrain_epochs);
  ckpt.tensors = encoders.named_parameters();
  save_checkpoint(encoders_ckpt(cfg), ckpt);
  std::cout << "matching loss: " << result.epoch_losses.front() << " -> "
            << result.epoch_losses.back() << "\n";

  ShapeClassifier classifier = ShapeClassifier::create(rng);
  std::vector<double> losses = train_shape_classifier(
      classifier, dataset, cfg.classifier_epochs, cfg.pretrain_batch,
      1e-3f, cfg.seed + 1);
  std::filesystem::create_directories(out + "/classifier");
  Checkpoint cls;
  cls.phase = "classifier";
  cls.epoch = static_cast<uint32_t>(cfg.classifier_epochs);
  cls.tensors = classifier.named_parameters();
  save_checkpoint(classifier_ckpt(cfg), cls);

  std::vector<int> val = dataset.split("val");
  if (val.empty()) val = dataset.split("train");
  double acc = classifier_accuracy(classifier, dataset, val);
  std::cout << "classifier accuracy: " << acc << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  Dataset dataset = Dataset::load(cfg.resolve(cfg.data));
  Vocabulary vocab = Vocabulary::load(vocab_path(cfg));
  Encoders encoders = load_pretrained_encoders(cfg, vocab);
  Rng rng(cfg.seed);
  Model model = Model::create(model_config(vocab.size(), cfg.ablation), rng);
  TrainResult result = train_main(model, encoders, dataset, vocab,
                                  train_config(cfg, false),
                                  cfg.resolve(cfg.out) + "/main");
  std::cout << "best epoch " << result.best_epoch << " ("
            << result.best_checkpoint << ")\n";
  return 0;
}

int cmd_train_dcm(const RunConfig& cfg, const std::string& checkpoint) {
  Dataset dataset = Dataset::load(cfg.resolve(cfg.data));
  Vocabulary vocab = Vocabulary::load(vocab_path(cfg));
  Encoders encoders = load_pretrained_encoders(cfg, vocab);
  if (checkpoint.empty() && cfg.ablation != "no-main")
    throw ConfigError("train-dcm needs --checkpoint with the main snapshot");
  Model model = load_model(cfg, checkpoint, vocab.size());
  TrainResult result = train_dcm(model, encoders, dataset, vocab,
                                 train_config(cfg, true),
                                 cfg.resolve(cfg.out) + "/dcm");
  std::cout << "best epoch " << result.best_epoch << " ("
            << result.best_checkpoint << ")\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
             const std::string& record, bool per_sample, bool identity_stub) {
  Dataset dataset = Dataset::load(cfg.resolve(cfg.data));
  Vocabulary vocab = Vocabulary::load(vocab_path(cfg));
  Encoders encoders = load_pretrained_encoders(cfg, vocab);
  std::optional<ShapeClassifier> classifier = load_classifier(cfg);
  const ShapeClassifier* cls = classifier ? &*classifier : nullptr;

  MetricsReport report;
  if (identity_stub) {
    std::vector<int> val = dataset.split("val");
    if (val.empty())
      for (int i = 0; i < dataset.size(); ++i) val.push_back(i);
    Rng rng(cfg.seed);
    std::vector<EvalPair> pairs;
    int n = std::min<int>(cfg.eval_samples, static_cast<int>(val.size()));
    for (int i = 0; i < n; ++i) {
      const CaptionedSample& sample = dataset.get(val[i]);
      MismatchedPair mm = sample_mismatch(sample, rng);
      pairs.push_back({sample.image, sample.image, vocab.encode(mm.new_tokens)});
    }
    report = evaluate_pairs(pairs, encoders, cls, per_sample);
  } else {
    if (checkpoint.empty())
      throw ConfigError("eval needs --checkpoint (or --identity-stub)");
    std::string phase;
    Model model = load_model(cfg, checkpoint, vocab.size(), &phase);
    bool use_dcm = phase == "dcm" && cfg.ablation != "no-dcm";
    report = validate_model(model, encoders, dataset, vocab, use_dcm,
                            cfg.eval_samples, cfg.seed, cls, per_sample);
  }

  std::cout << format_metrics(report);
  std::string record_path =
      record.empty() ? cfg.resolve(cfg.out) + "/eval_metrics.json"
                     : cfg.resolve(record);
  std::filesystem::path record_dir =
      std::filesystem::path(record_path).parent_path();
  if (!record_dir.empty()) std::filesystem::create_directories(record_dir);
  write_metrics_record(report, record_path);
  std::cout << "record: " << record_path << "\n";
  return 0;
}

int cmd_manipulate(const RunConfig& cfg, const std::string& image_path,
                   const std::string& text, const std::string& checkpoint,
                   const std::string& out_path, const std::string& grid_path) {
  Vocabulary vocab = Vocabulary::load(vocab_path(cfg));
  Encoders encoders = load_pretrained_encoders(cfg, vocab);
  std::string phase;
  Model model = load_model(cfg, checkpoint, vocab.size(), &phase);

  Tensor image = read_png_rgb(cfg.resolve(image_path));
  if (image.dim(1) != kImageResolution || image.dim(2) != kImageResolution)
    throw DimensionError("manipulate expects a 64x64 image");
  std::vector<int> tokens = vocab.encode(tokenize(text));
  if (tokens.empty()) throw ConfigError("empty caption");

  Rng rng(cfg.seed);
  std::vector<Tensor> cells;
  cells.push_back(image);
  Tensor edited;
  if (cfg.ablation == "no-main") {
    Tensor h = model.hidden_from_image(image);
    edited = to_unit_range(model.dcm_forward(h, image, tokens, encoders).image)
                 .detach();
    cells.push_back(to_cell(edited));
  } else {
    Tensor z = sample_noise(model.config().d_z, rng);
    auto packs = model.main_forward(image, tokens, z, encoders);
    for (const StagePack& pack : packs)
      cells.push_back(to_cell(to_unit_range(pack.image)));
    edited = to_unit_range(packs.back().image).detach();
    if (phase == "dcm" && cfg.ablation != "no-dcm") {
      DcmPack pack =
          model.dcm_forward(packs.back().h_fused, image, tokens, encoders);
      edited = to_unit_range(pack.image).detach();
      cells.push_back(to_cell(edited));
    }
  }

  std::string edited_path = cfg.resolve(out_path);
  std::filesystem::path edited_dir =
      std::filesystem::path(edited_path).parent_path();
  if (!edited_dir.empty()) std::filesystem::create_directories(edited_dir);
  write_png_rgb(edited_path, edited);
  std::string grid = cfg.resolve(grid_path);
  write_png_rgb(grid, assemble_grid({cells}));
  std::cout << "edited: " << edited_path << "\n";
  std::cout << "grid: " << grid << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"text-guided image manipulation pipeline"};
  app.require_subcommand(1);

  Overrides o;
  std::string checkpoint, record, image_path, text;
  std::string out_png = "manipulated.png", grid_png = "grid.png";
  bool per_sample = false, identity_stub = false;

  CLI::App* make = app.add_subcommand("make-dataset", "render the corpus");
  add_common_flags(make, o);
  CLI::App* pretrain =
      app.add_subcommand("pretrain-encoders", "train matching encoders");
  add_common_flags(pretrain, o);
  CLI::App* train = app.add_subcommand("train", "train the main module");
  add_common_flags(train, o);
  CLI::App* train_dcm_cmd =
      app.add_subcommand("train-dcm", "train the detail correction module");
  add_common_flags(train_dcm_cmd, o);
  train_dcm_cmd->add_option("--checkpoint", checkpoint, "main snapshot");
  CLI::App* eval_cmd = app.add_subcommand("eval", "measure edit quality");
  add_common_flags(eval_cmd, o);
  eval_cmd->add_option("--checkpoint", checkpoint, "model snapshot");
  eval_cmd->add_option("--record", record, "metrics record path");
  eval_cmd->add_flag("--per-sample", per_sample, "record per-sample metrics");
  eval_cmd->add_flag("--identity-stub", identity_stub,
                     "score copies of the originals");
  CLI::App* manipulate =
      app.add_subcommand("manipulate", "edit one image with a caption");
  add_common_flags(manipulate, o);
  manipulate->add_option("--image", image_path, "input PNG")->required();
  manipulate->add_option("--text", text, "target caption")->required();
  manipulate->add_option("--checkpoint", checkpoint, "model snapshot")
      ->required();
  manipulate->add_option("--out-image", out_png, "edited image path");
  manipulate->add_option("--grid", grid_png, "grid image path");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = resolve_config(o);
    if (make->parsed()) return cmd_make_dataset(cfg);
    if (pretrain->parsed()) return cmd_pretrain(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (train_dcm_cmd->parsed()) return cmd_train_dcm(cfg, checkpoint);
    if (eval_cmd->parsed())
      return cmd_eval(cfg, checkpoint, record, per_sample, identity_stub);
    if (manipulate->parsed())
      return cmd_manipulate(cfg, image_path, text, checkpoint, out_png,
                            grid_png);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}
