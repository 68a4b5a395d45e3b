#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace manigan {

/// Everything the command-line pipeline needs, filled in three layers:
/// defaults, then a `key = value` config file, then flag overrides.
struct RunConfig {
  std::string root = ".";       // base directory for all relative paths
  std::string data = "data";    // dataset root
  std::string out = "runs";     // artifact directory
  int n_train = 512;
  int n_val = 64;
  int n_test = 64;
  int epochs = 60;
  int dcm_epochs = 20;
  int batch_size = 16;
  float lr = 2e-4f;
  float lambda1 = 1.0f;
  float lambda2 = 1.0f;
  float lambda3 = 1.0f;
  float lambda4 = 1.0f;
  uint64_t seed = 1;
  int eval_every = 5;
  int eval_samples = 64;
  int pretrain_epochs = 12;
  int pretrain_batch = 16;
  float pretrain_lr = 1e-3f;
  int classifier_epochs = 6;
  std::string ablation = "none";

  void validate() const;
  /// root-relative resolution of a possibly relative path.
  std::string resolve(const std::string& path) const;
};

/// Known config keys, for diagnostics.
const std::vector<std::string>& run_config_keys();

/// Applies one key/value pair; throws ConfigError on unknown keys or
/// unparsable values.
void set_run_config_key(RunConfig& config, const std::string& key,
                        const std::string& value);

/// Reads a config file over the given defaults. Lines are `key = value`;
/// blank lines and `#` comments are ignored. Errors name the line.
RunConfig load_run_config(const std::string& path, RunConfig defaults = {});

}  // namespace manigan
