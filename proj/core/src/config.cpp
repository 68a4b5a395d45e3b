#include "manigan/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>

#include "manigan/errors.hpp"

namespace manigan {
namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
}

float to_float(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    float v = std::stof(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + value +
                      "'");
  }
}

using Setter = std::function<void(RunConfig&, const std::string&,
                                  const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"root", [](RunConfig& c, const std::string&, const std::string& v) { c.root = v; }},
      {"data", [](RunConfig& c, const std::string&, const std::string& v) { c.data = v; }},
      {"out", [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; }},
      {"n_train", [](RunConfig& c, const std::string& k, const std::string& v) { c.n_train = to_int(k, v); }},
      {"n_val", [](RunConfig& c, const std::string& k, const std::string& v) { c.n_val = to_int(k, v); }},
      {"n_test", [](RunConfig& c, const std::string& k, const std::string& v) { c.n_test = to_int(k, v); }},
      {"epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.epochs = to_int(k, v); }},
      {"dcm_epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.dcm_epochs = to_int(k, v); }},
      {"batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.batch_size = to_int(k, v); }},
      {"lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.lr = to_float(k, v); }},
      {"lambda1", [](RunConfig& c, const std::string& k, const std::string& v) { c.lambda1 = to_float(k, v); }},
      {"lambda2", [](RunConfig& c, const std::string& k, const std::string& v) { c.lambda2 = to_float(k, v); }},
      {"lambda3", [](RunConfig& c, const std::string& k, const std::string& v) { c.lambda3 = to_float(k, v); }},
      {"lambda4", [](RunConfig& c, const std::string& k, const std::string& v) { c.lambda4 = to_float(k, v); }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); }},
      {"eval_every", [](RunConfig& c, const std::string& k, const std::string& v) { c.eval_every = to_int(k, v); }},
      {"eval_samples", [](RunConfig& c, const std::string& k, const std::string& v) { c.eval_samples = to_int(k, v); }},
      {"pretrain_epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain_epochs = to_int(k, v); }},
      {"pretrain_batch", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain_batch = to_int(k, v); }},
      {"pretrain_lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain_lr = to_float(k, v); }},
      {"classifier_epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.classifier_epochs = to_int(k, v); }},
      {"ablation", [](RunConfig& c, const std::string&, const std::string& v) { c.ablation = v; }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [key, setter] : setters()) out.push_back(key);
    return out;
  }();
  return keys;
}

void set_run_config_key(RunConfig& config, const std::string& key,
                        const std::string& value) {
  auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(config, key, value);
}

RunConfig load_run_config(const std::string& path, RunConfig defaults) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  RunConfig config = std::move(defaults);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string text = line;
    size_t hash = text.find('#');
    if (hash != std::string::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    size_t eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(number) +
                        ": expected 'key = value'");
    std::string key = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(number) + ": empty key");
    try {
      set_run_config_key(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

void RunConfig::validate() const {
  if (n_train < 1 || n_val < 0 || n_test < 0)
    throw ConfigError("dataset sizes must be positive");
  if (epochs < 1 || dcm_epochs < 1 || pretrain_epochs < 1 ||
      classifier_epochs < 1)
    throw ConfigError("epoch counts must be positive");
  if (batch_size < 1 || pretrain_batch < 2)
    throw ConfigError("batch sizes are too small");
  if (lr <= 0.0f || pretrain_lr <= 0.0f)
    throw ConfigError("learning rates must be positive");
  if (eval_every < 1 || eval_samples < 1)
    throw ConfigError("evaluation cadence must be positive");
  static const char* kAblations[] = {"none", "no-acm", "concat", "no-main",
                                     "no-dcm"};
  bool known = false;
  for (const char* a : kAblations) known = known || ablation == a;
  if (!known) throw ConfigError("unknown ablation: " + ablation);
}

std::string RunConfig::resolve(const std::string& path) const {
  if (path.empty()) return root;
  if (path.front() == '/') return path;
  if (root.empty() || root == ".") return path;
  return root + "/" + path;
}

}  // namespace manigan
