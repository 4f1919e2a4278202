#include "lsinet/eval/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "lsinet/errors.hpp"
#include "lsinet/patch/patch_encoding.hpp"

namespace lsinet::eval {
namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& value) {
  Int out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ConfigError("invalid value '" + value + "' for " + key + ": expected a whole number");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ConfigError("invalid value '" + value + "' for " + key + ": expected a number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = lower(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("invalid value '" + value + "' for " + key + ": expected true or false");
}

std::string show(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}
std::string show(std::size_t v) { return std::to_string(v); }
std::string show(std::uint64_t v, int) { return std::to_string(v); }
std::string show(bool v) { return v ? "true" : "false"; }

ConfigKey size_key(std::string key, std::string help, std::size_t RunConfig::*field) {
  return {key, std::move(help), false, [field](const RunConfig& c) { return show(c.*field); },
          [key, field](RunConfig& c, const std::string& v) {
            c.*field = parse_int<std::size_t>(key, v);
          }};
}

ConfigKey train_size_key(std::string key, std::string help,
                         std::size_t train::TrainConfig::*field) {
  return {key, std::move(help), false,
          [field](const RunConfig& c) { return show(c.train.*field); },
          [key, field](RunConfig& c, const std::string& v) {
            c.train.*field = parse_int<std::size_t>(key, v);
          }};
}

ConfigKey train_double_key(std::string key, std::string help, double train::TrainConfig::*field) {
  return {key, std::move(help), false,
          [field](const RunConfig& c) { return show(c.train.*field); },
          [key, field](RunConfig& c, const std::string& v) {
            c.train.*field = parse_double(key, v);
          }};
}

ConfigKey flag_key(std::string key, std::string help, bool RunConfig::*field) {
  return {key, std::move(help), true, [field](const RunConfig& c) { return show(c.*field); },
          [key, field](RunConfig& c, const std::string& v) { c.*field = parse_bool(key, v); }};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  k.push_back({"dataset", "dataset name (ETTh1, ETTh2, ETTm1, ETTm2, weather, electricity)",
               false, [](const RunConfig& c) { return c.dataset; },
               [](RunConfig& c, const std::string& v) { c.dataset = v; }});
  k.push_back({"data", "CSV path (default $LSINET_DATA_DIR/<dataset>.csv)", false,
               [](const RunConfig& c) { return c.data_path; },
               [](RunConfig& c, const std::string& v) { c.data_path = v; }});
  k.push_back(size_key("history_len", "history length n (0: dataset default)",
                       &RunConfig::history_length));
  k.push_back(size_key("pred_len", "prediction length P", &RunConfig::pred_len));
  k.push_back(size_key("patches", "target patch count", &RunConfig::target_patches));
  k.push_back(size_key("heads", "interaction heads", &RunConfig::heads));
  k.push_back(size_key("embed_dim", "patch embedding width D", &RunConfig::embed_dim));
  k.push_back(size_key("stack", "stacked STI blocks", &RunConfig::stack));
  k.push_back(size_key("mlp_hidden", "hidden width of the MLPs", &RunConfig::mlp_hidden));
  k.push_back(size_key("time_invariant_hidden",
                       "hidden width of the time-invariant map (0: single linear map)",
                       &RunConfig::time_invariant_hidden));
  k.push_back(size_key("integration_depth", "hidden layers of the integration MLP",
                       &RunConfig::integration_depth));
  k.push_back(size_key("memory_dim", "memory embedding width", &RunConfig::memory_dim));
  k.push_back({"temperature", "Gumbel-Softmax temperature", false,
               [](const RunConfig& c) { return show(c.temperature); },
               [](RunConfig& c, const std::string& v) {
                 c.temperature = parse_double("temperature", v);
               }});
  k.push_back(train_size_key("epochs", "training epochs", &train::TrainConfig::epochs));
  k.push_back(train_double_key("lr", "Adam learning rate", &train::TrainConfig::learning_rate));
  k.push_back(size_key("batch_size", "windows per batch (0: dataset default)",
                       &RunConfig::batch_size));
  k.push_back(train_size_key("eval_batch_size", "windows per evaluation batch (0: batch_size)",
                             &train::TrainConfig::eval_batch_size));
  k.push_back(train_size_key("eta", "regularize every eta-th epoch", &train::TrainConfig::eta));
  k.push_back(train_double_key("delta", "fraction of connections kept by the sparse target",
                               &train::TrainConfig::delta));
  k.push_back(train_double_key("lambda", "sparse regularization weight",
                               &train::TrainConfig::lambda));
  k.push_back({"beta1", "Adam beta1", false,
               [](const RunConfig& c) { return show(c.train.adam.beta1); },
               [](RunConfig& c, const std::string& v) {
                 c.train.adam.beta1 = parse_double("beta1", v);
               }});
  k.push_back({"beta2", "Adam beta2", false,
               [](const RunConfig& c) { return show(c.train.adam.beta2); },
               [](RunConfig& c, const std::string& v) {
                 c.train.adam.beta2 = parse_double("beta2", v);
               }});
  k.push_back({"adam_eps", "Adam epsilon", false,
               [](const RunConfig& c) { return show(c.train.adam.eps); },
               [](RunConfig& c, const std::string& v) {
                 c.train.adam.eps = parse_double("adam_eps", v);
               }});
  k.push_back(train_double_key("grad_clip", "global gradient norm clip (0: off)",
                               &train::TrainConfig::grad_clip));
  k.push_back({"freeze_top_k", "build the sparse target once per regularized epoch", true,
               [](const RunConfig& c) { return show(c.train.freeze_top_k); },
               [](RunConfig& c, const std::string& v) {
                 c.train.freeze_top_k = parse_bool("freeze_top_k", v);
               }});
  k.push_back(train_size_key("max_batches", "cap on batches per epoch (0: all)",
                             &train::TrainConfig::max_batches_per_epoch));
  k.push_back({"seed", "first seed", false, [](const RunConfig& c) { return show(c.seed, 0); },
               [](RunConfig& c, const std::string& v) {
                 c.seed = parse_int<std::uint64_t>("seed", v);
               }});
  k.push_back(size_key("seeds", "number of seeds (seed, seed+1, ...)", &RunConfig::seeds));
  k.push_back(flag_key("no_msim", "replace learned gates by the identity", &RunConfig::no_msim));
  k.push_back(flag_key("dense_gates", "use connection probabilities as dense gates",
                       &RunConfig::dense_gates));
  k.push_back(flag_key("no_asrl", "disable the sparse regularization loss", &RunConfig::no_asrl));
  k.push_back(flag_key("degree_normalize", "divide each gate row by max(1, row sum)",
                       &RunConfig::degree_normalize));
  k.push_back({"no_scale", "skip the train-split standard scaler", true,
               [](const RunConfig& c) { return show(!c.standardize); },
               [](RunConfig& c, const std::string& v) {
                 c.standardize = !parse_bool("no_scale", v);
               }});
  k.push_back(size_key("eval_stride", "window stride of validation and test",
                       &RunConfig::eval_stride));
  k.push_back({"out", "output directory", false, [](const RunConfig& c) { return c.out_dir; },
               [](RunConfig& c, const std::string& v) { c.out_dir = v; }});
  return k;
}

}  // namespace

DatasetProfile dataset_profile(const std::string& name) {
  const std::string key = lower(name);
  DatasetProfile p;
  if (key == "etth1" || key == "etth2") {
    p.name = key == "etth1" ? "ETTh1" : "ETTh2";
    p.split = SplitRule::ett_hourly;
    p.ratios = {0.6, 0.2, 0.2};
  } else if (key == "ettm1" || key == "ettm2") {
    p.name = key == "ettm1" ? "ETTm1" : "ETTm2";
    p.split = SplitRule::ett_minute;
    p.ratios = {0.6, 0.2, 0.2};
  } else if (key == "weather") {
    p.name = "weather";
    p.batch_size = 64;
  } else if (key == "electricity" || key == "ecl") {
    p.name = "electricity";
    p.batch_size = 32;
  } else {
    p.name = name;
  }
  return p;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.key == key) {
      k.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

void apply_config_stream(RunConfig& config, std::istream& in, const std::string& source) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    try {
      apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  apply_config_stream(config, in, path.string());
}

std::map<std::string, std::string> to_map(const RunConfig& config) {
  std::map<std::string, std::string> out;
  for (const auto& k : config_keys()) out[k.key] = k.get(config);
  return out;
}

RunConfig from_map(const std::map<std::string, std::string>& values) {
  RunConfig c;
  for (const auto& [key, value] : values) apply_setting(c, key, value);
  return c;
}

void write_config(const RunConfig& config, std::ostream& out) {
  for (const auto& k : config_keys()) out << k.key << " = " << k.get(config) << '\n';
}

RunConfig RunConfig::resolved() const {
  RunConfig r = *this;
  const DatasetProfile profile = dataset_profile(dataset);
  r.dataset = profile.name;
  if (r.history_length == 0) r.history_length = profile.history_length;
  if (r.batch_size == 0) r.batch_size = profile.batch_size;
  if (r.train.eval_batch_size == 0) r.train.eval_batch_size = r.batch_size;
  if (r.seeds == 0) throw ConfigError("at least one seed is required");
  if (r.eval_stride == 0) throw ConfigError("eval_stride must be at least 1");
  r.model_config().validate();
  r.train_config().validate();
  return r;
}

std::vector<std::uint64_t> RunConfig::seed_list() const {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < seeds; ++i) out.push_back(seed + i);
  return out;
}

std::string RunConfig::variant_label() const {
  std::vector<std::string> parts;
  if (no_msim) parts.push_back("no_msim");
  if (dense_gates) parts.push_back("dense_gates");
  if (no_asrl) parts.push_back("no_asrl");
  if (degree_normalize) parts.push_back("degree_normalize");
  if (parts.empty()) return "full";
  std::string label = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) label += "+" + parts[i];
  return label;
}

model::ModelConfig RunConfig::model_config() const {
  if (history_length == 0) throw ContractError("model_config() needs a resolved history length");
  model::ModelConfig m;
  m.patch = patch::derive_patch_geometry(history_length, target_patches, embed_dim);
  m.horizon = pred_len;
  m.heads = heads;
  m.stack = stack;
  m.mlp_hidden = mlp_hidden;
  m.time_invariant_hidden = time_invariant_hidden;
  m.integration_depth = integration_depth;
  m.memory.num_patches = m.patch.num_patches;
  m.memory.memory_dim = memory_dim;
  m.memory.encoder_hidden = {2 * memory_dim, memory_dim};
  m.memory.predictor_hidden = mlp_hidden;
  m.temperature = temperature;
  m.no_msim = no_msim;
  m.dense_gates = dense_gates;
  m.degree_normalize = degree_normalize;
  return m;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig t = train;
  t.batch_size = batch_size;
  if (no_asrl) t.lambda = 0.0;
  return t;
}

std::filesystem::path RunConfig::dataset_path() const {
  if (!data_path.empty()) return data_path;
  const char* dir = std::getenv("LSINET_DATA_DIR");
  const std::filesystem::path base = dir != nullptr && *dir != '\0' ? dir : "data";
  return base / (dataset_profile(dataset).name + ".csv");
}

data::DatasetSplits load_splits(const RunConfig& resolved) {
  const std::filesystem::path path = resolved.dataset_path();
  if (!std::filesystem::exists(path)) {
    throw ConfigError("dataset file not found: " + path.string() +
                      " (pass --data or set LSINET_DATA_DIR)");
  }
  data::SeriesTable table = data::load_csv(path);
  const DatasetProfile profile = dataset_profile(resolved.dataset);
  data::SplitBorders borders;
  switch (profile.split) {
    case SplitRule::ett_hourly:
      borders = data::ett_borders(table.length(), 1);
      break;
    case SplitRule::ett_minute:
      borders = data::ett_borders(table.length(), 4);
      break;
    case SplitRule::ratio:
      borders = data::ratio_borders(table.length(), profile.ratios);
      break;
  }
  data::SplitOptions options;
  options.history_length = resolved.history_length;
  options.horizon = resolved.pred_len;
  options.standardize = resolved.standardize;
  options.eval_stride = resolved.eval_stride;
  return data::make_splits(std::move(table), borders, options);
}

}  // namespace lsinet::eval
