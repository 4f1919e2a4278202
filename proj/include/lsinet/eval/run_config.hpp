#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lsinet/data/window_dataset.hpp"
#include "lsinet/model/lsinet.hpp"
#include "lsinet/train/trainer.hpp"

namespace lsinet::eval {

enum class SplitRule { ett_hourly, ett_minute, ratio };

struct DatasetProfile {
  std::string name;  // canonical, also the CSV stem
  SplitRule split = SplitRule::ratio;
  data::SplitRatios ratios;
  std::size_t batch_size = 128;
  std::size_t history_length = 512;
};

/// Built-in profiles for ETTh1, ETTh2, ETTm1, ETTm2, weather and electricity
/// (case-insensitive). Other names get a 0.7/0.1/0.2 ratio profile.
DatasetProfile dataset_profile(const std::string& name);

struct RunConfig {
  std::string dataset = "ETTh1";
  std::string data_path;          // empty: $LSINET_DATA_DIR/<dataset>.csv
  std::size_t history_length = 0;  // 0: profile default
  std::size_t pred_len = 96;
  std::size_t target_patches = 64;
  std::size_t heads = 4;
  std::size_t embed_dim = 128;
  std::size_t stack = 1;
  std::size_t mlp_hidden = 128;
  std::size_t time_invariant_hidden = 0;
  std::size_t integration_depth = 1;
  std::size_t memory_dim = 128;
  double temperature = 1.0;
  train::TrainConfig train;    // its batch_size and lambda are filled by train_config()
  std::size_t batch_size = 0;  // 0: profile default
  std::uint64_t seed = 2021;   // first seed; later seeds count up
  std::size_t seeds = 5;
  bool no_msim = false;
  bool dense_gates = false;
  bool no_asrl = false;
  bool degree_normalize = false;
  bool standardize = true;
  std::size_t eval_stride = 1;
  std::string out_dir = "runs/lsinet";

  /// Defaults from the dataset profile filled in, everything validated.
  RunConfig resolved() const;
  std::vector<std::uint64_t> seed_list() const;
  /// "full" or the active switches joined with '+'.
  std::string variant_label() const;

  model::ModelConfig model_config() const;
  train::TrainConfig train_config() const;
  std::filesystem::path dataset_path() const;
};

struct ConfigKey {
  std::string key;
  std::string help;
  bool is_flag = false;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

/// Every configurable key, in echo order.
const std::vector<ConfigKey>& config_keys();

/// Throws ConfigError for unknown keys and malformed values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// `key = value` lines; '#' starts a comment.
void apply_config_stream(RunConfig& config, std::istream& in, const std::string& source);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

std::map<std::string, std::string> to_map(const RunConfig& config);
RunConfig from_map(const std::map<std::string, std::string>& values);
void write_config(const RunConfig& config, std::ostream& out);

/// Loads the CSV and builds scaled train/val/test windows.
data::DatasetSplits load_splits(const RunConfig& resolved);

}  // namespace lsinet::eval
