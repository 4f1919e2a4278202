#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsinet/autodiff/tensor.hpp"
#include "lsinet/eval/run_config.hpp"
#include "lsinet/model/checkpoint.hpp"
#include "lsinet/train/trainer.hpp"

namespace lsinet::eval {

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
};

/// Means over every entry. Throws ShapeError when the shapes differ.
Metrics compute_metrics(std::span<const double> predictions, std::span<const double> targets);
Metrics compute_metrics(std::span<const double> predictions, const ad::Shape& prediction_shape,
                        std::span<const double> targets, const ad::Shape& target_shape);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population
};
MeanStd mean_std(std::span<const double> values);
/// "0.366±2e-4": mean to three decimals, deviation to one significant digit.
std::string format_mean_std(double mean, double stddev);

struct SeedRun {
  std::uint64_t seed = 0;
  train::TrainReport report;
  std::filesystem::path checkpoint;
  std::filesystem::path report_file;
};

struct VariantResult {
  std::string dataset;
  std::size_t pred_len = 0;
  std::string label;
  std::vector<SeedRun> runs;
  MeanStd mse;
  MeanStd mae;
};

/// File stem shared by a variant's outputs, e.g. "ETTh2_96_no_msim".
std::string run_stem(const RunConfig& resolved);

/// Trains every seed of one resolved config. Writes the resolved config,
/// per-epoch JSONL reports, checkpoints, and rows of metrics.tsv and
/// summary.tsv under out_dir. Progress goes to `log`.
VariantResult train_variant(const RunConfig& resolved, std::ostream& log);

/// Applies a variant spec such as "full" or "no_msim+no_asrl" to a config.
RunConfig apply_variant(const RunConfig& base, const std::string& spec);

struct CheckpointEval {
  train::EvalMetrics metrics;
  std::optional<Metrics> recorded;  // test metrics stored by train
  bool matches_recorded = false;    // bit-wise
};

/// Rebuilds the run's test split from the config stored in the checkpoint
/// (optionally with another data path) and evaluates it.
CheckpointEval evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                   const std::optional<std::string>& data_path);

enum class HeatmapKind { probs, hard, both };
HeatmapKind parse_heatmap_kind(const std::string& text);

struct HeatmapExport {
  std::size_t num_patches = 0;
  std::size_t head = 0;
  double ones_fraction = 0.0;
  std::vector<std::filesystem::path> files;  // matrices, then the sidecar
};

/// Writes head `head` (block-major across stacked blocks) as N x N
/// space-separated text plus a key = value sidecar.
HeatmapExport export_heatmap(const std::filesystem::path& checkpoint, std::size_t head,
                             HeatmapKind kind, const std::filesystem::path& out_dir);

/// Reads a matrix written by export_heatmap.
std::vector<double> read_matrix(const std::filesystem::path& path, std::size_t& rows,
                                std::size_t& cols);

struct HeatmapPattern {
  bool has_block = false;     // some 2 x 2 all-ones block
  bool has_isolated = false;  // some 1 whose 4-neighbours are all 0
};
HeatmapPattern analyze_pattern(std::span<const double> hard, std::size_t n);

int run_train(const RunConfig& config, std::ostream& out);
int run_ablate(const RunConfig& config, const std::vector<std::string>& variants,
               std::ostream& out);
int run_eval(const std::filesystem::path& checkpoint, const std::optional<std::string>& data_path,
             std::ostream& out);
int run_export_heatmap(const std::filesystem::path& checkpoint, std::size_t head,
                       const std::string& kind, const std::filesystem::path& out_dir,
                       std::ostream& out);
int run_gradcheck(std::uint64_t seed, std::ostream& out);

}  // namespace lsinet::eval
