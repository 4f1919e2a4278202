#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "lsinet/data/series_table.hpp"
#include "lsinet/random.hpp"

namespace lsinet::data {

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

/// Row borders of three contiguous chronological splits:
/// train [0, train_end), val [train_end, val_end), test [val_end, test_end).
struct SplitBorders {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t test_end = 0;
};

// train = floor(T * r.train), test = floor(T * r.test), val takes the rest.
SplitBorders ratio_borders(std::size_t length, const SplitRatios& ratios);
// ETT convention: 12/4/4 months of the first 20 months (0.6/0.2/0.2);
// later rows are unused. `steps_per_hour` is 1 for ETTh*, 4 for ETTm*.
SplitBorders ett_borders(std::size_t length, std::size_t steps_per_hour);

/// Sliding (history, future) windows over rows [begin, end) of a table, one
/// sample per (window, variable). Future targets never leave [begin, end).
class WindowDataset {
 public:
  WindowDataset() = default;
  WindowDataset(std::shared_ptr<const SeriesTable> table, std::size_t begin,
                std::size_t end, std::size_t history_length, std::size_t horizon,
                std::size_t stride = 1);

  std::size_t num_windows() const { return num_windows_; }
  std::size_t num_variables() const { return table_ ? table_->num_variables() : 0; }
  /// Samples = windows x variables.
  std::size_t size() const { return num_windows_ * num_variables(); }
  std::size_t history_length() const { return history_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t begin() const { return begin_; }
  std::size_t end() const { return end_; }

  /// First row of the history of window `w`.
  std::size_t window_start(std::size_t w) const { return begin_ + w * stride_; }
  void history(std::size_t window, std::size_t variable, std::span<double> out) const;
  void future(std::size_t window, std::size_t variable, std::span<double> out) const;

 private:
  std::shared_ptr<const SeriesTable> table_;
  std::size_t begin_ = 0;
  std::size_t end_ = 0;
  std::size_t history_ = 0;
  std::size_t horizon_ = 0;
  std::size_t stride_ = 1;
  std::size_t num_windows_ = 0;
};

/// Rows ordered window-major, variable-minor.
struct Batch {
  std::size_t rows = 0;
  std::size_t history_length = 0;
  std::size_t horizon = 0;
  std::vector<double> history;  // rows x history_length
  std::vector<double> future;   // rows x horizon
};

Batch make_batch(const WindowDataset& dataset, std::span<const std::size_t> windows);

/// Window indices grouped into batches; shuffled with `rng` when given.
std::vector<std::vector<std::size_t>> batch_windows(std::size_t num_windows,
                                                    std::size_t batch_size, Rng* rng);

struct DatasetSplits {
  std::shared_ptr<const SeriesTable> table;  // scaled when scaling is on
  StandardScaler scaler;
  bool scaled = false;
  WindowDataset train;
  WindowDataset val;
  WindowDataset test;
};

struct SplitOptions {
  std::size_t history_length = 0;
  std::size_t horizon = 0;
  bool standardize = true;      // z-score with train-split statistics
  std::size_t eval_stride = 1;  // window stride for val/test
};

// Val and test windows take their history from up to n rows before the split
// start. Throws ConfigError when any split cannot hold a single window.
DatasetSplits make_splits(SeriesTable table, const SplitBorders& borders,
                          const SplitOptions& options);

}  // namespace lsinet::data
