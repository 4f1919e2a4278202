#include "lsinet/data/window_dataset.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "lsinet/errors.hpp"

namespace lsinet::data {

SplitBorders ratio_borders(std::size_t length, const SplitRatios& r) {
  if (r.train < 0 || r.val < 0 || r.test < 0 ||
      std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1, got (" +
                      std::to_string(r.train) + ", " + std::to_string(r.val) + ", " +
                      std::to_string(r.test) + ")");
  }
  const double t = static_cast<double>(length);
  // The 1e-9 guards products like 100 * 0.7 = 69.99999999999999.
  const auto train = static_cast<std::size_t>(std::floor(t * r.train + 1e-9));
  const auto test = static_cast<std::size_t>(std::floor(t * r.test + 1e-9));
  const std::size_t val = length - train - test;
  return {train, train + val, length};
}

SplitBorders ett_borders(std::size_t length, std::size_t steps_per_hour) {
  const std::size_t month = 30 * 24 * steps_per_hour;
  SplitBorders b{12 * month, 16 * month, 20 * month};
  if (length < b.test_end) {
    throw ConfigError("ETT split needs " + std::to_string(b.test_end) + " rows, table has " +
                      std::to_string(length));
  }
  return b;
}

WindowDataset::WindowDataset(std::shared_ptr<const SeriesTable> table, std::size_t begin,
                             std::size_t end, std::size_t history_length,
                             std::size_t horizon, std::size_t stride)
    : table_(std::move(table)),
      begin_(begin),
      end_(end),
      history_(history_length),
      horizon_(horizon),
      stride_(stride) {
  if (stride_ == 0) throw ConfigError("window stride must be at least 1");
  if (end_ > table_->length() || begin_ > end_) {
    throw ConfigError("window range [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") outside table of length " + std::to_string(table_->length()));
  }
  const std::size_t span = end_ - begin_;
  num_windows_ = span >= history_ + horizon_ ? (span - history_ - horizon_) / stride_ + 1 : 0;
}

void WindowDataset::history(std::size_t window, std::size_t variable,
                            std::span<double> out) const {
  const std::size_t start = window_start(window);
  for (std::size_t i = 0; i < history_; ++i) out[i] = table_->at(start + i, variable);
}

void WindowDataset::future(std::size_t window, std::size_t variable,
                           std::span<double> out) const {
  const std::size_t start = window_start(window) + history_;
  for (std::size_t i = 0; i < horizon_; ++i) out[i] = table_->at(start + i, variable);
}

Batch make_batch(const WindowDataset& dataset, std::span<const std::size_t> windows) {
  Batch batch;
  const std::size_t vars = dataset.num_variables();
  batch.rows = windows.size() * vars;
  batch.history_length = dataset.history_length();
  batch.horizon = dataset.horizon();
  batch.history.resize(batch.rows * batch.history_length);
  batch.future.resize(batch.rows * batch.horizon);
  std::size_t row = 0;
  for (std::size_t w : windows) {
    for (std::size_t v = 0; v < vars; ++v, ++row) {
      dataset.history(w, v,
                      std::span(batch.history).subspan(row * batch.history_length,
                                                       batch.history_length));
      dataset.future(w, v, std::span(batch.future).subspan(row * batch.horizon, batch.horizon));
    }
  }
  return batch;
}

std::vector<std::vector<std::size_t>> batch_windows(std::size_t num_windows,
                                                    std::size_t batch_size, Rng* rng) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(num_windows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (rng) {
    for (std::size_t i = num_windows; i > 1; --i) {
      std::swap(order[i - 1], order[rng->below(i)]);
    }
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < num_windows; i += batch_size) {
    const std::size_t end = std::min(num_windows, i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

DatasetSplits make_splits(SeriesTable table, const SplitBorders& b,
                          const SplitOptions& options) {
  const std::size_t n = options.history_length;
  const std::size_t horizon = options.horizon;
  if (n == 0 || horizon == 0) throw ConfigError("history and prediction length must be positive");
  if (!(b.train_end <= b.val_end && b.val_end <= b.test_end && b.test_end <= table.length())) {
    throw ConfigError("split borders are not ordered within the table");
  }

  auto require_window = [&](const char* name, std::size_t target_rows, std::size_t span) {
    if (target_rows < horizon || span < n + horizon) {
      throw ConfigError(std::string(name) + " split too small to form one window (" +
                        std::to_string(target_rows) + " target rows, history " +
                        std::to_string(n) + ", horizon " + std::to_string(horizon) + ")");
    }
  };
  require_window("train", b.train_end, b.train_end);
  require_window("val", b.val_end - b.train_end, b.val_end - (b.train_end >= n ? b.train_end - n : 0));
  require_window("test", b.test_end - b.val_end, b.test_end - (b.val_end >= n ? b.val_end - n : 0));
  if (b.train_end < n || b.val_end < n) {
    throw ConfigError("history length " + std::to_string(n) + " exceeds the rows before a split");
  }

  DatasetSplits splits;
  if (options.standardize) {
    splits.scaler = StandardScaler::fit(table, 0, b.train_end);
    splits.scaler.transform(table);
    splits.scaled = true;
  }
  auto shared = std::make_shared<const SeriesTable>(std::move(table));
  splits.table = shared;
  splits.train = WindowDataset(shared, 0, b.train_end, n, horizon, 1);
  splits.val = WindowDataset(shared, b.train_end - n, b.val_end, n, horizon, options.eval_stride);
  splits.test = WindowDataset(shared, b.val_end - n, b.test_end, n, horizon, options.eval_stride);
  return splits;
}

}  // namespace lsinet::data
