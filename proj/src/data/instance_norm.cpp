#include "lsinet/data/instance_norm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lsinet/errors.hpp"

namespace lsinet::data {

InstanceNormState instance_norm(std::span<const double> history, std::span<double> normalized) {
  if (history.size() < 2) {
    throw ContractError("instance_norm needs at least 2 values, got " +
                        std::to_string(history.size()));
  }
  if (normalized.size() != history.size()) {
    throw ShapeError("instance_norm output length differs from input length");
  }
  const double count = static_cast<double>(history.size());
  double mean = 0.0;
  for (double v : history) mean += v;
  mean /= count;
  double var = 0.0;
  for (double v : history) var += (v - mean) * (v - mean);
  var /= count;
  const double stddev = std::max(std::sqrt(var), kStdFloor);
  for (std::size_t i = 0; i < history.size(); ++i) normalized[i] = (history[i] - mean) / stddev;
  return {mean, stddev};
}

void denorm(std::span<double> prediction, const InstanceNormState& state) {
  for (double& v : prediction) v = v * state.stddev + state.mean;
}

std::vector<InstanceNormState> instance_norm_rows(std::span<const double> rows_data,
                                                  std::size_t length,
                                                  std::span<double> normalized) {
  if (length == 0 || rows_data.size() % length != 0 || normalized.size() != rows_data.size()) {
    throw ShapeError("instance_norm_rows: block is not a whole number of rows");
  }
  const std::size_t rows = rows_data.size() / length;
  std::vector<InstanceNormState> states(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    states[r] = instance_norm(rows_data.subspan(r * length, length),
                              normalized.subspan(r * length, length));
  }
  return states;
}

void denorm_rows(std::span<double> rows_data, std::size_t length,
                 std::span<const InstanceNormState> states) {
  if (rows_data.size() != states.size() * length) {
    throw ShapeError("denorm_rows: row count does not match state count");
  }
  for (std::size_t r = 0; r < states.size(); ++r) {
    denorm(rows_data.subspan(r * length, length), states[r]);
  }
}

}  // namespace lsinet::data
