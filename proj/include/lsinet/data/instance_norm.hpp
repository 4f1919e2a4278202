#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lsinet::data {

/// Standard deviations below this are raised to it before dividing.
inline constexpr double kStdFloor = 1e-5;

/// Statistics of one history window (population standard deviation).
struct InstanceNormState {
  double mean = 0.0;
  double stddev = 1.0;
};

// Writes (history - mean) / std into `normalized`. Requires >= 2 values.
InstanceNormState instance_norm(std::span<const double> history, std::span<double> normalized);

// prediction * std + mean, in place.
void denorm(std::span<double> prediction, const InstanceNormState& state);

/// Row-wise normalization of a [rows x length] block.
std::vector<InstanceNormState> instance_norm_rows(std::span<const double> rows_data,
                                                  std::size_t length,
                                                  std::span<double> normalized);
void denorm_rows(std::span<double> rows_data, std::size_t length,
                 std::span<const InstanceNormState> states);

}  // namespace lsinet::data
