#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lsinet/autodiff/tensor.hpp"
#include "lsinet/model/lsinet.hpp"

namespace lsinet::eval {

inline constexpr double kGradcheckTolerance = 1e-3;

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t entries = 0;  // perturbed scalars
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Compares backward() against central differences for every entry of every
/// tensor in `wrt` (leaves with requires_grad). `loss` must rebuild the graph
/// from the current leaf values on each call and be deterministic.
GradCheckResult finite_difference_check(std::string name,
                                        const std::function<ad::Tensor<double>()>& loss,
                                        const std::vector<ad::Tensor<double>>& wrt,
                                        double eps = 1e-5, double floor = 1e-6);

/// N=4, D=8, h=2, S=1, P=3 with narrow hidden layers.
model::ModelConfig tiny_model_config();

/// Every op, the connection pipeline and the whole tiny model (relaxed gates,
/// MSE plus ASRL against a fixed target).
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed);

}  // namespace lsinet::eval
