#pragma once

// Reference computations used by the tests. Nothing here calls the library's
// own gradient-check helpers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "lsinet/autodiff/tensor.hpp"

namespace oracle {

// Central differences of `loss` with respect to every entry of `x`.
inline std::vector<double> numeric_gradient(const std::function<double()>& loss,
                                            lsinet::ad::Tensor<double> x, double eps = 1e-5) {
  auto data = x.mutable_data();
  std::vector<double> grad(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + eps;
    const double up = loss();
    data[i] = saved - eps;
    const double down = loss();
    data[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

inline double max_relative_error(const std::vector<double>& analytic,
                                 const std::vector<double>& numeric, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

// Backward of `build()` against central differences for each tensor in `wrt`.
inline double gradient_error(const std::function<lsinet::ad::Tensor<double>()>& build,
                             const std::vector<lsinet::ad::Tensor<double>>& wrt,
                             double eps = 1e-5) {
  for (auto t : wrt) t.zero_grad();
  build().backward();
  double worst = 0.0;
  for (const auto& t : wrt) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    const auto numeric = numeric_gradient([&] { return build().item(); }, t, eps);
    worst = std::max(worst, max_relative_error(analytic, numeric));
  }
  return worst;
}

// Every length-L window at stride K over the history padded with K copies of
// its last value.
inline std::vector<std::vector<double>> enumerate_patches(const std::vector<double>& history,
                                                          std::size_t L, std::size_t K) {
  std::vector<double> padded = history;
  for (std::size_t i = 0; i < K; ++i) padded.push_back(history.back());
  std::vector<std::vector<double>> out;
  for (std::size_t s = 0; s + L <= padded.size(); s += K) {
    out.emplace_back(padded.begin() + static_cast<std::ptrdiff_t>(s),
                     padded.begin() + static_cast<std::ptrdiff_t>(s + L));
  }
  return out;
}

// -sum t log p + (1 - t) log(1 - p), one pair at a time.
inline double binary_cross_entropy(const std::vector<double>& p, const std::vector<double>& t) {
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    loss -= t[i] * std::log(p[i]) + (1.0 - t[i]) * std::log(1.0 - p[i]);
  }
  return loss;
}

inline double dense_matmul_entry(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t q, std::size_t r, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < q; ++k) s += a[i * q + k] * b[k * r + j];
  return s;
}

}  // namespace oracle
