#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lsinet/autodiff/layers.hpp"

namespace lsinet::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamMoments {
  std::vector<T> m;
  std::vector<T> v;
};

/// One bias-corrected Adam step on a flat parameter. `step` counts from 1.
/// Zero-sized moments are initialised on first use.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, AdamMoments<T>& state,
                 double lr, const AdamConfig& config, std::size_t step);

/// Adam over a parameter list. Parameters without a gradient are skipped.
template <typename T>
class Adam {
 public:
  Adam(ad::ParameterList<T> params, double lr, AdamConfig config = {});

  void step();
  void zero_grad();
  std::size_t steps() const { return steps_; }
  double learning_rate() const { return lr_; }
  const ad::ParameterList<T>& parameters() const { return params_; }

 private:
  ad::ParameterList<T> params_;
  std::vector<AdamMoments<T>> moments_;
  double lr_;
  AdamConfig config_;
  std::size_t steps_ = 0;
};

}  // namespace lsinet::train
