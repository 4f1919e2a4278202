#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lsinet/autodiff/tensor.hpp"
#include "lsinet/random.hpp"

namespace lsinet::ad {

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) parameter.
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);
template <typename T>
Tensor<T> normal_parameter(Shape shape, double stddev, Rng& rng);

/// y = x W + b over the last axis. W is stored [in x out].
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_features, std::size_t out_features, bool bias, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;
  /// Same map applied to axis 1 of [B, in, C]: W^T x[b] + b 1^T -> [B, out, C].
  Tensor<T> along_axis1(const Tensor<T>& x) const;

  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }
  Tensor<T>& weight() { return weight_; }
  const Tensor<T>& weight() const { return weight_; }
  Tensor<T>& bias() { return bias_; }
  const Tensor<T>& bias() const { return bias_; }
  bool has_bias() const { return bias_.defined(); }

  void collect(const std::string& prefix, ParameterList<T>& out) const;

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
};

/// Linear layers with ReLU between them (none after the last).
template <typename T>
class Mlp {
 public:
  Mlp() = default;
  // widths = {in, hidden..., out}
  Mlp(const std::vector<std::size_t>& widths, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;
  Tensor<T> along_axis1(const Tensor<T>& x) const;

  std::vector<Linear<T>>& layers() { return layers_; }
  const std::vector<Linear<T>>& layers() const { return layers_; }

  void collect(const std::string& prefix, ParameterList<T>& out) const;

 private:
  std::vector<Linear<T>> layers_;
};

// Applies `f` to axis 1 of a [B, N, D] tensor by transposing N to the end.
// Linear and Mlp have a faster member along_axis1 with the same result.
template <typename T, typename F>
Tensor<T> along_axis1(const Tensor<T>& x, const F& f);

}  // namespace lsinet::ad

#include "lsinet/autodiff/ops.hpp"

namespace lsinet::ad {

template <typename T, typename F>
Tensor<T> along_axis1(const Tensor<T>& x, const F& f) {
  return transpose(f(transpose(x, 1, 2)), 1, 2);
}

}  // namespace lsinet::ad
