#include "lsinet/autodiff/layers.hpp"

#include <cmath>

#include "lsinet/autodiff/ops.hpp"
#include "lsinet/errors.hpp"

namespace lsinet::ad {

template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from_data(std::move(shape), std::move(data), true);
}

template <typename T>
Tensor<T> normal_parameter(Shape shape, double stddev, Rng& rng) {
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.normal(0.0, stddev));
  return Tensor<T>::from_data(std::move(shape), std::move(data), true);
}

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features, bool bias, Rng& rng) {
  if (in_features == 0 || out_features == 0) throw ConfigError("linear layer with zero width");
  weight_ = kaiming_uniform<T>({in_features, out_features}, in_features, rng);
  if (bias) bias_ = kaiming_uniform<T>({out_features}, in_features, rng);
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> y = matmul(x, weight_);
  return has_bias() ? add(y, bias_) : y;
}

template <typename T>
Tensor<T> Linear<T>::along_axis1(const Tensor<T>& x) const {
  if (x.rank() != 3 || x.dim(1) != in_features()) {
    throw ShapeError("along_axis1: expected [B, " + std::to_string(in_features()) +
                     ", C], got " + shape_to_string(x.shape()));
  }
  Tensor<T> y = matmul(transpose(weight_, 0, 1), x);
  if (!has_bias()) return y;
  // b 1^T as an [out, C] matrix so the bias broadcasts over the batch.
  const Tensor<T> ones = Tensor<T>::full({1, x.dim(2)}, T(1));
  return add(y, matmul(reshape(bias_, {out_features(), 1}), ones));
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".weight", weight_});
  if (has_bias()) out.push_back({prefix + ".bias", bias_});
}

template <typename T>
Mlp<T>::Mlp(const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.emplace_back(widths[i], widths[i + 1], true, rng);
  }
}

template <typename T>
Tensor<T> Mlp<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    if (i + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

template <typename T>
Tensor<T> Mlp<T>::along_axis1(const Tensor<T>& x) const {
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].along_axis1(h);
    if (i + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

template <typename T>
void Mlp<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect(prefix + "." + std::to_string(i), out);
  }
}

template Tensor<float> kaiming_uniform<float>(Shape, std::size_t, Rng&);
template Tensor<double> kaiming_uniform<double>(Shape, std::size_t, Rng&);
template Tensor<float> normal_parameter<float>(Shape, double, Rng&);
template Tensor<double> normal_parameter<double>(Shape, double, Rng&);
template class Linear<float>;
template class Linear<double>;
template class Mlp<float>;
template class Mlp<double>;

}  // namespace lsinet::ad
