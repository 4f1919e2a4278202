#include "lsinet/train/adam.hpp"

#include <cmath>

#include "lsinet/errors.hpp"

namespace lsinet::train {

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, AdamMoments<T>& state,
                 double lr, const AdamConfig& config, std::size_t step) {
  if (grad.size() != param.size()) throw ShapeError("adam_update: gradient size mismatch");
  if (step == 0) throw ContractError("adam_update: step counts from 1");
  if (state.m.empty()) {
    state.m.assign(param.size(), T(0));
    state.v.assign(param.size(), T(0));
  }
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const double t = static_cast<double>(step);
  const T correction1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(config.beta2, t));
  const T rate = static_cast<T>(lr);
  const T eps = static_cast<T>(config.eps);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * g * g;
    const T m_hat = state.m[i] / correction1;
    const T v_hat = state.v[i] / correction2;
    param[i] -= rate * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template <typename T>
Adam<T>::Adam(ad::ParameterList<T> params, double lr, AdamConfig config)
    : params_(std::move(params)), moments_(params_.size()), lr_(lr), config_(config) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
}

template <typename T>
void Adam<T>::step() {
  ++steps_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    adam_update<T>(p.mutable_data(), p.grad(), moments_[i], lr_, config_, steps_);
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template void adam_update<float>(std::span<float>, std::span<const float>, AdamMoments<float>&,
                                 double, const AdamConfig&, std::size_t);
template void adam_update<double>(std::span<double>, std::span<const double>,
                                  AdamMoments<double>&, double, const AdamConfig&, std::size_t);
template class Adam<float>;
template class Adam<double>;

}  // namespace lsinet::train
