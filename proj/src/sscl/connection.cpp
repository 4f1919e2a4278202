#include "lsinet/sscl/connection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lsinet/autodiff/ops.hpp"
#include "lsinet/errors.hpp"

namespace lsinet::sscl {
namespace {

template <typename T>
void require_pair_probs(const ad::Tensor<T>& probs, const char* op) {
  if (probs.rank() == 0 || probs.shape().back() != 2) {
    throw ShapeError(std::string(op) + ": expected probabilities of shape [..., 2], got " +
                     shape_to_string(probs.shape()));
  }
}

// [..., 2] -> [pairs, 2]
template <typename T>
ad::Tensor<T> as_pairs(const ad::Tensor<T>& probs) {
  return ad::reshape(probs, {probs.numel() / 2, 2});
}

}  // namespace

template <typename T>
MemoryBank<T>::MemoryBank(const MemoryBankConfig& config, Rng& rng) {
  if (config.num_patches == 0 || config.memory_dim == 0) {
    throw ConfigError("memory bank needs a positive patch count and width");
  }
  memory_ = ad::normal_parameter<T>({config.num_patches, config.memory_dim}, 1.0, rng);
  std::vector<std::size_t> widths{config.memory_dim};
  widths.insert(widths.end(), config.encoder_hidden.begin(), config.encoder_hidden.end());
  widths.push_back(config.memory_dim);
  encoder_ = ad::Mlp<T>(widths, rng);
  predictor_ = ad::Mlp<T>({2 * config.memory_dim, config.predictor_hidden, 2}, rng);
}

template <typename T>
ad::Tensor<T> MemoryBank<T>::encoded_memory() const {
  return encoder_(memory_);
}

template <typename T>
ad::Tensor<T> MemoryBank<T>::connection_logits() const {
  return predict_connection_logits(pair_features(encoded_memory()), predictor_);
}

template <typename T>
ad::Tensor<T> MemoryBank<T>::connection_probs() const {
  return ad::softmax(connection_logits(), 1);
}

template <typename T>
void MemoryBank<T>::collect(const std::string& prefix, ad::ParameterList<T>& out) const {
  out.push_back({prefix + ".memory", memory_});
  encoder_.collect(prefix + ".encoder", out);
  predictor_.collect(prefix + ".predictor", out);
}

template <typename T>
ad::Tensor<T> pair_features(const ad::Tensor<T>& encoded) {
  if (encoded.rank() != 2) {
    throw ShapeError("pair_features expects [N, D], got " + shape_to_string(encoded.shape()));
  }
  const std::size_t n = encoded.dim(0);
  std::vector<std::size_t> rows(n * n);
  std::vector<std::size_t> cols(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      rows[i * n + j] = i;
      cols[i * n + j] = j;
    }
  }
  return ad::concat<T>({ad::gather_rows<T>(encoded, rows), ad::gather_rows<T>(encoded, cols)}, 1);
}

template <typename T>
ad::Tensor<T> predict_connection_logits(const ad::Tensor<T>& pairs, const ad::Mlp<T>& predictor) {
  return predictor(pairs);
}

template <typename T>
ad::Tensor<T> sample_gumbel_noise(std::size_t pairs, Rng& rng) {
  std::vector<T> noise(pairs * 2);
  for (auto& g : noise) g = static_cast<T>(-std::log(-std::log(rng.uniform_open())));
  return ad::Tensor<T>::from_data({pairs, 2}, std::move(noise));
}

template <typename T>
ad::Tensor<T> gumbel_softmax(const ad::Tensor<T>& probs, const ad::Tensor<T>& noise,
                             double tau) {
  if (!(tau > 0.0)) {
    throw ConfigError("Gumbel-Softmax temperature must be positive, got " + std::to_string(tau));
  }
  require_pair_probs(probs, "gumbel_softmax");
  const ad::Tensor<T> pairs = as_pairs(probs);
  if (noise.shape() != pairs.shape()) {
    throw ShapeError("gumbel_softmax: noise shape " + shape_to_string(noise.shape()) +
                     " does not match " + shape_to_string(pairs.shape()));
  }
  const T floor = static_cast<T>(kProbabilityFloor);
  ad::Tensor<T> log_probs = ad::log(ad::clamp(pairs, floor, T(1)));
  ad::Tensor<T> relaxed =
      ad::softmax(ad::scale(ad::add(log_probs, noise), static_cast<T>(1.0 / tau)), 1);
  // Weighted sum over e in {0, 1} of e * softmax_e keeps only class 1.
  return ad::reshape(ad::slice(relaxed, 1, 1, 1), {pairs.dim(0)});
}

template <typename T>
ad::Tensor<T> gumbel_softmax_sample(const ad::Tensor<T>& probs, double tau, Rng& rng) {
  require_pair_probs(probs, "gumbel_softmax_sample");
  return gumbel_softmax(probs, sample_gumbel_noise<T>(probs.numel() / 2, rng), tau);
}

template <typename T>
ad::Tensor<T> harden_straight_through(const ad::Tensor<T>& z_soft) {
  std::vector<T> hard(z_soft.numel());
  auto soft = z_soft.data();
  for (std::size_t i = 0; i < hard.size(); ++i) hard[i] = soft[i] > T(0.5) ? T(1) : T(0);
  return ad::straight_through(z_soft, std::move(hard));
}

template <typename T>
std::vector<T> harden_threshold(std::span<const T> c1) {
  std::vector<T> hard(c1.size());
  for (std::size_t i = 0; i < c1.size(); ++i) hard[i] = c1[i] > T(0.5) ? T(1) : T(0);
  return hard;
}

std::size_t top_k_count(std::size_t pairs, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("sparsity delta must lie in (0, 1), got " + std::to_string(delta));
  }
  return static_cast<std::size_t>(std::floor(static_cast<double>(pairs) * delta + 1e-9));
}

template <typename T>
std::vector<T> top_k_target(std::span<const T> c1, double delta) {
  const std::size_t k = top_k_count(c1.size(), delta);
  std::vector<std::size_t> order(c1.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return c1[a] > c1[b]; });
  std::vector<T> target(c1.size(), T(0));
  for (std::size_t i = 0; i < k; ++i) target[order[i]] = T(1);
  return target;
}

template <typename T>
ad::Tensor<T> asrl_loss(const ad::Tensor<T>& probs, std::span<const T> target) {
  require_pair_probs(probs, "asrl_loss");
  const ad::Tensor<T> pairs = as_pairs(probs);
  const std::size_t n = pairs.dim(0);
  if (target.size() != n) {
    throw ShapeError("asrl_loss: target has " + std::to_string(target.size()) +
                     " entries for " + std::to_string(n) + " pairs");
  }
  // Column 0 of the weights multiplies log(c0) = log(1 - c1), column 1 log(c1).
  std::vector<T> weights(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    weights[2 * i] = T(1) - target[i];
    weights[2 * i + 1] = target[i];
  }
  const T floor = static_cast<T>(kProbabilityFloor);
  ad::Tensor<T> log_probs = ad::log(ad::clamp(pairs, floor, T(1)));
  ad::Tensor<T> w = ad::Tensor<T>::from_data({n, 2}, std::move(weights));
  return ad::neg(ad::sum(ad::mul(log_probs, w)));
}

template <typename T>
ad::Tensor<T> asrl_loss(const ad::Tensor<T>& probs, double delta) {
  const std::vector<T> c1 = class_one(probs);
  const std::vector<T> target = top_k_target<T>(c1, delta);
  return asrl_loss(probs, std::span<const T>(target));
}

bool regularization_indicator(std::size_t epoch, std::size_t eta) {
  if (eta == 0) throw ConfigError("regularization interval eta must be at least 1");
  return epoch % eta == 0;
}

template <typename T>
std::vector<T> class_one(const ad::Tensor<T>& probs) {
  require_pair_probs(probs, "class_one");
  auto d = probs.data();
  std::vector<T> c1(probs.numel() / 2);
  for (std::size_t i = 0; i < c1.size(); ++i) c1[i] = d[2 * i + 1];
  return c1;
}

double ConnectionMatrix::ones_fraction() const {
  if (z_hard.empty()) return 0.0;
  std::size_t ones = 0;
  for (double v : z_hard) ones += v > 0.5 ? 1 : 0;
  return static_cast<double>(ones) / static_cast<double>(z_hard.size());
}

#define LSINET_INSTANTIATE_SSCL(T)                                                         \
  template class MemoryBank<T>;                                                            \
  template ad::Tensor<T> pair_features(const ad::Tensor<T>&);                              \
  template ad::Tensor<T> predict_connection_logits(const ad::Tensor<T>&, const ad::Mlp<T>&); \
  template ad::Tensor<T> sample_gumbel_noise<T>(std::size_t, Rng&);                        \
  template ad::Tensor<T> gumbel_softmax(const ad::Tensor<T>&, const ad::Tensor<T>&, double); \
  template ad::Tensor<T> gumbel_softmax_sample(const ad::Tensor<T>&, double, Rng&);        \
  template ad::Tensor<T> harden_straight_through(const ad::Tensor<T>&);                    \
  template std::vector<T> harden_threshold(std::span<const T>);                            \
  template std::vector<T> top_k_target(std::span<const T>, double);                        \
  template ad::Tensor<T> asrl_loss(const ad::Tensor<T>&, std::span<const T>);              \
  template ad::Tensor<T> asrl_loss(const ad::Tensor<T>&, double);                          \
  template std::vector<T> class_one(const ad::Tensor<T>&);

LSINET_INSTANTIATE_SSCL(float)
LSINET_INSTANTIATE_SSCL(double)

#undef LSINET_INSTANTIATE_SSCL

}  // namespace lsinet::sscl
