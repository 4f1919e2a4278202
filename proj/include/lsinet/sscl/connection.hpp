#pragma once

// Shared sparse connection learning.
//
// Each head owns a MemoryBank: one learnable row per patch index, an MLP
// encoder, and a pair predictor that maps every ordered pair (i, j) of encoded
// rows to two logits. Softmax over those logits gives the Bernoulli
// probabilities (c0, c1) of "no connection" / "connection" from patch j into
// patch i. The bank never sees input data, so its connection matrix is
// shared by every sample and variable.
//
// Pair index convention: pair (i, j) lives at flat index i * N + j, and the
// N x N gate matrix has z_ij at row i, column j.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsinet/autodiff/layers.hpp"
#include "lsinet/autodiff/tensor.hpp"
#include "lsinet/random.hpp"

namespace lsinet::sscl {

/// Lower clamp applied to probabilities before taking logs.
inline constexpr double kProbabilityFloor = 1e-8;

struct MemoryBankConfig {
  std::size_t num_patches = 64;
  std::size_t memory_dim = 128;
  // Encoder is memory_dim -> encoder_hidden... -> memory_dim (three layers).
  std::vector<std::size_t> encoder_hidden{256, 128};
  std::size_t predictor_hidden = 128;
};

template <typename T>
class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(const MemoryBankConfig& config, Rng& rng);

  std::size_t num_patches() const { return memory_.dim(0); }

  ad::Tensor<T> encoded_memory() const;
  /// [N*N, 2] logits, then softmax over the last axis.
  ad::Tensor<T> connection_logits() const;
  ad::Tensor<T> connection_probs() const;

  ad::Tensor<T>& memory() { return memory_; }
  ad::Mlp<T>& encoder() { return encoder_; }
  ad::Mlp<T>& predictor() { return predictor_; }

  void collect(const std::string& prefix, ad::ParameterList<T>& out) const;

 private:
  ad::Tensor<T> memory_;  // [N, memory_dim]
  ad::Mlp<T> encoder_;
  ad::Mlp<T> predictor_;  // 2*memory_dim -> hidden -> 2
};

/// [N, D] -> [N*N, 2D]; row i*N + j is encoded[i] ++ encoded[j].
template <typename T>
ad::Tensor<T> pair_features(const ad::Tensor<T>& encoded);

/// Two-layer predictor: relu(H W1 + b1) W2 + b2 -> [N*N, 2].
template <typename T>
ad::Tensor<T> predict_connection_logits(const ad::Tensor<T>& pairs, const ad::Mlp<T>& predictor);

/// Standard Gumbel noise -log(-log u), shape [pairs, 2].
template <typename T>
ad::Tensor<T> sample_gumbel_noise(std::size_t pairs, Rng& rng);

/// Relaxed gate z = softmax((log c + g) / tau) at class 1, for probs [..., 2].
/// Returns shape [pairs]. Throws ConfigError when tau <= 0.
template <typename T>
ad::Tensor<T> gumbel_softmax(const ad::Tensor<T>& probs, const ad::Tensor<T>& noise, double tau);
template <typename T>
ad::Tensor<T> gumbel_softmax_sample(const ad::Tensor<T>& probs, double tau, Rng& rng);

/// Forward value round(z) (z > 0.5 -> 1), gradient of z.
template <typename T>
ad::Tensor<T> harden_straight_through(const ad::Tensor<T>& z_soft);

/// 1{c1 > 0.5}; exactly 0.5 maps to 0.
template <typename T>
std::vector<T> harden_threshold(std::span<const T> c1);

/// floor(pairs * delta), robust to products like 100 * 0.15.
std::size_t top_k_count(std::size_t pairs, double delta);

/// Marks the top_k_count(c1.size(), delta) largest entries with 1. Ties go to
/// the lowest flat index.
template <typename T>
std::vector<T> top_k_target(std::span<const T> c1, double delta);

/// Summed binary cross-entropy of c1 = probs[..., 1] against a fixed target.
/// (1 - c1) is read from probs[..., 0]. Probabilities are clamped to
/// [kProbabilityFloor, 1].
template <typename T>
ad::Tensor<T> asrl_loss(const ad::Tensor<T>& probs, std::span<const T> target);
/// Same with the target rebuilt from the current c1 ranking.
template <typename T>
ad::Tensor<T> asrl_loss(const ad::Tensor<T>& probs, double delta);

/// 1 when epoch % eta == 0.
bool regularization_indicator(std::size_t epoch, std::size_t eta);

/// c1 column of probs [..., 2] as a plain vector.
template <typename T>
std::vector<T> class_one(const ad::Tensor<T>& probs);

/// Plain-data snapshot of one head's connection structure, N x N row-major.
struct ConnectionMatrix {
  std::size_t num_patches = 0;
  std::vector<double> probs;  // c1
  std::vector<double> z_soft;
  std::vector<double> z_hard;
  std::optional<std::vector<double>> top_k_target;

  double ones_fraction() const;  // ones in z_hard / N^2
};

}  // namespace lsinet::sscl
