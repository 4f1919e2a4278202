#pragma once

// The LSINet forecaster.
//
//   history --instance norm--> patches [B, N, L] --embed--> X_d [B, N, D]
//   STI (stacked S times):
//     mixed   = TimeInvariant(X_d)               linear map along N
//     V_h     = mixed W_h + b_h                  [B, N, D/h] per head
//     X_hat   = concat_h(G_h V_h)                G_h: N x N gate matrix of head h
//     out     = Integration(TimeUpdate(X_hat)) + Align(X_d)
//   prediction = flatten(out) W + b              [B, P]
//
// Gate matrices come from each head's MemoryBank and do not depend on the
// input, so one forward pass uses one gate matrix per head for every row.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lsinet/autodiff/layers.hpp"
#include "lsinet/autodiff/tensor.hpp"
#include "lsinet/patch/patch_encoding.hpp"
#include "lsinet/random.hpp"
#include "lsinet/sscl/connection.hpp"

namespace lsinet::model {

enum class GateMode {
  train,    // Gumbel sample, hardened with straight-through gradient
  infer,    // deterministic 1{c1 > 0.5}
  relaxed,  // Gumbel sample without hardening (smooth; used by gradient checks)
};

struct ModelConfig {
  patch::PatchConfig patch;
  std::size_t horizon = 96;
  std::size_t heads = 4;
  std::size_t stack = 1;
  std::size_t mlp_hidden = 128;
  // 0 keeps the time-invariant component a single N x N linear map.
  std::size_t time_invariant_hidden = 0;
  std::size_t integration_depth = 1;  // hidden layers in the integration MLP
  sscl::MemoryBankConfig memory;      // num_patches follows patch.num_patches
  double temperature = 1.0;
  bool no_msim = false;           // gates fixed to the identity
  bool dense_gates = false;       // gates are the probabilities c1 themselves
  bool degree_normalize = false;  // divide each gate row by max(1, row sum)

  void validate() const;
};

struct ForwardContext {
  GateMode mode = GateMode::infer;
  Rng* gumbel = nullptr;  // required for train and relaxed modes
};

template <typename T>
struct GateSet {
  std::vector<ad::Tensor<T>> gates;  // [N, N] per head
  std::vector<ad::Tensor<T>> probs;  // [N*N, 2] per head; empty without MSIM
};

/// One sparse temporal interaction block. Output shape equals input shape.
template <typename T>
class StiModule {
 public:
  StiModule() = default;
  StiModule(const ModelConfig& config, Rng& rng);

  struct Output {
    ad::Tensor<T> value;
    GateSet<T> gates;
  };

  Output forward(const ad::Tensor<T>& x, const ForwardContext& ctx) const;

  GateSet<T> make_gates(const ForwardContext& ctx) const;
  ad::Tensor<T> time_invariant_mix(const ad::Tensor<T>& x) const;
  ad::Tensor<T> propagate(const ad::Tensor<T>& mixed,
                          const std::vector<ad::Tensor<T>>& gates) const;
  ad::Tensor<T> time_update(const ad::Tensor<T>& x) const;
  ad::Tensor<T> integrate(const ad::Tensor<T>& x) const { return integration_(x); }
  ad::Tensor<T> align(const ad::Tensor<T>& x) const { return align_(x); }

  std::vector<sscl::ConnectionMatrix> connection_matrices() const;

  ad::Mlp<T>& time_invariant() { return time_invariant_; }
  std::vector<ad::Linear<T>>& values() { return values_; }
  std::vector<sscl::MemoryBank<T>>& banks() { return banks_; }
  ad::Mlp<T>& time_updater() { return time_update_; }
  ad::Linear<T>& aligner() { return align_; }
  ad::Mlp<T>& integration() { return integration_; }

  void collect(const std::string& prefix, ad::ParameterList<T>& out) const;

 private:
  ModelConfig config_;
  ad::Mlp<T> time_invariant_;          // along N
  std::vector<ad::Linear<T>> values_;  // D -> D/h per head
  std::vector<sscl::MemoryBank<T>> banks_;
  ad::Mlp<T> time_update_;             // along N: N -> hidden -> N
  ad::Linear<T> align_;                // D -> D, identity at init
  ad::Mlp<T> integration_;             // along D
};

/// concat_h(gate_h @ value_h(mixed)) over the feature axis.
template <typename T>
ad::Tensor<T> multi_head_propagate(const ad::Tensor<T>& mixed,
                                   const std::vector<ad::Tensor<T>>& gates,
                                   const std::vector<ad::Linear<T>>& values);

template <typename T>
class LsiNet {
 public:
  LsiNet(const ModelConfig& config, std::uint64_t seed);

  struct Output {
    ad::Tensor<T> prediction;                // [B, P], instance-normalized scale
    std::vector<ad::Tensor<T>> head_probs;   // every head of every block
  };

  const ModelConfig& config() const { return config_; }

  Output forward(const ad::Tensor<T>& patches, const ForwardContext& ctx) const;
  /// From instance-normalized histories [rows x n].
  Output forward_normalized(std::span<const double> histories, std::size_t rows,
                            const ForwardContext& ctx) const;
  /// Raw histories in, forecasts on the same scale out (inference gates).
  std::vector<double> predict(std::span<const double> histories, std::size_t rows) const;

  ad::ParameterList<T> parameters() const;
  /// Inference-mode snapshot of every head, block-major.
  std::vector<sscl::ConnectionMatrix> connection_matrices() const;

  patch::PatchEmbedding<T>& embedding() { return embedding_; }
  std::vector<StiModule<T>>& blocks() { return blocks_; }
  ad::Linear<T>& head() { return predictor_; }

 private:
  ModelConfig config_;
  patch::PatchEmbedding<T> embedding_;
  std::vector<StiModule<T>> blocks_;
  ad::Linear<T> predictor_;
};

}  // namespace lsinet::model
