#pragma once

// Patching and patch embedding.
//
// A history of length n is padded with `stride` copies of its last value and
// cut into windows of `patch_length` taken every `stride` steps, giving
//   N = floor((n - L) / K) + 2
// patches. With L = 2K and K = floor(n / target), N equals the target patch
// count whenever the target divides n.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lsinet/autodiff/layers.hpp"
#include "lsinet/autodiff/tensor.hpp"
#include "lsinet/random.hpp"

namespace lsinet::patch {

struct PatchConfig {
  std::size_t history_length = 0;  // n
  std::size_t patch_length = 0;    // L
  std::size_t stride = 0;          // K
  std::size_t num_patches = 0;     // N
  std::size_t embed_dim = 128;     // D
};

/// floor((n - L) / K) + 2. Requires K >= 1 and L <= n.
std::size_t patch_count(std::size_t history_length, std::size_t patch_length,
                        std::size_t stride);

/// K = floor(n / target), L = 2K, N from patch_count. Throws ConfigError when
/// n < 2 * target.
PatchConfig derive_patch_geometry(std::size_t history_length, std::size_t target_patches,
                                  std::size_t embed_dim = 128);

/// Explicit geometry; validates L <= n and K >= 1.
PatchConfig make_patch_config(std::size_t history_length, std::size_t patch_length,
                              std::size_t stride, std::size_t embed_dim = 128);

/// Writes N x L patches (row-major) of one history into `out`.
template <typename T>
void patch(std::span<const double> history, const PatchConfig& config, std::span<T> out);

/// Patches for a block of histories: returns [rows, N, L].
template <typename T>
ad::Tensor<T> patch_rows(std::span<const double> histories, std::size_t rows,
                         const PatchConfig& config);

/// patches [..., N, L] -> [..., N, D]: each patch projected by W_p (stored
/// [L x D]) plus its row of the positional table W_pos [N x D].
template <typename T>
ad::Tensor<T> embed(const ad::Tensor<T>& patches, const ad::Tensor<T>& projection,
                    const ad::Tensor<T>& positions);

/// Learnable projection and positional table.
template <typename T>
class PatchEmbedding {
 public:
  PatchEmbedding() = default;
  // Projection: fan-in uniform; positions: N(0, 0.02^2).
  PatchEmbedding(const PatchConfig& config, Rng& rng);

  ad::Tensor<T> operator()(const ad::Tensor<T>& patches) const {
    return embed(patches, projection_, positions_);
  }

  ad::Tensor<T>& projection() { return projection_; }
  ad::Tensor<T>& positions() { return positions_; }
  const ad::Tensor<T>& projection() const { return projection_; }
  const ad::Tensor<T>& positions() const { return positions_; }

  void collect(const std::string& prefix, ad::ParameterList<T>& out) const;

 private:
  ad::Tensor<T> projection_;  // [L, D]
  ad::Tensor<T> positions_;   // [N, D]
};

}  // namespace lsinet::patch
