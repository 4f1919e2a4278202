#include "lsinet/patch/patch_encoding.hpp"

#include <string>

#include "lsinet/autodiff/ops.hpp"
#include "lsinet/errors.hpp"

namespace lsinet::patch {

std::size_t patch_count(std::size_t n, std::size_t patch_length, std::size_t stride) {
  if (stride == 0) throw ConfigError("patch stride must be at least 1");
  if (patch_length == 0 || patch_length > n) {
    throw ConfigError("patch length " + std::to_string(patch_length) +
                      " must lie in [1, history length " + std::to_string(n) + "]");
  }
  return (n - patch_length) / stride + 2;
}

PatchConfig derive_patch_geometry(std::size_t n, std::size_t target_patches,
                                  std::size_t embed_dim) {
  if (target_patches == 0) throw ConfigError("target patch count must be positive");
  if (n < 2 * target_patches) {
    throw ConfigError("history length " + std::to_string(n) + " is too short for " +
                      std::to_string(target_patches) + " patches (need n >= " +
                      std::to_string(2 * target_patches) + "); use a patch count of at most " +
                      std::to_string(n / 2));
  }
  const std::size_t stride = n / target_patches;
  return make_patch_config(n, 2 * stride, stride, embed_dim);
}

PatchConfig make_patch_config(std::size_t n, std::size_t patch_length, std::size_t stride,
                              std::size_t embed_dim) {
  if (embed_dim == 0) throw ConfigError("embedding size must be positive");
  PatchConfig config;
  config.history_length = n;
  config.patch_length = patch_length;
  config.stride = stride;
  config.num_patches = patch_count(n, patch_length, stride);
  config.embed_dim = embed_dim;
  return config;
}

template <typename T>
void patch(std::span<const double> history, const PatchConfig& config, std::span<T> out) {
  const std::size_t n = config.history_length;
  const std::size_t len = config.patch_length;
  if (history.size() != n) {
    throw ShapeError("patch: history has length " + std::to_string(history.size()) +
                     ", configured " + std::to_string(n));
  }
  if (out.size() != config.num_patches * len) throw ShapeError("patch: output buffer size");
  const double last = history[n - 1];
  for (std::size_t p = 0; p < config.num_patches; ++p) {
    const std::size_t start = p * config.stride;
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t t = start + i;
      out[p * len + i] = static_cast<T>(t < n ? history[t] : last);
    }
  }
}

template <typename T>
ad::Tensor<T> patch_rows(std::span<const double> histories, std::size_t rows,
                         const PatchConfig& config) {
  const std::size_t n = config.history_length;
  const std::size_t per_row = config.num_patches * config.patch_length;
  if (histories.size() != rows * n) throw ShapeError("patch_rows: history block size");
  std::vector<T> data(rows * per_row);
  for (std::size_t r = 0; r < rows; ++r) {
    patch<T>(histories.subspan(r * n, n), config, std::span(data).subspan(r * per_row, per_row));
  }
  return ad::Tensor<T>::from_data({rows, config.num_patches, config.patch_length},
                                  std::move(data));
}

template <typename T>
ad::Tensor<T> embed(const ad::Tensor<T>& patches, const ad::Tensor<T>& projection,
                    const ad::Tensor<T>& positions) {
  return ad::add(ad::matmul(patches, projection), positions);
}

template <typename T>
PatchEmbedding<T>::PatchEmbedding(const PatchConfig& config, Rng& rng)
    : projection_(ad::kaiming_uniform<T>({config.patch_length, config.embed_dim},
                                         config.patch_length, rng)),
      positions_(ad::normal_parameter<T>({config.num_patches, config.embed_dim}, 0.02, rng)) {}

template <typename T>
void PatchEmbedding<T>::collect(const std::string& prefix, ad::ParameterList<T>& out) const {
  out.push_back({prefix + ".projection", projection_});
  out.push_back({prefix + ".position", positions_});
}

template void patch<float>(std::span<const double>, const PatchConfig&, std::span<float>);
template void patch<double>(std::span<const double>, const PatchConfig&, std::span<double>);
template ad::Tensor<float> patch_rows<float>(std::span<const double>, std::size_t,
                                             const PatchConfig&);
template ad::Tensor<double> patch_rows<double>(std::span<const double>, std::size_t,
                                               const PatchConfig&);
template ad::Tensor<float> embed(const ad::Tensor<float>&, const ad::Tensor<float>&,
                                 const ad::Tensor<float>&);
template ad::Tensor<double> embed(const ad::Tensor<double>&, const ad::Tensor<double>&,
                                  const ad::Tensor<double>&);
template class PatchEmbedding<float>;
template class PatchEmbedding<double>;

}  // namespace lsinet::patch
