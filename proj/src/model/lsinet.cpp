#include "lsinet/model/lsinet.hpp"

#include <algorithm>
#include <string>

#include "lsinet/autodiff/ops.hpp"
#include "lsinet/data/instance_norm.hpp"
#include "lsinet/errors.hpp"

namespace lsinet::model {

void ModelConfig::validate() const {
  if (patch.num_patches == 0 || patch.patch_length == 0 || patch.embed_dim == 0) {
    throw ConfigError("patch geometry is not initialised");
  }
  if (patch.num_patches != patch::patch_count(patch.history_length, patch.patch_length,
                                              patch.stride)) {
    throw ConfigError("patch count does not match history length, patch length and stride");
  }
  if (horizon == 0) throw ConfigError("prediction length must be positive");
  if (heads == 0 || patch.embed_dim % heads != 0) {
    throw ConfigError("head count " + std::to_string(heads) + " must divide embedding size " +
                      std::to_string(patch.embed_dim));
  }
  if (stack == 0) throw ConfigError("at least one STI block is required");
  if (mlp_hidden == 0) throw ConfigError("MLP hidden size must be positive");
  if (integration_depth == 0) throw ConfigError("integration MLP needs at least one hidden layer");
  if (!(temperature > 0.0)) throw ConfigError("Gumbel-Softmax temperature must be positive");
  if (no_msim && dense_gates) {
    throw ConfigError("no_msim and dense_gates both replace the gates; choose one");
  }
}

template <typename T>
ad::Tensor<T> multi_head_propagate(const ad::Tensor<T>& mixed,
                                   const std::vector<ad::Tensor<T>>& gates,
                                   const std::vector<ad::Linear<T>>& values) {
  if (gates.size() != values.size()) {
    throw ShapeError("one gate matrix per head is required (" + std::to_string(gates.size()) +
                     " gates, " + std::to_string(values.size()) + " heads)");
  }
  std::vector<ad::Tensor<T>> heads;
  heads.reserve(gates.size());
  for (std::size_t h = 0; h < gates.size(); ++h) {
    heads.push_back(ad::matmul(gates[h], values[h](mixed)));
  }
  return heads.size() == 1 ? heads.front() : ad::concat(heads, 2);
}

template <typename T>
StiModule<T>::StiModule(const ModelConfig& config, Rng& rng) : config_(config) {
  const std::size_t n = config.patch.num_patches;
  const std::size_t d = config.patch.embed_dim;
  if (config.time_invariant_hidden == 0) {
    time_invariant_ = ad::Mlp<T>({n, n}, rng);
  } else {
    time_invariant_ = ad::Mlp<T>({n, config.time_invariant_hidden, n}, rng);
  }
  sscl::MemoryBankConfig bank = config.memory;
  bank.num_patches = n;
  for (std::size_t h = 0; h < config.heads; ++h) {
    values_.emplace_back(d, d / config.heads, true, rng);
    if (!config.no_msim) banks_.emplace_back(bank, rng);
  }
  time_update_ = ad::Mlp<T>({n, config.mlp_hidden, n}, rng);

  align_ = ad::Linear<T>(d, d, true, rng);
  auto w = align_.weight().mutable_data();
  std::fill(w.begin(), w.end(), T(0));
  for (std::size_t i = 0; i < d; ++i) w[i * d + i] = T(1);
  auto b = align_.bias().mutable_data();
  std::fill(b.begin(), b.end(), T(0));

  std::vector<std::size_t> widths{d};
  for (std::size_t i = 0; i < config.integration_depth; ++i) widths.push_back(config.mlp_hidden);
  widths.push_back(d);
  integration_ = ad::Mlp<T>(widths, rng);
}

template <typename T>
GateSet<T> StiModule<T>::make_gates(const ForwardContext& ctx) const {
  const std::size_t n = config_.patch.num_patches;
  GateSet<T> set;
  if (config_.no_msim) {
    std::vector<T> eye(n * n, T(0));
    for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = T(1);
    set.gates.assign(config_.heads, ad::Tensor<T>::from_data({n, n}, eye));
    return set;
  }
  if (ctx.mode != GateMode::infer && ctx.gumbel == nullptr && !config_.dense_gates) {
    throw ContractError("train and relaxed gate modes need a Gumbel noise stream");
  }
  for (const auto& bank : banks_) {
    ad::Tensor<T> probs = bank.connection_probs();
    ad::Tensor<T> gate;
    if (config_.dense_gates) {
      gate = ad::reshape(ad::slice(probs, 1, 1, 1), {n, n});
    } else if (ctx.mode == GateMode::infer) {
      const std::vector<T> c1 = sscl::class_one(probs);
      gate = ad::Tensor<T>::from_data({n, n}, sscl::harden_threshold<T>(c1));
    } else {
      ad::Tensor<T> soft =
          sscl::gumbel_softmax_sample(probs, config_.temperature, *ctx.gumbel);
      if (ctx.mode == GateMode::train) soft = sscl::harden_straight_through(soft);
      gate = ad::reshape(soft, {n, n});
    }
    if (config_.degree_normalize) {
      std::vector<T> factors(n * n);
      auto g = gate.data();
      for (std::size_t i = 0; i < n; ++i) {
        T row = 0;
        for (std::size_t j = 0; j < n; ++j) row += g[i * n + j];
        const T f = T(1) / std::max(row, T(1));
        std::fill_n(factors.begin() + static_cast<std::ptrdiff_t>(i * n), n, f);
      }
      gate = ad::mul(gate, ad::Tensor<T>::from_data({n, n}, std::move(factors)));
    }
    set.gates.push_back(gate);
    set.probs.push_back(probs);
  }
  return set;
}

template <typename T>
ad::Tensor<T> StiModule<T>::time_invariant_mix(const ad::Tensor<T>& x) const {
  return time_invariant_.along_axis1(x);
}

template <typename T>
ad::Tensor<T> StiModule<T>::propagate(const ad::Tensor<T>& mixed,
                                      const std::vector<ad::Tensor<T>>& gates) const {
  return multi_head_propagate(mixed, gates, values_);
}

template <typename T>
ad::Tensor<T> StiModule<T>::time_update(const ad::Tensor<T>& x) const {
  return time_update_.along_axis1(x);
}

template <typename T>
typename StiModule<T>::Output StiModule<T>::forward(const ad::Tensor<T>& x,
                                                    const ForwardContext& ctx) const {
  const std::size_t n = config_.patch.num_patches;
  const std::size_t d = config_.patch.embed_dim;
  if (x.rank() != 3 || x.dim(1) != n || x.dim(2) != d) {
    throw ShapeError("STI block expects [B, " + std::to_string(n) + ", " + std::to_string(d) +
                     "], got " + shape_to_string(x.shape()));
  }
  Output out;
  out.gates = make_gates(ctx);
  ad::Tensor<T> interacted = propagate(time_invariant_mix(x), out.gates.gates);
  out.value = ad::add(integrate(time_update(interacted)), align(x));
  return out;
}

template <typename T>
std::vector<sscl::ConnectionMatrix> StiModule<T>::connection_matrices() const {
  const std::size_t n = config_.patch.num_patches;
  ad::NoGradGuard no_grad;
  std::vector<sscl::ConnectionMatrix> result;
  const GateSet<T> set = make_gates(ForwardContext{GateMode::infer, nullptr});
  for (std::size_t h = 0; h < set.gates.size(); ++h) {
    sscl::ConnectionMatrix m;
    m.num_patches = n;
    auto g = set.gates[h].data();
    m.z_hard.assign(g.begin(), g.end());
    if (h < set.probs.size()) {
      const std::vector<T> c1 = sscl::class_one(set.probs[h]);
      m.probs.assign(c1.begin(), c1.end());
      if (config_.dense_gates) {
        // Dense gates carry no binary structure; report the threshold view.
        const std::vector<T> hard = sscl::harden_threshold<T>(c1);
        m.z_hard.assign(hard.begin(), hard.end());
      }
    }
    result.push_back(std::move(m));
  }
  return result;
}

template <typename T>
void StiModule<T>::collect(const std::string& prefix, ad::ParameterList<T>& out) const {
  time_invariant_.collect(prefix + ".time_invariant", out);
  for (std::size_t h = 0; h < values_.size(); ++h) {
    const std::string head = prefix + ".head." + std::to_string(h);
    values_[h].collect(head + ".value", out);
    if (h < banks_.size()) banks_[h].collect(head, out);
  }
  time_update_.collect(prefix + ".time_update", out);
  align_.collect(prefix + ".align", out);
  integration_.collect(prefix + ".integration", out);
}

template <typename T>
LsiNet<T>::LsiNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  config_.memory.num_patches = config_.patch.num_patches;
  Rng rng = Rng::stream(seed, "init");
  embedding_ = patch::PatchEmbedding<T>(config_.patch, rng);
  for (std::size_t s = 0; s < config_.stack; ++s) blocks_.emplace_back(config_, rng);
  predictor_ = ad::Linear<T>(config_.patch.num_patches * config_.patch.embed_dim,
                             config_.horizon, true, rng);
}

template <typename T>
typename LsiNet<T>::Output LsiNet<T>::forward(const ad::Tensor<T>& patches,
                                              const ForwardContext& ctx) const {
  const auto& pc = config_.patch;
  if (patches.rank() != 3 || patches.dim(1) != pc.num_patches ||
      patches.dim(2) != pc.patch_length) {
    throw ShapeError("model expects patches [B, " + std::to_string(pc.num_patches) + ", " +
                     std::to_string(pc.patch_length) + "], got " +
                     shape_to_string(patches.shape()));
  }
  Output out;
  ad::Tensor<T> x = embedding_(patches);
  for (const auto& block : blocks_) {
    auto step = block.forward(x, ctx);
    x = step.value;
    for (auto& p : step.gates.probs) out.head_probs.push_back(p);
  }
  out.prediction = predictor_(ad::flatten(x, 1));
  return out;
}

template <typename T>
typename LsiNet<T>::Output LsiNet<T>::forward_normalized(std::span<const double> histories,
                                                         std::size_t rows,
                                                         const ForwardContext& ctx) const {
  return forward(patch::patch_rows<T>(histories, rows, config_.patch), ctx);
}

template <typename T>
std::vector<double> LsiNet<T>::predict(std::span<const double> histories,
                                       std::size_t rows) const {
  ad::NoGradGuard no_grad;
  const std::size_t n = config_.patch.history_length;
  std::vector<double> normalized(histories.size());
  const auto states = data::instance_norm_rows(histories, n, normalized);
  if (states.size() != rows) throw ShapeError("predict: row count does not match histories");
  Output out = forward_normalized(normalized, rows, ForwardContext{GateMode::infer, nullptr});
  auto y = out.prediction.data();
  std::vector<double> result(y.begin(), y.end());
  data::denorm_rows(result, config_.horizon, states);
  return result;
}

template <typename T>
ad::ParameterList<T> LsiNet<T>::parameters() const {
  ad::ParameterList<T> out;
  embedding_.collect("patch", out);
  for (std::size_t s = 0; s < blocks_.size(); ++s) {
    blocks_[s].collect("sti." + std::to_string(s), out);
  }
  predictor_.collect("predictor", out);
  return out;
}

template <typename T>
std::vector<sscl::ConnectionMatrix> LsiNet<T>::connection_matrices() const {
  std::vector<sscl::ConnectionMatrix> all;
  for (const auto& block : blocks_) {
    auto m = block.connection_matrices();
    all.insert(all.end(), m.begin(), m.end());
  }
  return all;
}

template ad::Tensor<float> multi_head_propagate(const ad::Tensor<float>&,
                                                const std::vector<ad::Tensor<float>>&,
                                                const std::vector<ad::Linear<float>>&);
template ad::Tensor<double> multi_head_propagate(const ad::Tensor<double>&,
                                                 const std::vector<ad::Tensor<double>>&,
                                                 const std::vector<ad::Linear<double>>&);
template class StiModule<float>;
template class StiModule<double>;
template class LsiNet<float>;
template class LsiNet<double>;

}  // namespace lsinet::model
