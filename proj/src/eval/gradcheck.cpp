#include "lsinet/eval/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>

#include "lsinet/autodiff/layers.hpp"
#include "lsinet/autodiff/ops.hpp"
#include "lsinet/errors.hpp"
#include "lsinet/patch/patch_encoding.hpp"
#include "lsinet/sscl/connection.hpp"

namespace lsinet::eval {
namespace {

using Tensor = ad::Tensor<double>;
using Fn = std::function<Tensor()>;

Tensor random_leaf(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

Tensor leaf_away_from(ad::Shape shape, Rng& rng, std::initializer_list<double> kinks) {
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) {
    bool close = true;
    while (close) {
      x = rng.uniform(-1.0, 1.0);
      close = false;
      for (double k : kinks) close = close || std::abs(x - k) < 1e-2;
    }
  }
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

Tensor random_constant(const ad::Shape& shape, Rng& rng) {
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_data(shape, std::move(v));
}

// Projects a tensor-valued function to a scalar with fixed random weights.
GradCheckResult check_output(const std::string& name, const Fn& f, std::vector<Tensor> wrt,
                             Rng& rng) {
  const Tensor probe = f();
  const Tensor weights = random_constant(probe.shape(), rng);
  return finite_difference_check(
      name, [&] { return ad::sum(ad::mul(f(), weights)); }, wrt);
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult finite_difference_check(std::string name,
                                        const std::function<ad::Tensor<double>()>& loss,
                                        const std::vector<ad::Tensor<double>>& wrt, double eps,
                                        double floor) {
  for (const auto& t : wrt) {
    if (!t.requires_grad()) throw ContractError(name + ": gradient check needs leaf parameters");
    const_cast<Tensor&>(t).zero_grad();
  }
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& t : wrt) {
    auto g = t.grad();
    analytic.emplace_back(t.numel(), 0.0);
    std::copy(g.begin(), g.end(), analytic.back().begin());
  }

  GradCheckResult result;
  result.name = std::move(name);
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    Tensor t = wrt[k];
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double original = data[i];
      data[i] = original + eps;
      const double plus = loss().item();
      data[i] = original - eps;
      const double minus = loss().item();
      data[i] = original;
      const double numeric = (plus - minus) / (2.0 * eps);
      result.max_rel_error =
          std::max(result.max_rel_error, relative_error(analytic[k][i], numeric, floor));
      ++result.entries;
    }
  }
  return result;
}

model::ModelConfig tiny_model_config() {
  model::ModelConfig c;
  c.patch = patch::derive_patch_geometry(8, 4, 8);
  c.horizon = 3;
  c.heads = 2;
  c.stack = 1;
  c.mlp_hidden = 8;
  c.integration_depth = 1;
  c.memory.num_patches = c.patch.num_patches;
  c.memory.memory_dim = 8;
  c.memory.encoder_hidden = {12, 8};
  c.memory.predictor_hidden = 8;
  return c;
}

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "gradcheck");
  std::vector<GradCheckResult> out;

  {
    Tensor a = random_leaf({5, 7}, rng);
    Tensor b = random_leaf({7, 3}, rng);
    out.push_back(finite_difference_check("matmul", [&] { return ad::sum(ad::matmul(a, b)); },
                                          {a, b}));
    Tensor x = random_leaf({2, 3, 4}, rng);
    Tensor w = random_leaf({4, 5}, rng);
    out.push_back(check_output("matmul_batched", [&] { return ad::matmul(x, w); }, {x, w}, rng));
    Tensor g = random_leaf({3, 3}, rng);
    out.push_back(check_output("matmul_broadcast_left", [&] { return ad::matmul(g, x); }, {g, x},
                               rng));
  }
  {
    Tensor a = random_leaf({3, 4}, rng);
    Tensor b = random_leaf({3, 4}, rng);
    Tensor row = random_leaf({4}, rng);
    Tensor s = random_leaf({1}, rng);
    out.push_back(check_output("add", [&] { return ad::add(a, b); }, {a, b}, rng));
    out.push_back(check_output("add_suffix", [&] { return ad::add(a, row); }, {a, row}, rng));
    out.push_back(check_output("sub", [&] { return ad::sub(a, b); }, {a, b}, rng));
    out.push_back(check_output("mul", [&] { return ad::mul(a, b); }, {a, b}, rng));
    out.push_back(check_output("mul_scalar", [&] { return ad::mul(a, s); }, {a, s}, rng));
    out.push_back(check_output("neg", [&] { return ad::neg(a); }, {a}, rng));
    out.push_back(check_output("scale", [&] { return ad::scale(a, 2.5); }, {a}, rng));
    out.push_back(check_output("add_scalar", [&] { return ad::add_scalar(a, 0.7); }, {a}, rng));
    Tensor kinked = leaf_away_from({3, 4}, rng, {-0.5, 0.0, 0.5});
    out.push_back(check_output("relu", [&] { return ad::relu(kinked); }, {kinked}, rng));
    out.push_back(check_output("exp", [&] { return ad::exp(a); }, {a}, rng));
    Tensor pos = random_leaf({3, 4}, rng, 0.2, 2.0);
    out.push_back(check_output("log", [&] { return ad::log(pos); }, {pos}, rng));
    out.push_back(check_output("clamp", [&] { return ad::clamp(kinked, -0.5, 0.5); }, {kinked}, rng));
  }
  {
    Tensor v = random_leaf({5}, rng, -2.0, 2.0);
    out.push_back(check_output("softmax", [&] { return ad::softmax(v, 0); }, {v}, rng));
    Tensor m = random_leaf({3, 4, 2}, rng, -2.0, 2.0);
    out.push_back(check_output("softmax_axis1", [&] { return ad::softmax(m, 1); }, {m}, rng));
    out.push_back(check_output("sum_all", [&] { return ad::sum(m); }, {m}, rng));
    out.push_back(check_output("sum_axis", [&] { return ad::sum(m, 1); }, {m}, rng));
    out.push_back(check_output("mean_all", [&] { return ad::mean(m); }, {m}, rng));
    out.push_back(check_output("mean_axis", [&] { return ad::mean(m, 2); }, {m}, rng));
  }
  {
    Tensor a = random_leaf({2, 3}, rng);
    Tensor b = random_leaf({2, 2}, rng);
    Tensor c = random_leaf({2, 3, 4}, rng);
    out.push_back(check_output("concat", [&] { return ad::concat<double>({a, b}, 1); }, {a, b},
                               rng));
    out.push_back(check_output("reshape", [&] { return ad::reshape(c, {6, 4}); }, {c}, rng));
    out.push_back(check_output("flatten", [&] { return ad::flatten(c, 1); }, {c}, rng));
    out.push_back(check_output("transpose_last", [&] { return ad::transpose(c, 1, 2); }, {c},
                               rng));
    out.push_back(check_output("transpose_outer", [&] { return ad::transpose(c, 0, 2); }, {c},
                               rng));
    out.push_back(check_output("slice", [&] { return ad::slice(c, 2, 1, 2); }, {c}, rng));
    const std::vector<std::size_t> rows{1, 0, 1, 1};
    out.push_back(check_output("gather_rows", [&] { return ad::gather_rows<double>(a, rows); },
                               {a}, rng));
    Tensor t = random_constant({2, 3}, rng);
    out.push_back(finite_difference_check("mse_loss", [&] { return ad::mse_loss(a, t); }, {a}));
  }

  // Connection learning pipeline.
  {
    sscl::MemoryBankConfig cfg;
    cfg.num_patches = 3;
    cfg.memory_dim = 4;
    cfg.encoder_hidden = {6, 4};
    cfg.predictor_hidden = 5;
    sscl::MemoryBank<double> bank(cfg, rng);
    ad::ParameterList<double> params;
    bank.collect("bank", params);
    std::vector<Tensor> wrt;
    for (auto& p : params) wrt.push_back(p.tensor);
    out.push_back(check_output("connection_logits", [&] { return bank.connection_logits(); }, wrt,
                               rng));
    const std::uint64_t noise_seed = rng.next_u64();
    out.push_back(check_output(
        "gumbel_softmax",
        [&] {
          Rng noise = Rng::stream(noise_seed, "gumbel");
          return sscl::gumbel_softmax_sample(bank.connection_probs(), 0.7, noise);
        },
        wrt, rng));
    const std::vector<double> target =
        sscl::top_k_target<double>(sscl::class_one(bank.connection_probs()), 0.3);
    out.push_back(finite_difference_check(
        "asrl_loss",
        [&] { return sscl::asrl_loss(bank.connection_probs(), std::span<const double>(target)); },
        wrt));
  }

  const model::ModelConfig cfg = tiny_model_config();
  const std::size_t n_patch = cfg.patch.num_patches;
  const std::size_t d = cfg.patch.embed_dim;
  {
    patch::PatchEmbedding<double> emb(cfg.patch, rng);
    Tensor patches = random_leaf({2, n_patch, cfg.patch.patch_length}, rng);
    out.push_back(check_output("embed", [&] { return emb(patches); },
                               {emb.projection(), emb.positions(), patches}, rng));
  }

  const std::uint64_t model_seed = rng.next_u64();
  const std::uint64_t noise_seed = rng.next_u64();
  model::LsiNet<double> net(cfg, model_seed);
  std::vector<Tensor> wrt;
  for (auto& p : net.parameters()) wrt.push_back(p.tensor);
  {
    auto& block = net.blocks().front();
    Tensor x = random_leaf({2, n_patch, d}, rng);
    out.push_back(check_output("time_invariant_mix", [&] { return block.time_invariant_mix(x); },
                               {x}, rng));
    out.push_back(check_output("time_update", [&] { return block.time_update(x); }, {x}, rng));
    Tensor g0 = random_leaf({n_patch, n_patch}, rng, 0.0, 1.0);
    Tensor g1 = random_leaf({n_patch, n_patch}, rng, 0.0, 1.0);
    out.push_back(check_output("multi_head_propagate",
                               [&] { return block.propagate(x, {g0, g1}); }, {x, g0, g1}, rng));
    out.push_back(check_output(
        "sti_forward",
        [&] {
          Rng noise = Rng::stream(noise_seed, "gumbel");
          return block.forward(x, {model::GateMode::relaxed, &noise}).value;
        },
        {x}, rng));
  }
  {
    const std::size_t rows = 3;
    std::vector<double> histories(rows * cfg.patch.history_length);
    for (auto& v : histories) v = rng.normal();
    Tensor target = random_constant({rows, cfg.horizon}, rng);
    std::vector<std::vector<double>> top;
    {
      Rng noise = Rng::stream(noise_seed, "gumbel");
      auto probe = net.forward_normalized(histories, rows, {model::GateMode::relaxed, &noise});
      for (const auto& p : probe.head_probs) {
        top.push_back(sscl::top_k_target<double>(sscl::class_one(p), 0.25));
      }
    }
    out.push_back(finite_difference_check(
        "lsinet_model",
        [&] {
          Rng noise = Rng::stream(noise_seed, "gumbel");
          auto o = net.forward_normalized(histories, rows, {model::GateMode::relaxed, &noise});
          Tensor loss = ad::mse_loss(o.prediction, target);
          for (std::size_t h = 0; h < o.head_probs.size(); ++h) {
            loss = ad::add(loss, sscl::asrl_loss(o.head_probs[h], std::span<const double>(top[h])));
          }
          return loss;
        },
        wrt));
  }
  return out;
}

}  // namespace lsinet::eval
