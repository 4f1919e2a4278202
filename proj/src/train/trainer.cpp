#include "lsinet/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "lsinet/autodiff/ops.hpp"
#include "lsinet/data/instance_norm.hpp"
#include "lsinet/errors.hpp"
#include "lsinet/sscl/connection.hpp"

namespace lsinet::train {
namespace {

template <typename T>
ad::Tensor<T> to_tensor(ad::Shape shape, const std::vector<double>& values) {
  return ad::Tensor<T>::from_data(std::move(shape), std::vector<T>(values.begin(), values.end()));
}

template <typename T>
void clip_gradients(const ad::ParameterList<T>& params, double max_norm) {
  double total = 0.0;
  for (const auto& p : params) {
    for (T g : p.tensor.grad()) total += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(total);
  if (norm <= max_norm || norm == 0.0) return;
  const T factor = static_cast<T>(max_norm / norm);
  for (const auto& p : params) {
    for (T& g : p.tensor.node()->grad) g *= factor;
  }
}

template <typename T>
std::vector<std::vector<T>> snapshot(const ad::ParameterList<T>& params) {
  std::vector<std::vector<T>> copy;
  copy.reserve(params.size());
  for (const auto& p : params) copy.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return copy;
}

template <typename T>
void restore(const ad::ParameterList<T>& params, const std::vector<std::vector<T>>& copy) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor<T> t = params[i].tensor;
    auto dst = t.mutable_data();
    std::copy(copy[i].begin(), copy[i].end(), dst.begin());
  }
}

template <typename T>
std::vector<std::vector<T>> frozen_targets(model::LsiNet<T>& model, double delta) {
  ad::NoGradGuard no_grad;
  std::vector<std::vector<T>> targets;
  for (auto& block : model.blocks()) {
    for (auto& bank : block.banks()) {
      const std::vector<T> c1 = sscl::class_one(bank.connection_probs());
      targets.push_back(sscl::top_k_target<T>(c1, delta));
    }
  }
  return targets;
}

std::vector<double> ones_fractions(const std::vector<sscl::ConnectionMatrix>& matrices) {
  std::vector<double> out;
  for (const auto& m : matrices) out.push_back(m.ones_fraction());
  return out;
}

nlohmann::json metrics_json(const EvalMetrics& m) {
  return {{"mse", m.mse}, {"mae", m.mae}, {"norm_mse", m.norm_mse}, {"count", m.count}};
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (eta == 0) throw ConfigError("regularization interval eta must be at least 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (!(lambda >= 0.0)) throw ConfigError("ASRL weight lambda must be non-negative");
  if (!(grad_clip >= 0.0)) throw ConfigError("gradient clip must be non-negative");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

void normalize_batch(const data::Batch& batch, std::vector<double>& history,
                     std::vector<double>& future) {
  history.resize(batch.history.size());
  future.resize(batch.future.size());
  const auto states = data::instance_norm_rows(batch.history, batch.history_length, history);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const auto& s = states[r];
    for (std::size_t t = 0; t < batch.horizon; ++t) {
      const std::size_t i = r * batch.horizon + t;
      future[i] = (batch.future[i] - s.mean) / s.stddev;
    }
  }
}

template <typename T>
LossTerms<T> compute_losses(const model::LsiNet<T>& model, const data::Batch& batch,
                            bool indicator, const TrainConfig& config, Rng& gumbel,
                            const std::vector<std::vector<T>>* targets) {
  std::vector<double> history;
  std::vector<double> future;
  normalize_batch(batch, history, future);
  auto out = model.forward_normalized(history, batch.rows,
                                      model::ForwardContext{model::GateMode::train, &gumbel});
  LossTerms<T> terms;
  terms.mse = ad::mse_loss(out.prediction, to_tensor<T>({batch.rows, batch.horizon}, future));
  terms.total = terms.mse;
  if (!indicator || config.lambda == 0.0 || out.head_probs.empty()) return terms;

  if (targets != nullptr && targets->size() != out.head_probs.size()) {
    throw ContractError("one frozen top-K target per head is required");
  }
  std::vector<ad::Tensor<T>> per_head;
  for (std::size_t h = 0; h < out.head_probs.size(); ++h) {
    per_head.push_back(targets != nullptr
                           ? sscl::asrl_loss(out.head_probs[h], std::span<const T>((*targets)[h]))
                           : sscl::asrl_loss(out.head_probs[h], config.delta));
  }
  terms.asrl = per_head.front();
  for (std::size_t h = 1; h < per_head.size(); ++h) terms.asrl = ad::add(terms.asrl, per_head[h]);
  terms.total = ad::add(terms.mse, ad::scale(terms.asrl, static_cast<T>(config.lambda)));
  return terms;
}

template <typename T>
std::string parameter_norms(const ad::ParameterList<T>& params) {
  std::ostringstream out;
  out.precision(6);
  for (const auto& p : params) {
    double sq = 0.0;
    bool finite = true;
    for (T v : p.tensor.data()) {
      finite = finite && std::isfinite(static_cast<double>(v));
      sq += static_cast<double>(v) * static_cast<double>(v);
    }
    out << "  " << p.name << " " << shape_to_string(p.tensor.shape()) << " l2=" << std::sqrt(sq)
        << (finite ? "" : " (non-finite entries)") << '\n';
  }
  return out.str();
}

template <typename T>
StepLosses train_step(const model::LsiNet<T>& model, const data::Batch& batch, bool indicator,
                      const TrainConfig& config, Rng& gumbel, Adam<T>& optimizer,
                      const std::vector<std::vector<T>>* targets) {
  optimizer.zero_grad();
  LossTerms<T> terms = compute_losses(model, batch, indicator, config, gumbel, targets);
  StepLosses losses;
  losses.total = static_cast<double>(terms.total.item());
  losses.mse = static_cast<double>(terms.mse.item());
  losses.asrl = terms.asrl.defined() ? static_cast<double>(terms.asrl.item()) : 0.0;
  if (!std::isfinite(losses.total)) {
    throw NumericalError("non-finite training loss (total " + std::to_string(losses.total) +
                         ", mse " + std::to_string(losses.mse) + ", asrl " +
                         std::to_string(losses.asrl) + ") at optimizer step " +
                         std::to_string(optimizer.steps() + 1) + "; parameter norms:\n" +
                         parameter_norms(optimizer.parameters()));
  }
  terms.total.backward();
  if (config.grad_clip > 0.0) clip_gradients(optimizer.parameters(), config.grad_clip);
  optimizer.step();
  return losses;
}

template <typename T>
EvalMetrics evaluate(const model::LsiNet<T>& model, const data::WindowDataset& dataset,
                     std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("evaluation batch size must be at least 1");
  ad::NoGradGuard no_grad;
  EvalMetrics m;
  double sq = 0.0;
  double abs = 0.0;
  double norm_sq = 0.0;
  std::vector<double> history;
  const std::size_t n = dataset.history_length();
  const std::size_t p = dataset.horizon();
  for (const auto& windows : data::batch_windows(dataset.num_windows(), batch_size, nullptr)) {
    const data::Batch batch = data::make_batch(dataset, windows);
    history.resize(batch.history.size());
    const auto states = data::instance_norm_rows(batch.history, n, history);
    auto out = model.forward_normalized(history, batch.rows,
                                        model::ForwardContext{model::GateMode::infer, nullptr});
    auto pred = out.prediction.data();
    for (std::size_t r = 0; r < batch.rows; ++r) {
      const auto& s = states[r];
      for (std::size_t t = 0; t < p; ++t) {
        const std::size_t i = r * p + t;
        const double y_norm = static_cast<double>(pred[i]);
        const double target = batch.future[i];
        const double e_norm = y_norm - (target - s.mean) / s.stddev;
        const double e = y_norm * s.stddev + s.mean - target;
        norm_sq += e_norm * e_norm;
        sq += e * e;
        abs += std::abs(e);
      }
    }
    m.count += batch.rows * p;
  }
  if (m.count == 0) throw ConfigError("evaluation split has no windows");
  const double count = static_cast<double>(m.count);
  m.mse = sq / count;
  m.mae = abs / count;
  m.norm_mse = norm_sq / count;
  return m;
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch},
          {"regularized", regularized},
          {"steps", steps},
          {"train_loss", train_loss},
          {"train_mse", train_mse},
          {"train_asrl", train_asrl},
          {"val", metrics_json(val)},
          {"ones_fraction", ones_fraction},
          {"seconds", seconds}};
}

nlohmann::json TrainReport::summary_json() const {
  return {{"seed", seed},
          {"best_epoch", best_epoch},
          {"best_val_mse", best_val_mse},
          {"test", metrics_json(test)},
          {"ones_fraction", ones_fraction}};
}

template <typename T>
TrainReport fit(const TrainConfig& config, const data::DatasetSplits& splits,
                model::LsiNet<T>& model, std::uint64_t seed, const EpochCallback& on_epoch) {
  config.validate();
  const auto& mc = model.config();
  if (splits.train.history_length() != mc.patch.history_length ||
      splits.train.horizon() != mc.horizon) {
    throw ConfigError("dataset windows (n=" + std::to_string(splits.train.history_length()) +
                      ", P=" + std::to_string(splits.train.horizon()) +
                      ") do not match the model (n=" + std::to_string(mc.patch.history_length) +
                      ", P=" + std::to_string(mc.horizon) + ")");
  }
  Rng shuffle = Rng::stream(seed, "shuffle");
  Rng gumbel = Rng::stream(seed, "gumbel");
  const ad::ParameterList<T> params = model.parameters();
  Adam<T> optimizer(params, config.learning_rate, config.adam);
  const std::size_t eval_batch = config.eval_batch_size ? config.eval_batch_size : config.batch_size;

  TrainReport report;
  report.seed = seed;
  report.best_val_mse = std::numeric_limits<double>::infinity();
  std::vector<std::vector<T>> best;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.regularized = sscl::regularization_indicator(epoch, config.eta) && config.lambda > 0.0;

    std::vector<std::vector<T>> targets;
    if (rec.regularized && config.freeze_top_k) targets = frozen_targets(model, config.delta);
    const auto* target_ptr = targets.empty() ? nullptr : &targets;

    auto batches = data::batch_windows(splits.train.num_windows(), config.batch_size, &shuffle);
    if (config.max_batches_per_epoch > 0 && batches.size() > config.max_batches_per_epoch) {
      batches.resize(config.max_batches_per_epoch);
    }
    for (const auto& windows : batches) {
      const data::Batch batch = data::make_batch(splits.train, windows);
      const StepLosses l =
          train_step(model, batch, rec.regularized, config, gumbel, optimizer, target_ptr);
      rec.train_loss += l.total;
      rec.train_mse += l.mse;
      rec.train_asrl += l.asrl;
      ++rec.steps;
    }
    if (rec.steps > 0) {
      const double steps = static_cast<double>(rec.steps);
      rec.train_loss /= steps;
      rec.train_mse /= steps;
      rec.train_asrl /= steps;
    }
    rec.ones_fraction = ones_fractions(model.connection_matrices());
    rec.val = evaluate(model, splits.val, eval_batch);
    if (best.empty() || rec.val.mse < report.best_val_mse) {
      report.best_val_mse = rec.val.mse;
      report.best_epoch = epoch;
      best = snapshot(params);
    }
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (on_epoch) on_epoch(rec);
    report.epochs.push_back(std::move(rec));
  }

  restore(params, best);
  report.test = evaluate(model, splits.test, eval_batch);
  report.ones_fraction = ones_fractions(model.connection_matrices());
  return report;
}

#define LSINET_INSTANTIATE_TRAIN(T)                                                          \
  template LossTerms<T> compute_losses(const model::LsiNet<T>&, const data::Batch&, bool,    \
                                       const TrainConfig&, Rng&,                             \
                                       const std::vector<std::vector<T>>*);                  \
  template StepLosses train_step(const model::LsiNet<T>&, const data::Batch&, bool,          \
                                 const TrainConfig&, Rng&, Adam<T>&,                         \
                                 const std::vector<std::vector<T>>*);                        \
  template EvalMetrics evaluate(const model::LsiNet<T>&, const data::WindowDataset&,         \
                                std::size_t);                                                \
  template TrainReport fit(const TrainConfig&, const data::DatasetSplits&, model::LsiNet<T>&, \
                           std::uint64_t, const EpochCallback&);                             \
  template std::string parameter_norms(const ad::ParameterList<T>&);

LSINET_INSTANTIATE_TRAIN(float)
LSINET_INSTANTIATE_TRAIN(double)

#undef LSINET_INSTANTIATE_TRAIN

}  // namespace lsinet::train
