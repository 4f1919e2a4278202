#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lsinet/data/window_dataset.hpp"
#include "lsinet/model/lsinet.hpp"
#include "lsinet/train/adam.hpp"

namespace lsinet::train {

struct TrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 1e-4;
  std::size_t batch_size = 128;
  std::size_t eta = 3;        // regularize when epoch % eta == 0
  double delta = 0.15;        // target fraction of connections kept
  double lambda = 1.0;        // ASRL weight
  AdamConfig adam;
  double grad_clip = 0.0;     // global L2 norm; 0 disables
  bool freeze_top_k = false;  // build the top-K target once per regularized epoch
  std::size_t max_batches_per_epoch = 0;  // 0 = the whole training split
  std::size_t eval_batch_size = 0;        // 0 = batch_size

  void validate() const;
};

struct StepLosses {
  double total = 0.0;
  double mse = 0.0;
  double asrl = 0.0;  // summed over heads, before lambda
};

/// Loss tensors of one forward pass. total is the mse tensor itself when the
/// regularizer is off.
template <typename T>
struct LossTerms {
  ad::Tensor<T> total;
  ad::Tensor<T> mse;
  ad::Tensor<T> asrl;  // undefined when the regularizer is off
};

/// Instance-normalizes each row's history and maps its future with the same
/// statistics. Outputs are rows x n and rows x P.
void normalize_batch(const data::Batch& batch, std::vector<double>& history,
                     std::vector<double>& future);

/// Builds the training loss for one batch in train gate mode.
/// `targets`, when given, holds one frozen top-K target per head.
template <typename T>
LossTerms<T> compute_losses(const model::LsiNet<T>& model, const data::Batch& batch,
                            bool indicator, const TrainConfig& config, Rng& gumbel,
                            const std::vector<std::vector<T>>* targets = nullptr);

/// Forward, backward and one optimizer step. Throws NumericalError (with
/// per-parameter norms) when the loss is not finite.
template <typename T>
StepLosses train_step(const model::LsiNet<T>& model, const data::Batch& batch, bool indicator,
                      const TrainConfig& config, Rng& gumbel, Adam<T>& optimizer,
                      const std::vector<std::vector<T>>* targets = nullptr);

struct EvalMetrics {
  double mse = 0.0;       // on the dataset scale (instance norm undone)
  double mae = 0.0;
  double norm_mse = 0.0;  // on the instance-normalized scale
  std::size_t count = 0;  // predicted values
};

/// Inference-mode metrics over every sample of `dataset`, in window order.
template <typename T>
EvalMetrics evaluate(const model::LsiNet<T>& model, const data::WindowDataset& dataset,
                     std::size_t batch_size);

struct EpochRecord {
  std::size_t epoch = 0;
  bool regularized = false;
  std::size_t steps = 0;
  double train_loss = 0.0;
  double train_mse = 0.0;
  double train_asrl = 0.0;
  EvalMetrics val;
  std::vector<double> ones_fraction;  // per head, inference gates
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

struct TrainReport {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
  EvalMetrics test;  // at the best-validation parameters
  std::vector<double> ones_fraction;  // per head, at the best-validation parameters

  nlohmann::json summary_json() const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains, keeps the parameters of the lowest validation MSE, restores them
/// and evaluates the test split.
template <typename T>
TrainReport fit(const TrainConfig& config, const data::DatasetSplits& splits,
                model::LsiNet<T>& model, std::uint64_t seed,
                const EpochCallback& on_epoch = nullptr);

/// Sum of squares per parameter, formatted for diagnostics.
template <typename T>
std::string parameter_norms(const ad::ParameterList<T>& params);

}  // namespace lsinet::train
