#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "la2/data.hpp"
#include "la2/model.hpp"

namespace la2 {

enum class LossVariant {
  squared_ratio,  // |pred - target|^2 / |target|^2
  root_ratio,     // |pred - target| / |target|
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;
  double min_learning_rate = 1e-5;  // cosine floor
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  LossVariant loss = LossVariant::squared_ratio;
  std::filesystem::path checkpoint;  // best-on-test checkpoint; empty disables saving

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double test_rel_l2 = 0;
  std::vector<double> sigma_s;
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_test_rel_l2 = 0;

  /// Same losses, metrics and mask values; wall time is ignored.
  bool same_results(const TrainReport& other) const;
  /// Columns: epoch, train_loss, test_rel_l2, sigma_s_1..L, epoch_seconds.
  void write_csv(const std::filesystem::path& path) const;
};

/// Per-sample relative L2 over all entries; `target` must be nonzero.
Tensor relative_l2_loss(const Tensor& pred, const Tensor& target, LossVariant variant);
/// Mean of the per-sample losses.
Tensor relative_l2_loss(std::span<const Tensor> preds, std::span<const Tensor> targets, LossVariant variant);

/// |pred - target| / |target| on raw values.
double relative_l2(std::span<const double> pred, std::span<const double> target);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

/// One AdamW update with bias-corrected moments and decoupled weight decay.
void adam_step(std::span<Tensor> params, AdamState& state, const TrainConfig& cfg, double lr);

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

double global_grad_norm(std::span<const Tensor> params);

/// Cosine decay from cfg.learning_rate to cfg.min_learning_rate over `total` steps.
double cosine_learning_rate(const TrainConfig& cfg, std::size_t step, std::size_t total);

struct EvalMetrics {
  double mean = 0;
  std::vector<double> per_sample;
};

/// Root-ratio relative L2 of de-normalized predictions on one split.
EvalMetrics evaluate(const OperatorModel& model, const Dataset& ds, Split split);
EvalMetrics evaluate(const OperatorModel& model, const Dataset& ds, Split split, const KnnIndex& knn);

/// Throws std::invalid_argument when the dataset cannot feed the model.
void check_compatible(const OperatorModel& model, const Dataset& ds);

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainReport train(OperatorModel& model, const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace la2
