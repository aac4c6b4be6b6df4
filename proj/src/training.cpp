#include "la2/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>

#include "la2/json_config.hpp"

namespace la2 {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(learning_rate > 0) || !(min_learning_rate > 0) || min_learning_rate > learning_rate) {
    throw std::invalid_argument("TrainConfig: need 0 < min_learning_rate <= learning_rate");
  }
  if (!(weight_decay >= 0)) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1) || !(eps > 0)) {
    throw std::invalid_argument("TrainConfig: Adam betas must lie in (0,1) and eps > 0");
  }
  if (!(clip_norm > 0)) throw std::invalid_argument("TrainConfig: clip_norm must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"min_learning_rate", c.min_learning_rate},
                     {"weight_decay", c.weight_decay},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"eps", c.eps},
                     {"clip_norm", c.clip_norm},
                     {"seed", c.seed},
                     {"loss", c.loss == LossVariant::squared_ratio ? "squared_ratio" : "root_ratio"}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "epochs") value.get_to(c.epochs);
    else if (key == "batch_size") value.get_to(c.batch_size);
    else if (key == "learning_rate") value.get_to(c.learning_rate);
    else if (key == "min_learning_rate") value.get_to(c.min_learning_rate);
    else if (key == "weight_decay") value.get_to(c.weight_decay);
    else if (key == "beta1") value.get_to(c.beta1);
    else if (key == "beta2") value.get_to(c.beta2);
    else if (key == "eps") value.get_to(c.eps);
    else if (key == "clip_norm") value.get_to(c.clip_norm);
    else if (key == "seed") value.get_to(c.seed);
    else if (key == "loss") {
      const auto s = value.get<std::string>();
      if (s == "squared_ratio") c.loss = LossVariant::squared_ratio;
      else if (s == "root_ratio") c.loss = LossVariant::root_ratio;
      else throw std::invalid_argument("TrainConfig: unknown loss variant '" + s + "'");
    } else {
      throw std::invalid_argument("TrainConfig: unknown key '" + key + "'");
    }
  }
}

bool TrainReport::same_results(const TrainReport& other) const {
  if (epochs.size() != other.epochs.size() || best_epoch != other.best_epoch ||
      best_test_rel_l2 != other.best_test_rel_l2) {
    return false;
  }
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& a = epochs[i];
    const auto& b = other.epochs[i];
    if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.test_rel_l2 != b.test_rel_l2 || a.sigma_s != b.sigma_s) {
      return false;
    }
  }
  return true;
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const std::size_t layers = epochs.empty() ? 0 : epochs.front().sigma_s.size();
  os << "epoch,train_loss,test_rel_l2";
  for (std::size_t l = 1; l <= layers; ++l) os << ",sigma_s_" << l;
  os << ",epoch_seconds\n";
  os << std::setprecision(17);
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.train_loss << ',' << e.test_rel_l2;
    for (double s : e.sigma_s) os << ',' << s;
    os << ',' << e.seconds << '\n';
  }
}

Tensor relative_l2_loss(const Tensor& pred, const Tensor& target, LossVariant variant) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("relative_l2_loss: shapes differ, " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  }
  double target_sq = 0.0;
  for (double v : target.data()) target_sq += v * v;
  if (!(target_sq > 0)) throw std::invalid_argument("relative_l2_loss: target has zero norm");
  const Tensor diff = sub(pred, target);
  const Tensor ratio = scale(sum(mul(diff, diff)), 1.0 / target_sq);
  return variant == LossVariant::squared_ratio ? ratio : sqrt(ratio);
}

Tensor relative_l2_loss(std::span<const Tensor> preds, std::span<const Tensor> targets, LossVariant variant) {
  if (preds.size() != targets.size() || preds.empty()) {
    throw std::invalid_argument("relative_l2_loss: need equally many (>0) predictions and targets");
  }
  Tensor total = relative_l2_loss(preds[0], targets[0], variant);
  for (std::size_t i = 1; i < preds.size(); ++i) total = add(total, relative_l2_loss(preds[i], targets[i], variant));
  return scale(total, 1.0 / static_cast<double>(preds.size()));
}

double relative_l2(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw ShapeError("relative_l2: size mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num += (pred[i] - target[i]) * (pred[i] - target[i]);
    den += target[i] * target[i];
  }
  if (!(den > 0)) throw std::invalid_argument("relative_l2: target has zero norm");
  return std::sqrt(num / den);
}

void adam_step(std::span<Tensor> params, AdamState& state, const TrainConfig& cfg, double lr) {
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state does not match parameters");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (state.m[i].size() != p.numel()) throw ShapeError("adam_step: state shape mismatch");
    const std::vector<double> g = p.grad();
    auto x = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < x.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      x[j] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * x[j]);
    }
  }
}

double global_grad_norm(std::span<const Tensor> params) {
  double s = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) s += g * g;
  }
  return std::sqrt(s);
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (Tensor& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= f;
    }
  }
  return norm;
}

double cosine_learning_rate(const TrainConfig& cfg, std::size_t step, std::size_t total) {
  if (total <= 1) return cfg.learning_rate;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total - 1));
  return cfg.min_learning_rate +
         0.5 * (cfg.learning_rate - cfg.min_learning_rate) * (1.0 + std::cos(std::numbers::pi * t));
}

void check_compatible(const OperatorModel& model, const Dataset& ds) {
  const ModelConfig& c = model.config;
  if (c.in_channels != ds.in_channels() || c.coord_channels != ds.geometry.dims() ||
      c.out_channels != ds.out_channels()) {
    throw std::invalid_argument("model channels (C_f=" + std::to_string(c.in_channels) + ", C_s=" +
                                std::to_string(c.coord_channels) + ", C_u=" + std::to_string(c.out_channels) +
                                ") do not match the dataset (C_f=" + std::to_string(ds.in_channels()) + ", C_s=" +
                                std::to_string(ds.geometry.dims()) + ", C_u=" + std::to_string(ds.out_channels()) +
                                ")");
  }
  if (c.patch > ds.points()) {
    throw std::invalid_argument("patch size K=" + std::to_string(c.patch) + " exceeds the " +
                                std::to_string(ds.points()) + " points of the dataset");
  }
}

EvalMetrics evaluate(const OperatorModel& model, const Dataset& ds, Split split) {
  check_compatible(model, ds);
  return evaluate(model, ds, split, knn_indices_accelerated(ds.geometry, model.config.patch));
}

EvalMetrics evaluate(const OperatorModel& model, const Dataset& ds, Split split, const KnnIndex& knn) {
  NoGradGuard no_grad;
  EvalMetrics out;
  for (std::size_t i : split_indices(ds, split)) {
    const Tensor pred = denormalize_output(ds, forward(model, normalized_input(ds, i), ds.geometry, knn));
    out.per_sample.push_back(relative_l2(pred.data(), target(ds, i).data()));
  }
  out.mean = out.per_sample.empty()
                 ? 0.0
                 : std::accumulate(out.per_sample.begin(), out.per_sample.end(), 0.0) /
                       static_cast<double>(out.per_sample.size());
  return out;
}

TrainReport train(OperatorModel& model, const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  ds.validate();
  check_compatible(model, ds);
  if (ds.manifest.train_indices.empty()) throw std::invalid_argument("train: dataset has an empty train split");

  const KnnIndex knn = knn_indices_accelerated(ds.geometry, model.config.patch);
  std::vector<Tensor> params;
  for (auto& [name, t] : model.parameters()) params.push_back(t);

  // Inputs and targets are prepared once; they never change.
  const auto& train_idx = ds.manifest.train_indices;
  std::vector<Tensor> inputs(ds.samples());
  std::vector<Tensor> targets(ds.samples());
  for (std::size_t i : train_idx) {
    inputs[i] = normalized_input(ds, i);
    targets[i] = target(ds, i);
  }

  const std::size_t steps_per_epoch = (train_idx.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  std::mt19937_64 rng(cfg.seed);
  AdamState adam;
  TrainReport report;
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - b);
      for (Tensor& p : params) p.zero_grad();
      for (std::size_t j = b; j < end; ++j) {
        const std::size_t i = order[j];
        const Tensor pred = denormalize_output(ds, forward(model, inputs[i], ds.geometry, knn));
        const Tensor loss = relative_l2_loss(pred, targets[i], cfg.loss);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                   std::to_string(i));
        }
        loss_sum += value;
        backward(scale(loss, inv_batch));
      }
      clip_grad_norm(params, cfg.clip_norm);
      adam_step(params, adam, cfg, cosine_learning_rate(cfg, step++, total_steps));
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.test_rel_l2 = ds.manifest.test_indices.empty() ? std::nan("") : evaluate(model, ds, Split::test, knn).mean;
    rec.sigma_s = mask_trajectory(model);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (!ds.manifest.test_indices.empty() && (report.best_epoch == 0 || rec.test_rel_l2 < report.best_test_rel_l2)) {
      report.best_epoch = epoch;
      report.best_test_rel_l2 = rec.test_rel_l2;
      if (!cfg.checkpoint.empty()) save_checkpoint(model, cfg.checkpoint);
    }
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return report;
}

}  // namespace la2
