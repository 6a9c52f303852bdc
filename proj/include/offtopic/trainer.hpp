#pragma once

// Weighted binary cross-entropy training with the Nadam optimizer
// (Nesterov-accelerated adaptive moments with bias correction), dev-loss
// early stopping, and best-epoch parameter snapshots. Deterministic: one rng
// stream drives shuffling and dropout, so a seed fixes the whole trajectory.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "offtopic/data.hpp"
#include "offtopic/errors.hpp"
#include "offtopic/graph.hpp"
#include "offtopic/kernels.hpp"
#include "offtopic/model.hpp"

namespace offtopic {

struct TrainConfig {
  double learning_rate = 0.002;
  int batch_size = 1024;
  int dev_batch_size = 512;
  int max_epochs = 20;
  int early_stop_patience = 3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
  std::uint32_t seed = 1;

  void validate() const {
    if (learning_rate <= 0.0) throw ValueError("learning_rate must be positive");
    if (batch_size < 1) throw ValueError("batch_size must be positive");
    if (dev_batch_size < 1) throw ValueError("dev_batch_size must be positive");
    if (max_epochs < 1) throw ValueError("max_epochs must be positive");
    if (early_stop_patience < 1) throw ValueError("early_stop_patience must be positive");
    if (beta1 <= 0.0 || beta1 >= 1.0) throw ValueError("beta1 must lie in (0, 1)");
    if (beta2 <= 0.0 || beta2 >= 1.0) throw ValueError("beta2 must lie in (0, 1)");
    if (eps_hat <= 0.0) throw ValueError("eps_hat must be positive");
  }
};

// Dev-loss improvements smaller than this do not reset patience.
inline constexpr double kDevLossImprovement = 1e-5;

// Plain-value counterpart of the graph BCE node, for reporting and tests.
inline double weighted_bce_value(double p, int label, double weight) {
  const double lo = 1e-7, hi = 1.0 - 1e-7;
  const double pc = p < lo ? lo : (p > hi ? hi : p);
  return -weight * (label == 1 ? std::log(pc) : std::log(1.0 - pc));
}

template <typename T>
struct NadamState {
  long long step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> n;

  explicit NadamState(const ModelParams<T>& params) {
    m.reserve(params.names.size());
    n.reserve(params.names.size());
    for (const auto& name : params.names) {
      const std::size_t sz = params.at(name)->size();
      m.emplace_back(sz, T(0));
      n.emplace_back(sz, T(0));
    }
  }
};

// One optimizer step over all parameters. Embedding row 0 (padding) is
// frozen. Throws NumericError naming the parameter on a non-finite gradient,
// before any state is touched.
template <typename T>
void nadam_step(ModelParams<T>& params, NadamState<T>& state, const TrainConfig& cfg) {
  for (std::size_t pi = 0; pi < params.names.size(); ++pi) {
    const auto& t = params.at(params.names[pi]);
    for (const T g : t->grad) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter '" + params.names[pi] + "'");
      }
    }
  }
  ++state.step;
  const double t_now = static_cast<double>(state.step);
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.learning_rate);
  const T eps = static_cast<T>(cfg.eps_hat);
  const T bias1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t_now));
  const T bias1_next = static_cast<T>(1.0 - std::pow(cfg.beta1, t_now + 1.0));
  const T bias2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t_now));
  for (std::size_t pi = 0; pi < params.names.size(); ++pi) {
    const std::string& name = params.names[pi];
    auto& tensor = *params.at(name);
    auto& m = state.m[pi];
    auto& n = state.n[pi];
    const std::size_t start =
        name == "embedding" ? static_cast<std::size_t>(params.config.embed_dim) : 0;
    for (std::size_t j = start; j < tensor.value.size(); ++j) {
      const T g = tensor.grad[j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      n[j] = b2 * n[j] + (T(1) - b2) * g * g;
      const T m_bar = (T(1) - b1) * g / bias1 + b1 * m[j] / bias1_next;
      const T n_hat = n[j] / bias2;
      tensor.value[j] -= lr * m_bar / (std::sqrt(n_hat) + eps);
    }
  }
}

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double seconds = 0.0;
};

template <typename T>
struct TrainResult {
  ModelParams<T> best_params;
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_dev_loss = std::numeric_limits<double>::infinity();
  bool diverged = false;
  bool interrupted = false;

  explicit TrainResult(ModelParams<T> params) : best_params(std::move(params)) {}
};

namespace detail {

// Weighted-mean dev loss in eval mode. Examples are scored independently
// (read-only parameters), accumulated in index order for determinism.
template <typename T>
double dev_loss(const ModelParams<T>& params, const std::vector<Example>& dev) {
  std::vector<double> losses(dev.size());
  kernels::parallel_for(static_cast<int>(dev.size()), [&](int i) {
    const auto& ex = dev[static_cast<std::size_t>(i)];
    std::mt19937 unused(0);
    Graph<T> g(/*no_grad=*/true);
    auto res = forward(g, params, ex.prompt_ids, ex.response_ids, /*train_mode=*/false, unused);
    losses[static_cast<std::size_t>(i)] =
        weighted_bce_value(static_cast<double>(res.p_on_topic->value[0]), ex.label, ex.weight);
  });
  double total = 0.0, weight_sum = 0.0;
  for (std::size_t i = 0; i < dev.size(); ++i) {
    total += losses[i];
    weight_sum += dev[i].weight;
  }
  return total / weight_sum;
}

}  // namespace detail

// Full training loop: per epoch shuffle + batch, forward in train mode,
// weighted BCE normalized by the batch's weight sum, backward, Nadam step;
// then dev evaluation, best-snapshot bookkeeping, and early stopping.
// `interrupt` (optional) is polled between batches; when it fires the loop
// exits with interrupted=true and the best snapshot so far.
// `on_epoch` (optional) observes each completed epoch's stats.
template <typename T>
TrainResult<T> train(ModelParams<T>& params, const std::vector<Example>& train_examples,
                     const std::vector<Example>& dev_examples, const TrainConfig& cfg,
                     const std::atomic<bool>* interrupt = nullptr,
                     const std::function<void(const EpochStats&)>& on_epoch = nullptr) {
  cfg.validate();
  if (train_examples.empty()) throw ValueError("train: no training examples");
  if (dev_examples.empty()) throw ValueError("train: no dev examples");

  TrainResult<T> result(params.clone());
  NadamState<T> state(params);
  std::mt19937 rng(cfg.seed);
  int epochs_since_improve = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    auto batches = make_batches(train_examples.size(), cfg.batch_size, /*shuffle=*/true, rng);
    double loss_total = 0.0, weight_total = 0.0;
    bool stopped = false;
    try {
      for (const auto& batch : batches) {
        if (interrupt && interrupt->load()) {
          result.interrupted = true;
          stopped = true;
          break;
        }
        Graph<T> g;
        std::vector<TensorPtr<T>> losses;
        losses.reserve(batch.size());
        double weight_sum = 0.0;
        for (const std::size_t idx : batch) {
          const auto& ex = train_examples[idx];
          auto res = forward(g, params, ex.prompt_ids, ex.response_ids, /*train_mode=*/true, rng);
          losses.push_back(g.weighted_bce(res.p_on_topic, ex.label, static_cast<T>(ex.weight)));
          weight_sum += ex.weight;
        }
        auto batch_loss = g.scaled_sum(losses, static_cast<T>(1.0 / weight_sum));
        params.zero_grad();
        g.backward(batch_loss);
        nadam_step(params, state, cfg);
        loss_total += static_cast<double>(batch_loss->value[0]) * weight_sum;
        weight_total += weight_sum;
      }
    } catch (const NumericError&) {
      result.diverged = true;
      stopped = true;
    }
    if (stopped) break;

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_total / weight_total;
    stats.dev_loss = detail::dev_loss(params, dev_examples);
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (!std::isfinite(stats.dev_loss)) {
      result.diverged = true;
      break;
    }
    if (stats.dev_loss < result.best_dev_loss - kDevLossImprovement) {
      result.best_dev_loss = stats.dev_loss;
      result.best_epoch = epoch;
      result.best_params.copy_values_from(params);
      epochs_since_improve = 0;
    } else {
      ++epochs_since_improve;
      if (epochs_since_improve >= cfg.early_stop_patience) break;
    }
  }

  if (result.best_epoch < 0) {
    // Nothing ever improved on infinity (immediate divergence/interrupt):
    // fall back to the current parameters.
    result.best_params.copy_values_from(params);
  }
  return result;
}

}  // namespace offtopic
