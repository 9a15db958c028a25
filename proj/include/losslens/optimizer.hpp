#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <stop_token>
#include <string_view>
#include <vector>

#include "losslens/errors.hpp"
#include "losslens/network.hpp"
#include "losslens/rng.hpp"

namespace losslens {

enum class Algorithm { gd, sgd, adam };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::gd: return "gd";
    case Algorithm::sgd: return "sgd";
    case Algorithm::adam: return "adam";
  }
  return "?";
}

inline Algorithm algorithm_from_string(std::string_view s) {
  if (s == "gd" || s == "GD") return Algorithm::gd;
  if (s == "sgd" || s == "SGD") return Algorithm::sgd;
  if (s == "adam" || s == "Adam") return Algorithm::adam;
  throw ArgumentError("algorithm", "unknown algorithm '" + std::string(s) + "'");
}

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  Algorithm algorithm = Algorithm::adam;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;  // SGD only
  std::size_t epochs = 1000;
  std::optional<double> loss_threshold;
  std::optional<std::chrono::milliseconds> timeout;
  std::size_t checkpoint_count = 10;
  std::uint64_t seed = 0;
  AdamParams adam;

  void validate(std::size_t n_samples) const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ArgumentError("learning_rate", "must be a positive number");
    if (algorithm == Algorithm::sgd && (batch_size < 1 || batch_size > n_samples))
      throw ArgumentError("batch_size", "must be between 1 and the number of training samples");
    if (checkpoint_count < 2) throw ArgumentError("checkpoint_count", "must be at least 2");
  }
};

// Weights plus Adam moments; GD and SGD only touch `weights`.
struct OptimizerState {
  WeightVector weights;
  WeightVector m;
  WeightVector v;
  std::size_t step = 0;

  explicit OptimizerState(WeightVector w) : weights(std::move(w)), m(weights.size(), 0.0), v(weights.size(), 0.0) {}
};

inline void step_gd(OptimizerState& s, std::span<const double> grad, double lr) {
  if (grad.size() != s.weights.size()) throw DimensionError("gradient length does not match weights");
  for (std::size_t i = 0; i < grad.size(); ++i) s.weights[i] -= lr * grad[i];
  ++s.step;
}

// Same update as GD; the caller passes a mini-batch gradient.
inline void step_sgd(OptimizerState& s, std::span<const double> batch_grad, double lr) { step_gd(s, batch_grad, lr); }

inline void step_adam(OptimizerState& s, std::span<const double> grad, double lr, const AdamParams& p = {}) {
  if (grad.size() != s.weights.size()) throw DimensionError("gradient length does not match weights");
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(p.beta1, t);
  const double c2 = 1.0 - std::pow(p.beta2, t);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    s.m[i] = p.beta1 * s.m[i] + (1.0 - p.beta1) * grad[i];
    s.v[i] = p.beta2 * s.v[i] + (1.0 - p.beta2) * grad[i] * grad[i];
    const double m_hat = s.m[i] / c1;
    const double v_hat = s.v[i] / c2;
    s.weights[i] -= lr * m_hat / (std::sqrt(v_hat) + p.epsilon);
  }
}

enum class Termination { completed, threshold, timeout, cancelled };

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::completed: return "completed";
    case Termination::threshold: return "threshold";
    case Termination::timeout: return "timeout";
    case Termination::cancelled: return "cancelled";
  }
  return "?";
}

struct Checkpoint {
  std::size_t epoch = 0;
  WeightVector weights;
  double train_loss = 0.0;
};

struct TrainRun {
  TrainConfig config;
  double initial_loss = 0.0;
  std::vector<double> loss_curve;  // loss after each executed epoch
  std::vector<Checkpoint> checkpoints;
  Termination termination = Termination::completed;

  std::size_t epochs_run() const { return loss_curve.size(); }
};

// Epochs round(i * E / (k - 1)) for i = 0..k-1, duplicates removed.
inline std::vector<std::size_t> checkpoint_epochs(std::size_t executed, std::size_t k) {
  std::vector<std::size_t> out;
  const std::size_t denom = k - 1;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t e = (2 * i * executed + denom) / (2 * denom);
    if (out.empty() || out.back() != e) out.push_back(e);
  }
  return out;
}

// Polling snapshot of a running training job. The trainer publishes after
// every epoch; readers never block it for longer than a copy.
class TrainProgress {
 public:
  struct Snapshot {
    std::size_t epoch = 0;
    std::size_t total_epochs = 0;
    std::vector<double> loss_curve;
    std::vector<std::size_t> checkpoint_epochs;
  };

  Snapshot snapshot() const {
    std::lock_guard lock(mu_);
    return snap_;
  }

  void publish_epoch(std::size_t epoch, double loss) {
    std::lock_guard lock(mu_);
    snap_.epoch = epoch;
    snap_.loss_curve.push_back(loss);
  }
  void publish_checkpoint(std::size_t epoch) {
    std::lock_guard lock(mu_);
    snap_.checkpoint_epochs.push_back(epoch);
  }
  void start(std::size_t total) {
    std::lock_guard lock(mu_);
    snap_ = Snapshot{};
    snap_.total_epochs = total;
  }

 private:
  mutable std::mutex mu_;
  Snapshot snap_;
};

inline TrainRun train(const NetworkArch& arch, std::span<const double> start, const Dataset& data,
                      const TrainConfig& config, TrainProgress* progress = nullptr, std::stop_token stop = {}) {
  detail::check_weights(arch, start);
  detail::check_data(arch, data);
  config.validate(data.size());

  using Clock = std::chrono::steady_clock;
  const auto started = Clock::now();

  TrainRun run;
  run.config = config;
  OptimizerState state(WeightVector(start.begin(), start.end()));
  run.initial_loss = loss(arch, state.weights, data);
  if (!std::isfinite(run.initial_loss)) throw DivergenceError(0);

  const bool may_stop_early = config.loss_threshold || config.timeout || stop.stop_possible();
  // Early stops re-space checkpoints over the executed epochs, which needs
  // the whole trajectory; otherwise only the planned epochs are kept.
  std::vector<WeightVector> history;
  std::vector<double> history_loss;
  const auto planned = checkpoint_epochs(config.epochs, config.checkpoint_count);
  std::size_t next_planned = 0;

  auto record = [&](std::size_t epoch, double l) {
    if (may_stop_early) {
      history.push_back(state.weights);
      history_loss.push_back(l);
    }
    while (next_planned < planned.size() && planned[next_planned] == epoch) {
      if (!may_stop_early) run.checkpoints.push_back({epoch, state.weights, l});
      if (progress) progress->publish_checkpoint(epoch);
      ++next_planned;
    }
  };

  if (progress) progress->start(config.epochs);
  record(0, run.initial_loss);

  Rng batch_rng(config.seed, Stream::sgd);
  std::vector<std::size_t> order(data.size());
  std::vector<std::size_t> batch;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (stop.stop_requested()) {
      run.termination = Termination::cancelled;
      break;
    }
    switch (config.algorithm) {
      case Algorithm::gd: {
        const auto g = gradient(arch, state.weights, data);
        step_gd(state, g, config.learning_rate);
        break;
      }
      case Algorithm::adam: {
        const auto g = gradient(arch, state.weights, data);
        step_adam(state, g, config.learning_rate, config.adam);
        break;
      }
      case Algorithm::sgd: {
        std::iota(order.begin(), order.end(), std::size_t{0});
        batch_rng.shuffle(order.begin(), order.end());
        for (std::size_t lo = 0; lo < order.size(); lo += config.batch_size) {
          const std::size_t hi = std::min(order.size(), lo + config.batch_size);
          batch.assign(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi));
          // Row order inside a batch is irrelevant mathematically; sorting
          // makes a full batch reproduce GD bit for bit.
          std::sort(batch.begin(), batch.end());
          const auto g = gradient(arch, state.weights, data, batch);
          step_sgd(state, g, config.learning_rate);
        }
        break;
      }
    }
    const double l = loss(arch, state.weights, data);
    if (!std::isfinite(l)) throw DivergenceError(epoch);
    run.loss_curve.push_back(l);
    if (progress) progress->publish_epoch(epoch, l);
    record(epoch, l);

    if (config.loss_threshold && l <= *config.loss_threshold) {
      if (epoch < config.epochs) run.termination = Termination::threshold;
      break;
    }
    if (config.timeout && Clock::now() - started >= *config.timeout) {
      if (epoch < config.epochs) run.termination = Termination::timeout;
      break;
    }
  }

  if (may_stop_early) {
    for (std::size_t e : checkpoint_epochs(run.epochs_run(), config.checkpoint_count))
      run.checkpoints.push_back({e, history[e], history_loss[e]});
  }
  return run;
}

}  // namespace losslens
