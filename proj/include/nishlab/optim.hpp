#pragma once

#include <cmath>
#include <string>

#include "nishlab/errors.hpp"
#include "nishlab/network.hpp"

namespace nishlab {

enum class OptimizerKind { SGD, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::SGD;
  double learning_rate = 0.1;
  double momentum = 0.0;  // SGD
  double beta1 = 0.9;     // Adam
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerConfig sgd(double lr = 0.1, double momentum = 0.0) {
    return {OptimizerKind::SGD, lr, momentum};
  }
  static OptimizerConfig adam(double lr = 1e-3) {
    OptimizerConfig c;
    c.kind = OptimizerKind::Adam;
    c.learning_rate = lr;
    return c;
  }

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("optimizer learning_rate must be > 0");
    if (kind == OptimizerKind::SGD && !(momentum >= 0.0 && momentum < 1.0))
      throw ConfigError("optimizer momentum must lie in [0, 1)");
    if (kind == OptimizerKind::Adam) {
      if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("optimizer beta1 must lie in [0, 1)");
      if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optimizer beta2 must lie in [0, 1)");
      if (!(epsilon > 0.0)) throw ConfigError("optimizer epsilon must be > 0");
    }
  }
};

namespace detail {

template <std::floating_point T>
void check_finite_grads(const TensorGroups<T>& grads) {
  for (std::size_t l = 0; l < grads.size(); ++l) {
    for (std::size_t s = 0; s < grads[l].size(); ++s) {
      if (!grads[l][s].all_finite()) {
        throw TrainingError("non-finite gradient in layer " + std::to_string(l) + " slot " +
                            std::to_string(s));
      }
    }
  }
}

template <std::floating_point T>
void ensure_state(TensorGroups<T>& state, const TensorGroups<T>& like) {
  if (state.size() == like.size()) return;
  state.clear();
  for (const auto& layer : like) {
    auto& dst = state.emplace_back();
    for (const auto& t : layer) dst.push_back(zeros_like(t));
  }
}

}  // namespace detail

// v <- momentum * v + g;  p <- p - lr * v
template <std::floating_point T>
void sgd_step(TensorGroups<T>& params, const TensorGroups<T>& grads, TensorGroups<T>& velocity,
              double lr, double momentum) {
  detail::check_finite_grads(grads);
  detail::ensure_state(velocity, params);
  for (std::size_t l = 0; l < params.size(); ++l) {
    for (std::size_t s = 0; s < params[l].size(); ++s) {
      auto& p = params[l][s];
      auto& v = velocity[l][s];
      const auto& g = grads[l][s];
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = T(momentum * v[i] + g[i]);
        p[i] = T(p[i] - lr * v[i]);
      }
    }
  }
}

// Adam with bias correction; t is the 1-based step count.
template <std::floating_point T>
void adam_step(TensorGroups<T>& params, const TensorGroups<T>& grads, TensorGroups<T>& m_state,
               TensorGroups<T>& v_state, long t, const OptimizerConfig& config) {
  if (t < 1) throw UsageError("adam step count must start at 1");
  detail::check_finite_grads(grads);
  detail::ensure_state(m_state, params);
  detail::ensure_state(v_state, params);
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (std::size_t l = 0; l < params.size(); ++l) {
    for (std::size_t s = 0; s < params[l].size(); ++s) {
      auto& p = params[l][s];
      auto& m = m_state[l][s];
      auto& v = v_state[l][s];
      const auto& g = grads[l][s];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i];
        m[i] = T(config.beta1 * m[i] + (1.0 - config.beta1) * gi);
        v[i] = T(config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi);
        const double m_hat = m[i] / correction1;
        const double v_hat = v[i] / correction2;
        p[i] = T(p[i] - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
      }
    }
  }
}

// Owns the optimizer state for one parameter store.
template <std::floating_point T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

  void step(TensorGroups<T>& params, const TensorGroups<T>& grads) {
    if (config_.kind == OptimizerKind::SGD) {
      sgd_step(params, grads, first_, config_.learning_rate, config_.momentum);
    } else {
      adam_step(params, grads, first_, second_, ++t_, config_);
    }
  }

  const OptimizerConfig& config() const noexcept { return config_; }

 private:
  OptimizerConfig config_;
  TensorGroups<T> first_;   // SGD velocity or Adam m
  TensorGroups<T> second_;  // Adam v
  long t_ = 0;
};

}  // namespace nishlab
