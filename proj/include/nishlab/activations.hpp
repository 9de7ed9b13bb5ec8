#pragma once

// Scalar activation kernels: forward values, analytic first derivatives and
// gradients with respect to the learnable parameters of PReLU and Swish.
//
// Every kernel is a template over the floating-point type so the tensor
// pipeline can run in float while verification runs in double.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "nishlab/errors.hpp"
#include "nishlab/random.hpp"

namespace nishlab {

enum class ActivationTag {
  ReLU,
  ReLU6,
  LeakyReLU,
  RReLU,
  PReLU,
  ELU,
  SELU,
  GELU,
  SiLU,
  Swish,
  Mish,
  Nish,
};

inline constexpr std::array<ActivationTag, 12> kAllActivationTags = {
    ActivationTag::ReLU, ActivationTag::ReLU6, ActivationTag::LeakyReLU,
    ActivationTag::RReLU, ActivationTag::PReLU, ActivationTag::ELU,
    ActivationTag::SELU, ActivationTag::GELU, ActivationTag::SiLU,
    ActivationTag::Swish, ActivationTag::Mish, ActivationTag::Nish};

enum class Mode { Train, Eval };

// Which negative-branch derivative Nish uses in backprop. `Printed` is the
// formula x(1-x)(1+cos x), kept only to show that it fails gradient checks.
enum class NishDerivative { Corrected, Printed };

inline std::string_view to_string(ActivationTag tag) {
  switch (tag) {
    case ActivationTag::ReLU: return "relu";
    case ActivationTag::ReLU6: return "relu6";
    case ActivationTag::LeakyReLU: return "leaky_relu";
    case ActivationTag::RReLU: return "rrelu";
    case ActivationTag::PReLU: return "prelu";
    case ActivationTag::ELU: return "elu";
    case ActivationTag::SELU: return "selu";
    case ActivationTag::GELU: return "gelu";
    case ActivationTag::SiLU: return "silu";
    case ActivationTag::Swish: return "swish";
    case ActivationTag::Mish: return "mish";
    case ActivationTag::Nish: return "nish";
  }
  return "unknown";
}

inline ActivationTag parse_activation_tag(std::string_view name) {
  for (ActivationTag tag : kAllActivationTags) {
    if (to_string(tag) == name) return tag;
  }
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

// Descriptor of one activation function. Only the fields relevant to `tag`
// are read; the rest keep their defaults.
struct ActivationKind {
  ActivationTag tag = ActivationTag::ReLU;
  double slope = 0.01;                    // LeakyReLU a
  double rho = 0.25;                      // PReLU, initial value when learned
  double lower = 0.125;                   // RReLU k
  double upper = 1.0 / 3.0;               // RReLU l
  double cap = 6.0;                       // ReLU6 n
  double alpha = 1.0;                     // ELU
  double selu_lambda = 1.0507009873554805;
  double selu_alpha = 1.6732632423543772;
  double beta = 1.0;                      // Swish
  bool beta_trainable = false;
  NishDerivative nish_derivative = NishDerivative::Corrected;

  static ActivationKind of(ActivationTag t) {
    ActivationKind k;
    k.tag = t;
    return k;
  }
  static ActivationKind leaky_relu(double a) {
    auto k = of(ActivationTag::LeakyReLU);
    k.slope = a;
    return k;
  }
  static ActivationKind rrelu(double k_lower, double l_upper) {
    auto k = of(ActivationTag::RReLU);
    k.lower = k_lower;
    k.upper = l_upper;
    return k;
  }
  static ActivationKind prelu(double rho) {
    auto k = of(ActivationTag::PReLU);
    k.rho = rho;
    return k;
  }
  static ActivationKind swish(double beta, bool trainable) {
    auto k = of(ActivationTag::Swish);
    k.beta = beta;
    k.beta_trainable = trainable;
    return k;
  }

  std::string_view name() const { return to_string(tag); }

  // PReLU always learns rho; Swish learns beta only when asked to.
  bool has_trainable_param() const {
    return tag == ActivationTag::PReLU ||
           (tag == ActivationTag::Swish && beta_trainable);
  }

  bool is_stochastic_in_training() const { return tag == ActivationTag::RReLU; }

  void validate() const {
    switch (tag) {
      case ActivationTag::LeakyReLU:
        if (!(slope > 0.0) || !std::isfinite(slope))
          throw ConfigError("leaky_relu slope must be a positive finite number");
        break;
      case ActivationTag::RReLU:
        if (!(0.0 <= lower && lower < upper && upper < 1.0))
          throw ConfigError("rrelu bounds must satisfy 0 <= lower < upper < 1");
        break;
      case ActivationTag::ReLU6:
        if (!(cap > 0.0) || !std::isfinite(cap))
          throw ConfigError("relu6 cap must be a positive finite number");
        break;
      case ActivationTag::PReLU:
        if (!std::isfinite(rho)) throw ConfigError("prelu rho must be finite");
        break;
      case ActivationTag::ELU:
        if (!std::isfinite(alpha)) throw ConfigError("elu alpha must be finite");
        break;
      case ActivationTag::SELU:
        if (!std::isfinite(selu_lambda) || !std::isfinite(selu_alpha))
          throw ConfigError("selu lambda/alpha must be finite");
        break;
      case ActivationTag::Swish:
        if (!std::isfinite(beta)) throw ConfigError("swish beta must be finite");
        break;
      default:
        break;
    }
  }

  // Points where the function is not twice differentiable. Central
  // differences are only second-order accurate away from these.
  std::vector<double> kinks() const {
    switch (tag) {
      case ActivationTag::ReLU:
      case ActivationTag::LeakyReLU:
      case ActivationTag::RReLU:
      case ActivationTag::PReLU:
      case ActivationTag::ELU:
      case ActivationTag::SELU:
      case ActivationTag::Nish:
        return {0.0};
      case ActivationTag::ReLU6:
        return {0.0, cap};
      default:
        return {};
    }
  }
};

namespace detail {

template <std::floating_point T>
inline void require_finite(T x, const char* fn) {
  if (!std::isfinite(x)) throw DomainError(std::string(fn) + ": non-finite input");
}

}  // namespace detail

// Logistic function, branched on sign so exp never overflows.
template <std::floating_point T>
T sigmoid(T x) {
  detail::require_finite(x, "sigmoid");
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// ln(1 + e^x) as max(x, 0) + log1p(e^-|x|).
template <std::floating_point T>
T softplus(T x) {
  detail::require_finite(x, "softplus");
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

// Identity for x >= 0, sigmoid(x) * (x + sin x) below zero.
template <std::floating_point T>
T nish(T x) {
  detail::require_finite(x, "nish");
  if (x >= T(0)) return x;
  return sigmoid(x) * (x + std::sin(x));
}

// Product-rule derivative of nish. Continuous at 0 where both sides equal 1.
template <std::floating_point T>
T nish_prime(T x) {
  detail::require_finite(x, "nish_prime");
  if (x >= T(0)) return T(1);
  const T s = sigmoid(x);
  return s * (T(1) - s) * (x + std::sin(x)) + s * (T(1) + std::cos(x));
}

// The negative branch x(1-x)(1+cos x), a mismatched formula that is not the
// derivative of nish; only used to demonstrate the failing gradient check.
template <std::floating_point T>
T nish_prime_printed(T x) {
  detail::require_finite(x, "nish_prime_printed");
  if (x >= T(0)) return T(1);
  return x * (T(1) - x) * (T(1) + std::cos(x));
}

template <std::floating_point T>
T mish(T x) {
  detail::require_finite(x, "mish");
  return x * std::tanh(softplus(x));
}

template <std::floating_point T>
T mish_prime(T x) {
  detail::require_finite(x, "mish_prime");
  const T t = std::tanh(softplus(x));
  return t + x * (T(1) - t * t) * sigmoid(x);
}

namespace detail {

inline constexpr double kSqrt2OverPi = 0.7978845608028654;
inline constexpr double kGeluCubic = 0.044715;

template <std::floating_point T>
T gelu(T x) {
  const T inner = T(kSqrt2OverPi) * (x + T(kGeluCubic) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(inner));
}

template <std::floating_point T>
T gelu_prime(T x) {
  const T inner = T(kSqrt2OverPi) * (x + T(kGeluCubic) * x * x * x);
  const T t = std::tanh(inner);
  const T dinner = T(kSqrt2OverPi) * (T(1) + T(3 * kGeluCubic) * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * dinner;
}

template <std::floating_point T>
T rrelu_eval_slope(const ActivationKind& kind) {
  return T(0.5 * (kind.lower + kind.upper));
}

}  // namespace detail

template <std::floating_point T>
struct ActivationOutput {
  T value;
  // RReLU in training: the slope drawn for this element, replayed in backward.
  std::optional<T> sampled_slope;
};

// Evaluates `kind` at x. `noise` is needed only for RReLU in Train mode,
// where the negative slope is drawn from Uniform[lower, upper).
template <std::floating_point T>
ActivationOutput<T> activation_forward(const ActivationKind& kind, Mode mode, T x,
                                       Rng* noise = nullptr) {
  detail::require_finite(x, "activation_forward");
  switch (kind.tag) {
    case ActivationTag::ReLU:
      return {x >= T(0) ? x : T(0), std::nullopt};
    case ActivationTag::ReLU6:
      return {std::min(std::max(x, T(0)), T(kind.cap)), std::nullopt};
    case ActivationTag::LeakyReLU:
      return {x >= T(0) ? x : T(kind.slope) * x, std::nullopt};
    case ActivationTag::RReLU: {
      if (mode == Mode::Eval) {
        return {x >= T(0) ? x : detail::rrelu_eval_slope<T>(kind) * x, std::nullopt};
      }
      if (noise == nullptr) {
        throw ConfigError("rrelu in training mode requires a randomness source");
      }
      std::uniform_real_distribution<double> dist(kind.lower, kind.upper);
      const T a = T(dist(*noise));
      return {x >= T(0) ? x : a * x, a};
    }
    case ActivationTag::PReLU:
      return {x >= T(0) ? x : T(kind.rho) * x, std::nullopt};
    case ActivationTag::ELU:
      return {x >= T(0) ? x : T(kind.alpha) * std::expm1(x), std::nullopt};
    case ActivationTag::SELU: {
      const T lam = T(kind.selu_lambda);
      return {x >= T(0) ? lam * x : lam * T(kind.selu_alpha) * std::expm1(x),
              std::nullopt};
    }
    case ActivationTag::GELU:
      return {detail::gelu(x), std::nullopt};
    case ActivationTag::SiLU:
      return {x * sigmoid(x), std::nullopt};
    case ActivationTag::Swish:
      return {x * sigmoid(T(kind.beta) * x), std::nullopt};
    case ActivationTag::Mish:
      return {mish(x), std::nullopt};
    case ActivationTag::Nish:
      return {nish(x), std::nullopt};
  }
  throw ConfigError("unhandled activation");
}

// Convenience wrapper for the deterministic cases.
template <std::floating_point T>
T activation_value(const ActivationKind& kind, T x) {
  return activation_forward(kind, Mode::Eval, x).value;
}

// Exact df/dx. At the kinks of piecewise-linear kinds the right-hand
// derivative is returned. For RReLU pass the slope sampled in the matching
// forward; without it the Eval slope (lower + upper) / 2 is used.
template <std::floating_point T>
T activation_derivative(const ActivationKind& kind, T x,
                        std::optional<T> sampled_slope = std::nullopt) {
  detail::require_finite(x, "activation_derivative");
  switch (kind.tag) {
    case ActivationTag::ReLU:
      return x >= T(0) ? T(1) : T(0);
    case ActivationTag::ReLU6:
      return (x >= T(0) && x < T(kind.cap)) ? T(1) : T(0);
    case ActivationTag::LeakyReLU:
      return x >= T(0) ? T(1) : T(kind.slope);
    case ActivationTag::RReLU:
      if (x >= T(0)) return T(1);
      return sampled_slope ? *sampled_slope : detail::rrelu_eval_slope<T>(kind);
    case ActivationTag::PReLU:
      return x >= T(0) ? T(1) : T(kind.rho);
    case ActivationTag::ELU:
      return x >= T(0) ? T(1) : T(kind.alpha) * std::exp(x);
    case ActivationTag::SELU: {
      const T lam = T(kind.selu_lambda);
      return x >= T(0) ? lam : lam * T(kind.selu_alpha) * std::exp(x);
    }
    case ActivationTag::GELU:
      return detail::gelu_prime(x);
    case ActivationTag::SiLU: {
      const T s = sigmoid(x);
      return s + x * s * (T(1) - s);
    }
    case ActivationTag::Swish: {
      const T b = T(kind.beta);
      const T s = sigmoid(b * x);
      return s + b * x * s * (T(1) - s);
    }
    case ActivationTag::Mish:
      return mish_prime(x);
    case ActivationTag::Nish:
      return kind.nish_derivative == NishDerivative::Printed ? nish_prime_printed(x)
                                                             : nish_prime(x);
  }
  throw ConfigError("unhandled activation");
}

// d f / d(rho) for PReLU, d f / d(beta) for trainable Swish.
template <std::floating_point T>
T activation_param_gradient(const ActivationKind& kind, T x) {
  detail::require_finite(x, "activation_param_gradient");
  if (kind.tag == ActivationTag::PReLU) return x < T(0) ? x : T(0);
  if (kind.tag == ActivationTag::Swish && kind.beta_trainable) {
    const T s = sigmoid(T(kind.beta) * x);
    return x * x * s * (T(1) - s);
  }
  throw UsageError("activation '" + std::string(kind.name()) +
                   "' has no trainable parameter");
}

struct Minimum {
  double argmin;
  double value;
};

// Global minimum of the activation on [lo, hi]: dense grid scan followed by
// golden-section refinement inside the bracket around the best grid point.
inline Minimum find_minimum(const ActivationKind& kind, double lo, double hi,
                            double grid_step = 1e-4) {
  if (!(lo < hi)) throw UsageError("find_minimum requires lo < hi");
  if (!(grid_step > 0.0)) throw UsageError("find_minimum requires a positive step");
  auto f = [&](double x) { return activation_value(kind, x); };

  const auto cells = static_cast<std::size_t>(std::ceil((hi - lo) / grid_step));
  const double step = (hi - lo) / static_cast<double>(cells);
  std::size_t best = 0;
  double best_value = f(lo);
  for (std::size_t i = 1; i <= cells; ++i) {
    const double x = i == cells ? hi : lo + step * static_cast<double>(i);
    const double v = f(x);
    if (v < best_value) {
      best_value = v;
      best = i;
    }
  }

  double a = lo + step * static_cast<double>(best == 0 ? 0 : best - 1);
  double b = std::min(hi, lo + step * static_cast<double>(best + 1));
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > 1e-12) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  const double v = f(x);
  if (v <= best_value) return {x, v};
  const double grid_x = best == cells ? hi : lo + step * static_cast<double>(best);
  return {grid_x, best_value};
}

}  // namespace nishlab
