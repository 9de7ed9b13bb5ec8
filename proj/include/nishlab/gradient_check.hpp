#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "nishlab/errors.hpp"
#include "nishlab/network.hpp"

namespace nishlab {

struct GradientCheckReport {
  double max_relative_discrepancy = 0.0;
  std::size_t layer = 0;
  std::string slot;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Compares backprop gradients of the mean cross-entropy loss against central
// differences (L(p+h) - L(p-h)) / 2h for every learnable scalar. The
// relative discrepancy uses max(|a|, |b|, 1e-8) as denominator.
//
// Train mode is accepted only when nothing in the network is stochastic;
// BatchNorm running statistics are restored after every evaluation.
//
// In double precision the loss is resolved to about 1e-16, so the central
// difference carries absolute noise near 1e-11 at h = 1e-5 and gradients
// below about 1e-7 cannot reach a 1e-4 relative agreement. Use long double
// when the network has such small gradients.
template <std::floating_point T>
GradientCheckReport gradient_check(const NetworkSpec& spec, ParamStore<T> params,
                                   const Tensor<T>& batch, std::span<const int> labels, double h,
                                   Mode mode = Mode::Eval) {
  if (!(h > 0.0)) throw UsageError("gradient_check step must be positive");
  if (mode == Mode::Train && spec.has_stochastic_layers()) {
    throw ConfigError("gradient_check needs a deterministic network: disable dropout and RReLU "
                      "sampling or run in Eval mode");
  }
  const auto saved_mean = params.running_mean;
  const auto saved_var = params.running_var;
  auto restore_state = [&] {
    params.running_mean = saved_mean;
    params.running_var = saved_var;
  };

  auto fwd = network_forward(spec, params, batch, mode, 0);
  restore_state();
  auto loss = softmax_cross_entropy(fwd.output, labels);
  const GradStore<T> analytic = network_backward(spec, params, fwd.cache, loss.grad);

  auto loss_at = [&]() {
    auto out = network_forward(spec, params, batch, mode, 0, false);
    restore_state();
    return softmax_cross_entropy(out.output, labels).loss;
  };

  GradientCheckReport report;
  for (std::size_t l = 0; l < params.learnable.size(); ++l) {
    const auto names = param_slot_names(spec.layers[l]);
    for (std::size_t s = 0; s < params.learnable[l].size(); ++s) {
      Tensor<T>& p = params.learnable[l][s];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const T original = p[i];
        p[i] = original + T(h);
        const accum_t<T> plus = loss_at();
        p[i] = original - T(h);
        const accum_t<T> minus = loss_at();
        p[i] = original;
        const accum_t<T> numeric = (plus - minus) / (2 * accum_t<T>(h));
        const accum_t<T> a = analytic.grads[l][s][i];
        const accum_t<T> denom = std::max({std::abs(a), std::abs(numeric), accum_t<T>(1e-8)});
        const double rel = static_cast<double>(std::abs(a - numeric) / denom);
        ++report.checked;
        if (rel > report.max_relative_discrepancy || !std::isfinite(rel)) {
          report.max_relative_discrepancy = rel;
          report.layer = l;
          report.slot = names.at(s);
          report.index = i;
          report.analytic = static_cast<double>(a);
          report.numeric = static_cast<double>(numeric);
        }
      }
    }
  }
  return report;
}

}  // namespace nishlab
