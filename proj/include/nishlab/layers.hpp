#pragma once

// Per-layer forward and backward kernels on Tensor<T>.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "nishlab/activations.hpp"
#include "nishlab/errors.hpp"
#include "nishlab/random.hpp"
#include "nishlab/tensor.hpp"

namespace nishlab {

// ---------------------------------------------------------------- dense

// y[b,o] = sum_i x[b,i] * W[i,o] + bias[o]
template <std::floating_point T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (x.rank() != 2 || weights.rank() != 2 || bias.rank() != 1 ||
      x.dim(1) != weights.dim(0) || bias.dim(0) != weights.dim(1)) {
    throw ShapeError("dense: x " + shape_string(x.shape()) + ", W " +
                     shape_string(weights.shape()) + ", b " + shape_string(bias.shape()));
  }
  const std::size_t batch = x.dim(0), in = x.dim(1), out = weights.dim(1);
  Tensor<T> y({batch, out});
  for (std::size_t b = 0; b < batch; ++b) {
    T* row = y.data() + b * out;
    for (std::size_t o = 0; o < out; ++o) row[o] = bias[o];
    const T* xin = x.data() + b * in;
    for (std::size_t i = 0; i < in; ++i) {
      const T xi = xin[i];
      if (xi == T(0)) continue;
      const T* w = weights.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) row[o] += xi * w[o];
    }
  }
  return y;
}

template <std::floating_point T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <std::floating_point T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weights,
                             const Tensor<T>& grad_out, bool need_input_grad = true) {
  const std::size_t batch = x.dim(0), in = x.dim(1), out = weights.dim(1);
  DenseGrads<T> g{Tensor<T>(), Tensor<T>({in, out}), Tensor<T>({out})};
  for (std::size_t b = 0; b < batch; ++b) {
    const T* gy = grad_out.data() + b * out;
    const T* xin = x.data() + b * in;
    for (std::size_t o = 0; o < out; ++o) g.bias[o] += gy[o];
    for (std::size_t i = 0; i < in; ++i) {
      const T xi = xin[i];
      if (xi == T(0)) continue;
      T* gw = g.weights.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) gw[o] += xi * gy[o];
    }
  }
  if (need_input_grad) {
    g.input = Tensor<T>({batch, in});
    for (std::size_t b = 0; b < batch; ++b) {
      const T* gy = grad_out.data() + b * out;
      T* gx = g.input.data() + b * in;
      for (std::size_t i = 0; i < in; ++i) {
        const T* w = weights.data() + i * out;
        T acc = T(0);
        for (std::size_t o = 0; o < out; ++o) acc += w[o] * gy[o];
        gx[i] = acc;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------- conv2d

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

inline std::size_t conv_output_size(std::size_t in, std::size_t kernel, ConvGeometry g) {
  const std::size_t padded = in + 2 * g.padding;
  if (g.stride == 0 || padded < kernel || (padded - kernel) % g.stride != 0) {
    throw ShapeError("conv2d: input " + std::to_string(in) + " with kernel " +
                     std::to_string(kernel) + ", stride " + std::to_string(g.stride) +
                     ", padding " + std::to_string(g.padding) +
                     " does not give an integer output size");
  }
  return (padded - kernel) / g.stride + 1;
}

namespace detail {

struct ConvDims {
  std::size_t channels, height, width, filters, k, oh, ow;
  std::ptrdiff_t stride, pad;

  std::size_t patch() const { return channels * k * k; }
  std::size_t positions() const { return oh * ow; }
};

// Unrolls one sample into columns: col[(c*K + ky)*K + kx][oy*OW + ox] holds
// the input pixel under that kernel tap, zero where it falls in the padding.
template <std::floating_point T>
void im2col(const T* sample, const ConvDims& d, std::vector<T>& col) {
  col.assign(d.patch() * d.positions(), T(0));
  for (std::size_t c = 0; c < d.channels; ++c) {
    const T* plane = sample + c * d.height * d.width;
    for (std::size_t ky = 0; ky < d.k; ++ky) {
      for (std::size_t kx = 0; kx < d.k; ++kx) {
        T* row = col.data() + ((c * d.k + ky) * d.k + kx) * d.positions();
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy) * d.stride - d.pad + static_cast<std::ptrdiff_t>(ky);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.height)) continue;
          const T* in_row = plane + iy * static_cast<std::ptrdiff_t>(d.width);
          T* out = row + oy * d.ow;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * d.stride - d.pad +
                                      static_cast<std::ptrdiff_t>(kx);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(d.width)) out[ox] = in_row[ix];
          }
        }
      }
    }
  }
}

// Scatter-adds columns back onto one sample; the adjoint of im2col.
template <std::floating_point T>
void col2im(const std::vector<T>& col, const ConvDims& d, T* sample) {
  for (std::size_t c = 0; c < d.channels; ++c) {
    T* plane = sample + c * d.height * d.width;
    for (std::size_t ky = 0; ky < d.k; ++ky) {
      for (std::size_t kx = 0; kx < d.k; ++kx) {
        const T* row = col.data() + ((c * d.k + ky) * d.k + kx) * d.positions();
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy) * d.stride - d.pad + static_cast<std::ptrdiff_t>(ky);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.height)) continue;
          T* in_row = plane + iy * static_cast<std::ptrdiff_t>(d.width);
          const T* src = row + oy * d.ow;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * d.stride - d.pad +
                                      static_cast<std::ptrdiff_t>(kx);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(d.width)) in_row[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Eight independent partial sums so the loop vectorizes without reassociation flags.
template <std::floating_point T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  T total = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

}  // namespace detail

// Cross-correlation with zero padding. x: [B,C,H,W], kernels: [F,C,K,K].
template <std::floating_point T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias,
                         ConvGeometry geom) {
  if (x.rank() != 4 || kernels.rank() != 4 || bias.rank() != 1 ||
      x.dim(1) != kernels.dim(1) || kernels.dim(2) != kernels.dim(3) ||
      bias.dim(0) != kernels.dim(0)) {
    throw ShapeError("conv2d: x " + shape_string(x.shape()) + ", kernels " +
                     shape_string(kernels.shape()) + ", bias " + shape_string(bias.shape()));
  }
  const std::size_t k = kernels.dim(2);
  const detail::ConvDims d{x.dim(1),
                           x.dim(2),
                           x.dim(3),
                           kernels.dim(0),
                           k,
                           conv_output_size(x.dim(2), k, geom),
                           conv_output_size(x.dim(3), k, geom),
                           static_cast<std::ptrdiff_t>(geom.stride),
                           static_cast<std::ptrdiff_t>(geom.padding)};
  const std::size_t batch = x.dim(0), patch = d.patch(), positions = d.positions();

  Tensor<T> y({batch, d.filters, d.oh, d.ow});
  std::vector<T> col;
  for (std::size_t n = 0; n < batch; ++n) {
    detail::im2col(&x.at(n, 0, 0, 0), d, col);
    for (std::size_t f = 0; f < d.filters; ++f) {
      T* out = &y.at(n, f, 0, 0);
      std::fill_n(out, positions, bias[f]);
      const T* w = kernels.data() + f * patch;
      for (std::size_t j = 0; j < patch; ++j) {
        const T wj = w[j];
        const T* src = col.data() + j * positions;
        for (std::size_t p = 0; p < positions; ++p) out[p] += wj * src[p];
      }
    }
  }
  return y;
}

template <std::floating_point T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> kernels;
  Tensor<T> bias;
};

template <std::floating_point T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& kernels,
                             const Tensor<T>& grad_out, ConvGeometry geom,
                             bool need_input_grad = true) {
  const detail::ConvDims d{x.dim(1),
                           x.dim(2),
                           x.dim(3),
                           kernels.dim(0),
                           kernels.dim(2),
                           grad_out.dim(2),
                           grad_out.dim(3),
                           static_cast<std::ptrdiff_t>(geom.stride),
                           static_cast<std::ptrdiff_t>(geom.padding)};
  const std::size_t batch = x.dim(0), patch = d.patch(), positions = d.positions();

  ConvGrads<T> g{need_input_grad ? Tensor<T>(x.shape()) : Tensor<T>(),
                 Tensor<T>(kernels.shape()), Tensor<T>({d.filters})};
  std::vector<T> col, gcol;
  for (std::size_t n = 0; n < batch; ++n) {
    detail::im2col(&x.at(n, 0, 0, 0), d, col);
    if (need_input_grad) gcol.assign(patch * positions, T(0));
    for (std::size_t f = 0; f < d.filters; ++f) {
      const T* gout = &grad_out.at(n, f, 0, 0);
      T bsum = T(0);
      for (std::size_t p = 0; p < positions; ++p) bsum += gout[p];
      g.bias[f] += bsum;
      const T* w = kernels.data() + f * patch;
      T* gw = g.kernels.data() + f * patch;
      for (std::size_t j = 0; j < patch; ++j) {
        gw[j] += detail::dot(gout, col.data() + j * positions, positions);
        if (need_input_grad) {
          const T wj = w[j];
          T* dst = gcol.data() + j * positions;
          for (std::size_t p = 0; p < positions; ++p) dst[p] += wj * gout[p];
        }
      }
    }
    if (need_input_grad) detail::col2im(gcol, d, &g.input.at(n, 0, 0, 0));
  }
  return g;
}

// ---------------------------------------------------------------- batchnorm

// Features are axis 1; statistics pool over the batch axis and, for 4-D
// inputs, the spatial axes.
struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;
};

template <std::floating_point T>
struct BatchNormCache {
  Tensor<T> normalized;         // x_hat
  std::vector<accum_t<T>> inv_std;  // per feature
  bool batch_statistics = false;
};

namespace detail {

struct FeatureLayout {
  std::size_t outer;    // batch
  std::size_t features;
  std::size_t inner;    // spatial positions per feature
};

template <std::floating_point T>
FeatureLayout feature_layout(const Tensor<T>& x) {
  if (x.rank() == 2) return {x.dim(0), x.dim(1), 1};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
  throw ShapeError("batchnorm expects a 2-D or 4-D input, got " + shape_string(x.shape()));
}

}  // namespace detail

template <std::floating_point T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                            Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode,
                            BatchNormOptions options, BatchNormCache<T>* cache = nullptr) {
  const auto layout = detail::feature_layout(x);
  if (gamma.size() != layout.features || beta.size() != layout.features ||
      running_mean.size() != layout.features || running_var.size() != layout.features) {
    throw ShapeError("batchnorm: parameter size does not match " + std::to_string(layout.features) +
                     " features");
  }
  if (mode == Mode::Train && layout.outer < 2) {
    throw ConfigError("batchnorm in training mode needs a batch of at least 2");
  }
  const std::size_t count = layout.outer * layout.inner;
  std::vector<accum_t<T>> mean(layout.features), inv_std(layout.features);
  for (std::size_t f = 0; f < layout.features; ++f) {
    if (mode == Mode::Train) {
      accum_t<T> sum = 0.0;
      for (std::size_t b = 0; b < layout.outer; ++b) {
        const T* p = x.data() + (b * layout.features + f) * layout.inner;
        for (std::size_t i = 0; i < layout.inner; ++i) sum += p[i];
      }
      const accum_t<T> mu = sum / static_cast<accum_t<T>>(count);
      accum_t<T> sq = 0.0;
      for (std::size_t b = 0; b < layout.outer; ++b) {
        const T* p = x.data() + (b * layout.features + f) * layout.inner;
        for (std::size_t i = 0; i < layout.inner; ++i) {
          const accum_t<T> d = p[i] - mu;
          sq += d * d;
        }
      }
      const accum_t<T> var = sq / static_cast<accum_t<T>>(count);
      mean[f] = mu;
      inv_std[f] = 1.0 / std::sqrt(var + options.epsilon);
      // Running variance tracks the unbiased batch estimate.
      const accum_t<T> unbiased = count > 1 ? sq / static_cast<accum_t<T>>(count - 1) : var;
      running_mean[f] = T((1.0 - options.momentum) * running_mean[f] + options.momentum * mu);
      running_var[f] = T((1.0 - options.momentum) * running_var[f] + options.momentum * unbiased);
    } else {
      mean[f] = running_mean[f];
      inv_std[f] = 1.0 / std::sqrt(static_cast<accum_t<T>>(running_var[f]) + options.epsilon);
    }
  }

  Tensor<T> y(x.shape());
  Tensor<T> normalized = cache ? Tensor<T>(x.shape()) : Tensor<T>();
  for (std::size_t b = 0; b < layout.outer; ++b) {
    for (std::size_t f = 0; f < layout.features; ++f) {
      const std::size_t base = (b * layout.features + f) * layout.inner;
      for (std::size_t i = 0; i < layout.inner; ++i) {
        const T xhat = T((x[base + i] - mean[f]) * inv_std[f]);
        if (cache) normalized[base + i] = xhat;
        y[base + i] = gamma[f] * xhat + beta[f];
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->batch_statistics = mode == Mode::Train;
  }
  return y;
}

template <std::floating_point T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <std::floating_point T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const Tensor<T>& gamma,
                                     const Tensor<T>& grad_out) {
  const auto layout = detail::feature_layout(grad_out);
  const accum_t<T> count = static_cast<accum_t<T>>(layout.outer * layout.inner);
  BatchNormGrads<T> g{Tensor<T>(grad_out.shape()), Tensor<T>({layout.features}),
                      Tensor<T>({layout.features})};
  for (std::size_t f = 0; f < layout.features; ++f) {
    accum_t<T> sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t b = 0; b < layout.outer; ++b) {
      const std::size_t base = (b * layout.features + f) * layout.inner;
      for (std::size_t i = 0; i < layout.inner; ++i) {
        sum_g += grad_out[base + i];
        sum_gx += static_cast<accum_t<T>>(grad_out[base + i]) * cache.normalized[base + i];
      }
    }
    g.beta[f] = T(sum_g);
    g.gamma[f] = T(sum_gx);
    const accum_t<T> scale = static_cast<accum_t<T>>(gamma[f]) * cache.inv_std[f];
    for (std::size_t b = 0; b < layout.outer; ++b) {
      const std::size_t base = (b * layout.features + f) * layout.inner;
      for (std::size_t i = 0; i < layout.inner; ++i) {
        if (cache.batch_statistics) {
          const accum_t<T> xhat = cache.normalized[base + i];
          g.input[base + i] =
              T(scale * (grad_out[base + i] - sum_g / count - xhat * sum_gx / count));
        } else {
          g.input[base + i] = T(scale * grad_out[base + i]);
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------- dropout

// Inverted dropout: survivors are scaled by 1 / (1 - rate) so Eval is the
// identity. The mask holds the multiplier applied to each element.
template <std::floating_point T>
struct DropoutResult {
  Tensor<T> output;
  std::vector<T> mask;
};

template <std::floating_point T>
DropoutResult<T> dropout_forward(const Tensor<T>& x, double rate, Mode mode, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  if (mode == Mode::Eval || rate == 0.0) return {x, {}};
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const T keep_scale = T(1.0 / (1.0 - rate));
  DropoutResult<T> r{Tensor<T>(x.shape()), std::vector<T>(x.size())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    r.mask[i] = uniform(rng) < rate ? T(0) : keep_scale;
    r.output[i] = x[i] * r.mask[i];
  }
  return r;
}

template <std::floating_point T>
Tensor<T> dropout_backward(std::span<const T> mask, const Tensor<T>& grad_out) {
  if (mask.empty()) return grad_out;
  Tensor<T> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask[i];
  return g;
}

// ---------------------------------------------------------------- activation

template <std::floating_point T>
struct ActivationTensorResult {
  Tensor<T> output;
  std::vector<T> sampled_slopes;  // RReLU training only
};

template <std::floating_point T>
ActivationTensorResult<T> activation_tensor_forward(const ActivationKind& kind, Mode mode,
                                                    const Tensor<T>& x, std::uint64_t seed) {
  ActivationTensorResult<T> r{Tensor<T>(x.shape()), {}};
  if (kind.tag == ActivationTag::RReLU && mode == Mode::Train) {
    Rng rng(seed);
    r.sampled_slopes.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto out = activation_forward(kind, mode, x[i], &rng);
      r.output[i] = out.value;
      r.sampled_slopes[i] = *out.sampled_slope;
    }
    return r;
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    r.output[i] = activation_forward<T>(kind, mode, x[i]).value;
  }
  return r;
}

template <std::floating_point T>
struct ActivationTensorGrads {
  Tensor<T> input;
  std::optional<T> param;  // PReLU rho or Swish beta
};

template <std::floating_point T>
ActivationTensorGrads<T> activation_tensor_backward(const ActivationKind& kind,
                                                    const Tensor<T>& x,
                                                    std::span<const T> sampled_slopes,
                                                    const Tensor<T>& grad_out) {
  ActivationTensorGrads<T> g{Tensor<T>(x.shape()), std::nullopt};
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::optional<T> slope;
    if (!sampled_slopes.empty()) slope = sampled_slopes[i];
    g.input[i] = grad_out[i] * activation_derivative<T>(kind, x[i], slope);
  }
  if (kind.has_trainable_param()) {
    accum_t<T> acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      acc += static_cast<accum_t<T>>(grad_out[i]) * activation_param_gradient<T>(kind, x[i]);
    }
    g.param = T(acc);
  }
  return g;
}

// ---------------------------------------------------------------- loss

template <std::floating_point T>
struct LossResult {
  accum_t<T> loss;
  Tensor<T> grad;
};

// Mean negative log-likelihood of softmax(logits) with log-sum-exp
// stabilization. grad = (softmax - onehot) / B.
template <std::floating_point T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  LossResult<T> r{0.0, Tensor<T>(logits.shape())};
  std::vector<accum_t<T>> probs(classes);
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw DataError("label " + std::to_string(label) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
    const T* row = logits.data() + b * classes;
    accum_t<T> mx = row[0];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, static_cast<accum_t<T>>(row[c]));
    accum_t<T> sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[c] = std::exp(row[c] - mx);
      sum += probs[c];
    }
    const accum_t<T> log_sum = mx + std::log(sum);
    r.loss += log_sum - row[label];
    for (std::size_t c = 0; c < classes; ++c) {
      const accum_t<T> p = probs[c] / sum;
      r.grad[b * classes + c] =
          T((p - (static_cast<int>(c) == label ? 1.0 : 0.0)) / static_cast<accum_t<T>>(batch));
    }
  }
  r.loss /= static_cast<accum_t<T>>(batch);
  return r;
}

}  // namespace nishlab
