#pragma once

// Sequential networks: layer descriptions, learnable parameters and the
// reverse-mode pass over them.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "nishlab/activations.hpp"
#include "nishlab/errors.hpp"
#include "nishlab/layers.hpp"
#include "nishlab/random.hpp"
#include "nishlab/tensor.hpp"

namespace nishlab {

struct DenseSpec {
  std::size_t in_features;
  std::size_t out_features;
};

struct Conv2DSpec {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t kernel_size;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct BatchNormSpec {
  std::size_t num_features;
  double epsilon = 1e-5;
  double momentum = 0.1;
};

struct DropoutSpec {
  double rate;
};

struct ActivationSpec {
  ActivationKind kind;
};

struct FlattenSpec {};

using LayerSpec =
    std::variant<DenseSpec, Conv2DSpec, BatchNormSpec, DropoutSpec, ActivationSpec, FlattenSpec>;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

inline std::string layer_name(const LayerSpec& layer) {
  return std::visit(overloaded{
                        [](const DenseSpec&) { return std::string("dense"); },
                        [](const Conv2DSpec&) { return std::string("conv2d"); },
                        [](const BatchNormSpec&) { return std::string("batchnorm"); },
                        [](const DropoutSpec&) { return std::string("dropout"); },
                        [](const ActivationSpec& a) { return std::string(a.kind.name()); },
                        [](const FlattenSpec&) { return std::string("flatten"); },
                    },
                    layer);
}

// Names of the learnable tensors a layer owns, in storage order.
inline std::vector<std::string> param_slot_names(const LayerSpec& layer) {
  return std::visit(overloaded{
                        [](const DenseSpec&) { return std::vector<std::string>{"W", "b"}; },
                        [](const Conv2DSpec&) { return std::vector<std::string>{"kernels", "b"}; },
                        [](const BatchNormSpec&) {
                          return std::vector<std::string>{"gamma", "beta"};
                        },
                        [](const ActivationSpec& a) {
                          if (a.kind.tag == ActivationTag::PReLU) return std::vector<std::string>{"rho"};
                          if (a.kind.has_trainable_param()) return std::vector<std::string>{"beta"};
                          return std::vector<std::string>{};
                        },
                        [](const auto&) { return std::vector<std::string>{}; },
                    },
                    layer);
}

struct NetworkSpec {
  std::vector<LayerSpec> layers;

  void validate() const {
    if (layers.empty()) throw ConfigError("network has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string where = "layer " + std::to_string(i) + " (" + layer_name(layers[i]) + "): ";
      std::visit(overloaded{
                     [&](const DenseSpec& d) {
                       if (d.in_features == 0 || d.out_features == 0)
                         throw ConfigError(where + "dimensions must be positive");
                     },
                     [&](const Conv2DSpec& c) {
                       if (c.in_channels == 0 || c.out_channels == 0 || c.kernel_size == 0 ||
                           c.stride == 0)
                         throw ConfigError(where + "dimensions must be positive");
                     },
                     [&](const BatchNormSpec& b) {
                       if (b.num_features == 0) throw ConfigError(where + "no features");
                       if (!(b.epsilon > 0.0)) throw ConfigError(where + "epsilon must be > 0");
                       if (!(b.momentum >= 0.0 && b.momentum <= 1.0))
                         throw ConfigError(where + "momentum must lie in [0, 1]");
                     },
                     [&](const DropoutSpec& d) {
                       if (!(d.rate >= 0.0 && d.rate < 1.0))
                         throw ConfigError(where + "rate must lie in [0, 1)");
                     },
                     [&](const ActivationSpec& a) { a.kind.validate(); },
                     [](const FlattenSpec&) {},
                 },
                 layers[i]);
    }
  }

  // Layers whose Train-mode forward consumes randomness.
  bool has_stochastic_layers() const {
    for (const auto& layer : layers) {
      if (const auto* d = std::get_if<DropoutSpec>(&layer); d && d->rate > 0.0) return true;
      if (const auto* a = std::get_if<ActivationSpec>(&layer);
          a && a->kind.is_stochastic_in_training())
        return true;
    }
    return false;
  }
};

template <std::floating_point T>
using TensorGroups = std::vector<std::vector<Tensor<T>>>;

template <std::floating_point T>
struct ParamStore {
  TensorGroups<T> learnable;           // [layer][slot]
  std::vector<Tensor<T>> running_mean;  // BatchNorm state; empty for other layers
  std::vector<Tensor<T>> running_var;

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& layer : learnable)
      for (const auto& t : layer) n += t.size();
    return n;
  }

  template <std::floating_point U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& layer : learnable) {
      auto& dst = out.learnable.emplace_back();
      for (const auto& t : layer) dst.push_back(t.template cast<U>());
    }
    for (const auto& t : running_mean)
      out.running_mean.push_back(t.empty() ? Tensor<U>() : t.template cast<U>());
    for (const auto& t : running_var)
      out.running_var.push_back(t.empty() ? Tensor<U>() : t.template cast<U>());
    return out;
  }
};

template <std::floating_point T>
struct GradStore {
  TensorGroups<T> grads;  // same layout as ParamStore::learnable
};

// Dense/conv weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, BN
// scale 1 and shift 0, running mean 0 and variance 1, PReLU rho and Swish
// beta from the activation descriptor.
template <std::floating_point T>
ParamStore<T> init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamStore<T> p;
  Rng rng(derive_seed(seed, streams::kInit));
  auto uniform_fill = [&rng](Tensor<T>& t, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.values()) v = T(dist(rng));
  };
  for (const auto& layer : spec.layers) {
    auto& slots = p.learnable.emplace_back();
    Tensor<T> mean, var;
    std::visit(overloaded{
                   [&](const DenseSpec& d) {
                     Tensor<T> w({d.in_features, d.out_features});
                     uniform_fill(w, d.in_features);
                     slots.push_back(std::move(w));
                     slots.emplace_back(Shape{d.out_features});
                   },
                   [&](const Conv2DSpec& c) {
                     Tensor<T> k({c.out_channels, c.in_channels, c.kernel_size, c.kernel_size});
                     uniform_fill(k, c.in_channels * c.kernel_size * c.kernel_size);
                     slots.push_back(std::move(k));
                     slots.emplace_back(Shape{c.out_channels});
                   },
                   [&](const BatchNormSpec& b) {
                     slots.emplace_back(Shape{b.num_features}, T(1));
                     slots.emplace_back(Shape{b.num_features}, T(0));
                     mean = Tensor<T>({b.num_features}, T(0));
                     var = Tensor<T>({b.num_features}, T(1));
                   },
                   [&](const ActivationSpec& a) {
                     if (a.kind.tag == ActivationTag::PReLU)
                       slots.emplace_back(Shape{1}, T(a.kind.rho));
                     else if (a.kind.has_trainable_param())
                       slots.emplace_back(Shape{1}, T(a.kind.beta));
                   },
                   [](const auto&) {},
               },
               layer);
    p.running_mean.push_back(std::move(mean));
    p.running_var.push_back(std::move(var));
  }
  return p;
}

template <std::floating_point T>
GradStore<T> zero_grads_like(const ParamStore<T>& params) {
  GradStore<T> g;
  for (const auto& layer : params.learnable) {
    auto& dst = g.grads.emplace_back();
    for (const auto& t : layer) dst.push_back(zeros_like(t));
  }
  return g;
}

template <std::floating_point T>
struct LayerCache {
  Tensor<T> input;
  BatchNormCache<T> batchnorm;
  std::vector<T> dropout_mask;
  std::vector<T> sampled_slopes;
};

template <std::floating_point T>
struct ForwardCache {
  Mode mode = Mode::Eval;
  std::vector<LayerCache<T>> layers;
};

template <std::floating_point T>
struct ForwardResult {
  Tensor<T> output;
  ForwardCache<T> cache;
};

namespace detail {

// Activation descriptor with the current value of its learnable parameter.
template <std::floating_point T>
ActivationKind bind_activation(const ActivationSpec& spec, const std::vector<Tensor<T>>& slots) {
  ActivationKind kind = spec.kind;
  if (kind.tag == ActivationTag::PReLU) {
    kind.rho = static_cast<double>(slots.at(0)[0]);
  } else if (kind.has_trainable_param()) {
    kind.beta = static_cast<double>(slots.at(0)[0]);
  }
  return kind;
}

template <std::floating_point T>
void check_layout(const NetworkSpec& spec, const ParamStore<T>& params) {
  if (params.learnable.size() != spec.layers.size() ||
      params.running_mean.size() != spec.layers.size() ||
      params.running_var.size() != spec.layers.size()) {
    throw UsageError("parameter store does not match the network description");
  }
}

}  // namespace detail

// Runs the network. In Train mode BatchNorm uses batch statistics and
// updates its running state, dropout and RReLU draw from streams derived
// from `seed`. The cache is kept whenever `keep_cache` is set, in either
// mode, so Eval-mode networks can also be differentiated.
template <std::floating_point T>
ForwardResult<T> network_forward(const NetworkSpec& spec, ParamStore<T>& params, const Tensor<T>& x,
                                 Mode mode, std::uint64_t seed, bool keep_cache = true) {
  detail::check_layout(spec, params);
  ForwardResult<T> result{x, {mode, {}}};
  if (keep_cache) result.cache.layers.resize(spec.layers.size());
  Tensor<T>& h = result.output;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    auto& slots = params.learnable[l];
    LayerCache<T>* lc = keep_cache ? &result.cache.layers[l] : nullptr;
    if (lc) lc->input = h;
    const std::uint64_t layer_seed = derive_seed(seed, streams::kLayer + l);
    std::visit(overloaded{
                   [&](const DenseSpec&) { h = dense_forward(h, slots[0], slots[1]); },
                   [&](const Conv2DSpec& c) {
                     h = conv2d_forward(h, slots[0], slots[1], ConvGeometry{c.stride, c.padding});
                   },
                   [&](const BatchNormSpec& b) {
                     h = batchnorm_forward(h, slots[0], slots[1], params.running_mean[l],
                                           params.running_var[l], mode,
                                           BatchNormOptions{b.epsilon, b.momentum},
                                           lc ? &lc->batchnorm : nullptr);
                   },
                   [&](const DropoutSpec& d) {
                     auto r = dropout_forward(h, d.rate, mode, layer_seed);
                     h = std::move(r.output);
                     if (lc) lc->dropout_mask = std::move(r.mask);
                   },
                   [&](const ActivationSpec& a) {
                     const ActivationKind kind = detail::bind_activation(a, slots);
                     auto r = activation_tensor_forward(kind, mode, h, layer_seed);
                     h = std::move(r.output);
                     if (lc) lc->sampled_slopes = std::move(r.sampled_slopes);
                   },
                   [&](const FlattenSpec&) {
                     const std::size_t batch = h.dim(0);
                     h = h.reshaped({batch, h.size() / batch});
                   },
               },
               spec.layers[l]);
  }
  return result;
}

// Reverse pass. Dropout masks and RReLU slopes are replayed from the cache.
template <std::floating_point T>
GradStore<T> network_backward(const NetworkSpec& spec, const ParamStore<T>& params,
                              const ForwardCache<T>& cache, const Tensor<T>& output_grad) {
  detail::check_layout(spec, params);
  if (cache.layers.size() != spec.layers.size()) {
    throw UsageError("forward cache has " + std::to_string(cache.layers.size()) +
                     " layers, network has " + std::to_string(spec.layers.size()));
  }
  GradStore<T> grads = zero_grads_like(params);
  Tensor<T> g = output_grad;
  for (std::size_t l = spec.layers.size(); l-- > 0;) {
    const auto& lc = cache.layers[l];
    const auto& slots = params.learnable[l];
    auto& out = grads.grads[l];
    const bool need_input = l > 0;
    std::visit(overloaded{
                   [&](const DenseSpec&) {
                     auto d = dense_backward(lc.input, slots[0], g, need_input);
                     out[0] = std::move(d.weights);
                     out[1] = std::move(d.bias);
                     g = std::move(d.input);
                   },
                   [&](const Conv2DSpec& c) {
                     auto d = conv2d_backward(lc.input, slots[0], g,
                                              ConvGeometry{c.stride, c.padding}, need_input);
                     out[0] = std::move(d.kernels);
                     out[1] = std::move(d.bias);
                     g = std::move(d.input);
                   },
                   [&](const BatchNormSpec&) {
                     auto d = batchnorm_backward(lc.batchnorm, slots[0], g);
                     out[0] = std::move(d.gamma);
                     out[1] = std::move(d.beta);
                     g = std::move(d.input);
                   },
                   [&](const DropoutSpec&) {
                     g = dropout_backward<T>(lc.dropout_mask, g);
                   },
                   [&](const ActivationSpec& a) {
                     const ActivationKind kind = detail::bind_activation(a, slots);
                     auto d = activation_tensor_backward<T>(kind, lc.input, lc.sampled_slopes, g);
                     if (d.param) out[0][0] = *d.param;
                     g = std::move(d.input);
                   },
                   [&](const FlattenSpec&) { g = g.reshaped(lc.input.shape()); },
               },
               spec.layers[l]);
  }
  return grads;
}

}  // namespace nishlab
