#pragma once

// Training and evaluation loops, repeated-run aggregation and the depth and
// noise sweep drivers.

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "nishlab/activations.hpp"
#include "nishlab/data.hpp"
#include "nishlab/errors.hpp"
#include "nishlab/gradient_check.hpp"
#include "nishlab/layers.hpp"
#include "nishlab/network.hpp"
#include "nishlab/optim.hpp"
#include "nishlab/random.hpp"
#include "nishlab/stats.hpp"

namespace nishlab {

enum class Architecture { Mlp, Cnn5, Cnn10 };

inline std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::Mlp: return "mlp";
    case Architecture::Cnn5: return "cnn5";
    case Architecture::Cnn10: return "cnn10";
  }
  return "unknown";
}

inline Architecture parse_architecture(std::string_view name) {
  if (name == "mlp") return Architecture::Mlp;
  if (name == "cnn5") return Architecture::Cnn5;
  if (name == "cnn10") return Architecture::Cnn10;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

struct ModelConfig {
  Architecture architecture = Architecture::Mlp;
  std::size_t depth = 3;        // hidden blocks of the MLP
  std::size_t width = 128;      // MLP hidden width
  double dropout = 0.25;        // MLP blocks
  ActivationKind activation = ActivationKind::of(ActivationTag::Nish);
};

struct DatasetConfig {
  std::string dir;
  double train_fraction = 0.85;
  std::size_t train_subset = 10000;  // 0 keeps the whole training split
  std::size_t test_subset = 0;       // 0 keeps the whole test split
  std::uint64_t split_seed = 0;
  double noise_sigma = 0.0;
};

struct ExperimentSettings {
  std::string name = "train";
  std::size_t epochs = 5;
  std::size_t runs = 1;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::vector<std::size_t> depths = {3, 6, 9, 12, 15};
  std::vector<std::string> activations = {"relu", "swish", "mish", "nish"};
  std::vector<double> sigmas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  double grad_check_step = 1e-5;
  std::size_t grad_check_batch = 1;
  double grad_check_tolerance = 1e-4;
};

// Fully determines every random draw of an experiment: run i of a cell uses
// seed experiment.seed + i.
struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  OptimizerConfig optimizer = OptimizerConfig::sgd();
  ExperimentSettings experiment;

  void validate() const {
    model.activation.validate();
    optimizer.validate();
    if (!(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0))
      throw ConfigError("dataset.train_fraction must lie strictly between 0 and 1");
    if (!(dataset.noise_sigma >= 0.0)) throw ConfigError("dataset.noise_sigma must be >= 0");
    if (model.architecture == Architecture::Mlp && model.depth == 0)
      throw ConfigError("model.depth must be at least 1");
    if (model.width == 0) throw ConfigError("model.width must be positive");
    if (!(model.dropout >= 0.0 && model.dropout < 1.0))
      throw ConfigError("model.dropout must lie in [0, 1)");
    if (experiment.batch_size == 0) throw ConfigError("experiment.batch_size must be positive");
    if (experiment.runs == 0) throw ConfigError("experiment.runs must be at least 1");
    if (experiment.threads == 0) throw ConfigError("experiment.threads must be at least 1");
    for (const auto& a : experiment.activations) parse_activation_tag(a);
    for (std::size_t d : experiment.depths)
      if (d == 0) throw ConfigError("experiment.depths entries must be positive");
    for (double s : experiment.sigmas)
      if (!(s >= 0.0)) throw ConfigError("experiment.sigmas entries must be >= 0");
  }
};

// ---------------------------------------------------------------- models

// flatten(784) -> depth x [Dense(width) -> BatchNorm -> act -> Dropout] -> Dense(10)
inline NetworkSpec build_mlp(std::size_t depth, const ActivationKind& act, std::size_t width = 128,
                             double dropout = 0.25, std::size_t inputs = kImagePixels) {
  NetworkSpec spec;
  spec.layers.push_back(FlattenSpec{});
  std::size_t in = inputs;
  for (std::size_t d = 0; d < depth; ++d) {
    spec.layers.push_back(DenseSpec{in, width});
    spec.layers.push_back(BatchNormSpec{width});
    spec.layers.push_back(ActivationSpec{act});
    spec.layers.push_back(DropoutSpec{dropout});
    in = width;
  }
  spec.layers.push_back(DenseSpec{in, static_cast<std::size_t>(kNumClasses)});
  return spec;
}

namespace detail {

// Stride 1 uses a 3x3 kernel and keeps the size; stride 2 uses a 4x4
// kernel so that even sizes halve exactly (28 -> 14 -> 7).
inline void conv_block(NetworkSpec& spec, std::size_t in, std::size_t out, std::size_t stride,
                       const ActivationKind& act) {
  spec.layers.push_back(Conv2DSpec{in, out, stride == 1 ? 3u : 4u, stride, 1});
  spec.layers.push_back(BatchNormSpec{out});
  spec.layers.push_back(ActivationSpec{act});
}

}  // namespace detail

// Five weighted layers: three conv blocks (28 -> 28 -> 14 -> 7) and two
// dense layers.
inline NetworkSpec build_cnn5(const ActivationKind& act) {
  NetworkSpec spec;
  detail::conv_block(spec, 1, 16, 1, act);
  detail::conv_block(spec, 16, 16, 2, act);
  detail::conv_block(spec, 16, 16, 2, act);
  spec.layers.push_back(FlattenSpec{});
  spec.layers.push_back(DenseSpec{16 * 7 * 7, 128});
  spec.layers.push_back(ActivationSpec{act});
  spec.layers.push_back(DenseSpec{128, static_cast<std::size_t>(kNumClasses)});
  return spec;
}

// Ten weighted layers: conv blocks of 16, 16, 32, 32 channels, dense layers
// of 256, 128, 64, 32, 16 units and the classifier.
inline NetworkSpec build_cnn10(const ActivationKind& act) {
  NetworkSpec spec;
  detail::conv_block(spec, 1, 16, 1, act);
  detail::conv_block(spec, 16, 16, 2, act);
  detail::conv_block(spec, 16, 32, 1, act);
  detail::conv_block(spec, 32, 32, 2, act);
  spec.layers.push_back(FlattenSpec{});
  std::size_t in = 32 * 7 * 7;
  for (std::size_t width : {256, 128, 64, 32, 16}) {
    spec.layers.push_back(DenseSpec{in, width});
    spec.layers.push_back(ActivationSpec{act});
    in = width;
  }
  spec.layers.push_back(DenseSpec{in, static_cast<std::size_t>(kNumClasses)});
  return spec;
}

inline NetworkSpec build_network(const ModelConfig& model) {
  switch (model.architecture) {
    case Architecture::Mlp:
      return build_mlp(model.depth, model.activation, model.width, model.dropout);
    case Architecture::Cnn5:
      return build_cnn5(model.activation);
    case Architecture::Cnn10:
      return build_cnn10(model.activation);
  }
  throw ConfigError("unhandled architecture");
}

// Value reported in the `depth` column: hidden blocks for the MLP, weighted
// layers for the CNNs.
inline std::size_t depth_label(const ModelConfig& model) {
  switch (model.architecture) {
    case Architecture::Mlp: return model.depth;
    case Architecture::Cnn5: return 5;
    case Architecture::Cnn10: return 10;
  }
  return 0;
}

// ---------------------------------------------------------------- metrics

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  double seconds = 0.0;
};

struct RunMetrics {
  std::uint64_t seed = 0;
  std::vector<EpochMetrics> epochs;
  bool diverged = false;
  std::string divergence_reason;

  bool completed() const { return !diverged && !epochs.empty(); }
  const EpochMetrics& final_epoch() const {
    if (epochs.empty()) throw UsageError("run has no completed epoch");
    return epochs.back();
  }
  double best_accuracy() const {
    double best = 0.0;
    for (const auto& e : epochs)
      if (std::isfinite(e.test_acc)) best = std::max(best, e.test_acc);
    return best;
  }
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Eval-mode pass over `test`: mean cross-entropy and argmax accuracy.
template <std::floating_point T>
EvalResult evaluate(const NetworkSpec& spec, ParamStore<T>& params, const Dataset& test,
                    std::size_t batch_size = 500) {
  if (test.size() == 0) throw UsageError("evaluate: empty test set");
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < test.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, test.size() - start);
    Tensor<T> x({n, 1, kImageSide, kImageSide});
    std::copy_n(test.images.data() + start * kImagePixels, n * kImagePixels, x.data());
    const std::span<const int> labels(test.labels.data() + start, n);
    auto out = network_forward(spec, params, x, Mode::Eval, 0, false);
    const auto loss = softmax_cross_entropy(out.output, labels);
    loss_sum += loss.loss * static_cast<double>(n);
    const std::size_t classes = out.output.dim(1);
    for (std::size_t b = 0; b < n; ++b) {
      const T* row = out.output.data() + b * classes;
      const auto arg = static_cast<int>(std::max_element(row, row + classes) - row);
      if (arg == labels[b]) ++correct;
    }
  }
  return {loss_sum / static_cast<double>(test.size()),
          static_cast<double>(correct) / static_cast<double>(test.size())};
}

// ---------------------------------------------------------------- data prep

inline std::uint64_t sigma_stream(double sigma) { return std::bit_cast<std::uint64_t>(sigma); }

// Split (fixed split seed), subset, then corrupt both partitions with noise
// derived from the run seed and the sigma value.
inline Split prepare_data(const DatasetConfig& cfg, const Dataset& full, std::uint64_t run_seed) {
  Split split = merge_and_split(full, cfg.train_fraction, cfg.split_seed);
  if (cfg.train_subset > 0) split.train = take_first(split.train, cfg.train_subset);
  if (cfg.test_subset > 0) split.test = take_first(split.test, cfg.test_subset);
  if (cfg.noise_sigma > 0.0) {
    const std::uint64_t s = sigma_stream(cfg.noise_sigma);
    split.train.images = add_gaussian_noise(
        split.train.images,
        {cfg.noise_sigma, derive_seed(derive_seed(run_seed, streams::kNoiseTrain), s)});
    split.test.images = add_gaussian_noise(
        split.test.images,
        {cfg.noise_sigma, derive_seed(derive_seed(run_seed, streams::kNoiseTest), s)});
  }
  return split;
}

// ---------------------------------------------------------------- training

// One training run in float precision. A non-finite loss or gradient aborts
// the run and marks it diverged; completed epochs are kept.
inline RunMetrics train_model(const ExperimentConfig& config, const Split& data,
                              std::uint64_t seed) {
  config.validate();
  RunMetrics metrics;
  metrics.seed = seed;
  if (config.experiment.epochs == 0) return metrics;
  if (data.train.size() == 0 || data.test.size() == 0) {
    throw UsageError("train_model: empty train or test set");
  }

  const NetworkSpec spec = build_network(config.model);
  ParamStore<float> params = init_params<float>(spec, seed);
  Optimizer<float> optimizer(config.optimizer);
  const bool has_batchnorm = std::any_of(spec.layers.begin(), spec.layers.end(), [](const auto& l) {
    return std::holds_alternative<BatchNormSpec>(l);
  });

  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.experiment.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto order = batches(data.train, config.experiment.batch_size,
                               derive_seed(derive_seed(seed, streams::kShuffle), epoch));
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& idx : order) {
      // BatchNorm cannot use statistics of a single sample.
      if (has_batchnorm && idx.size() < 2) continue;
      const Dataset batch = gather(data.train, idx);
      const auto fwd = network_forward(spec, params, batch.images, Mode::Train,
                                       derive_seed(derive_seed(seed, streams::kDropout), step++));
      const auto loss = softmax_cross_entropy(fwd.output, std::span<const int>(batch.labels));
      if (!std::isfinite(loss.loss)) {
        metrics.diverged = true;
        metrics.divergence_reason = "non-finite training loss in epoch " + std::to_string(epoch);
        break;
      }
      const auto grads = network_backward(spec, params, fwd.cache, loss.grad);
      try {
        optimizer.step(params.learnable, grads.grads);
      } catch (const TrainingError& e) {
        metrics.diverged = true;
        metrics.divergence_reason = std::string(e.what()) + " in epoch " + std::to_string(epoch);
        break;
      }
      loss_sum += loss.loss * static_cast<double>(idx.size());
      seen += idx.size();
    }
    if (metrics.diverged) break;

    const EvalResult eval = evaluate(spec, params, data.test);
    if (!std::isfinite(eval.loss)) {
      metrics.diverged = true;
      metrics.divergence_reason = "non-finite test loss in epoch " + std::to_string(epoch);
      break;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    metrics.epochs.push_back(
        {epoch, loss_sum / static_cast<double>(std::max<std::size_t>(seen, 1)), eval.loss,
         eval.accuracy, seconds});
  }
  return metrics;
}

inline RunMetrics train_model(const ExperimentConfig& config, const Dataset& full,
                              std::uint64_t seed) {
  return train_model(config, prepare_data(config.dataset, full, seed), seed);
}

// ---------------------------------------------------------------- parallelism

// Runs task(i) for i in [0, n) on up to `threads` workers. Each task owns its
// outputs; the first exception is rethrown after all workers finish.
inline void parallel_for(std::size_t n, std::size_t threads,
                         const std::function<void(std::size_t)>& task) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

using LogSink = std::function<void(const std::string&)>;

inline void log_to_stderr(const std::string& line) { std::cerr << line << '\n'; }

// ---------------------------------------------------------------- aggregation

// Aggregates final-epoch metrics of the completed runs.
inline StatSummary summarize_runs(std::span<const RunMetrics> runs) {
  std::vector<double> acc, loss, best;
  for (const auto& r : runs) {
    if (!r.completed()) continue;
    acc.push_back(r.final_epoch().test_acc);
    loss.push_back(r.final_epoch().test_loss);
    best.push_back(r.best_accuracy());
  }
  if (acc.empty()) throw ExperimentError("every run diverged; nothing to aggregate");
  return summarize(acc, loss, best);
}

struct MultiRunResult {
  std::vector<RunMetrics> runs;   // index i used seed base + i
  std::vector<std::size_t> diverged;
  StatSummary summary;
};

inline MultiRunResult multi_run(const ExperimentConfig& config, const Dataset& full,
                                const LogSink& log = log_to_stderr) {
  config.validate();
  MultiRunResult result;
  result.runs.resize(config.experiment.runs);
  parallel_for(config.experiment.runs, config.experiment.threads, [&](std::size_t i) {
    result.runs[i] = train_model(config, full, config.experiment.seed + i);
  });
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    if (result.runs[i].diverged) {
      result.diverged.push_back(i);
      if (log) {
        log("warning: run " + std::to_string(i) + " diverged (" +
            result.runs[i].divergence_reason + "); excluded from the summary");
      }
    }
  }
  if (config.experiment.epochs > 0) result.summary = summarize_runs(result.runs);
  return result;
}

// ---------------------------------------------------------------- sweeps

struct SweepRow {
  std::string experiment;
  std::string activation;
  std::size_t depth = 0;
  double sigma = 0.0;
  std::size_t run = 0;
  RunMetrics metrics;
};

namespace detail {

inline ActivationKind with_tag(const ActivationKind& base, const std::string& name) {
  ActivationKind k = base;
  k.tag = parse_activation_tag(name);
  return k;
}

inline std::string format_sigma(double sigma) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", sigma);
  return buf;
}

struct SweepCell {
  ExperimentConfig config;
  std::string activation;
  std::size_t run;
};

inline std::vector<SweepRow> run_cells(const std::string& experiment,
                                       const std::vector<SweepCell>& cells, const Dataset& full,
                                       std::size_t threads, const LogSink& log) {
  std::vector<SweepRow> rows(cells.size());
  std::mutex log_mutex;
  std::size_t finished = 0;
  parallel_for(cells.size(), threads, [&](std::size_t i) {
    const auto& cell = cells[i];
    const std::uint64_t seed = cell.config.experiment.seed + cell.run;
    rows[i] = SweepRow{experiment,
                       cell.activation,
                       depth_label(cell.config.model),
                       cell.config.dataset.noise_sigma,
                       cell.run,
                       train_model(cell.config, full, seed)};
    if (!log) return;
    const auto& m = rows[i].metrics;
    std::string line = experiment + " activation=" + cell.activation +
                       " depth=" + std::to_string(rows[i].depth) +
                       " sigma=" + format_sigma(rows[i].sigma) + " run=" + std::to_string(cell.run);
    line += m.completed() ? " test_acc=" + std::to_string(m.final_epoch().test_acc) : " diverged";
    std::lock_guard lock(log_mutex);
    log("[" + std::to_string(++finished) + "/" + std::to_string(cells.size()) + "] " + line);
  });
  for (const auto& row : rows) {
    if (row.metrics.diverged && log) {
      log("warning: " + experiment + " cell activation=" + row.activation +
          " depth=" + std::to_string(row.depth) + " sigma=" + format_sigma(row.sigma) +
          " run=" + std::to_string(row.run) + " diverged (" + row.metrics.divergence_reason + ")");
    }
  }
  return rows;
}

}  // namespace detail

// One MLP per (depth, activation, run); rows ordered depth-major.
inline std::vector<SweepRow> depth_sweep(const ExperimentConfig& base,
                                         const std::vector<std::size_t>& depths,
                                         const std::vector<std::string>& activations,
                                         const Dataset& full, const LogSink& log = log_to_stderr) {
  base.validate();
  if (depths.empty()) throw ConfigError("depth sweep needs at least one depth");
  if (activations.empty()) throw ConfigError("sweep needs at least one activation");
  std::vector<detail::SweepCell> cells;
  for (std::size_t depth : depths) {
    if (depth == 0) throw ConfigError("depths must be positive");
    for (const auto& name : activations) {
      for (std::size_t run = 0; run < base.experiment.runs; ++run) {
        ExperimentConfig cfg = base;
        cfg.model.architecture = Architecture::Mlp;
        cfg.model.depth = depth;
        cfg.model.activation = detail::with_tag(base.model.activation, name);
        cells.push_back({std::move(cfg), name, run});
      }
    }
  }
  return detail::run_cells("depth_sweep", cells, full, base.experiment.threads, log);
}

// One CNN per (sigma, activation, run); rows ordered sigma-major.
inline std::vector<SweepRow> noise_sweep(const ExperimentConfig& base,
                                         const std::vector<double>& sigmas, Architecture arch,
                                         const std::vector<std::string>& activations,
                                         const Dataset& full, const LogSink& log = log_to_stderr) {
  base.validate();
  if (sigmas.empty()) throw ConfigError("noise sweep needs at least one sigma");
  if (!std::is_sorted(sigmas.begin(), sigmas.end()))
    throw ConfigError("noise sweep sigmas must be non-decreasing");
  if (activations.empty()) throw ConfigError("sweep needs at least one activation");
  std::vector<detail::SweepCell> cells;
  for (double sigma : sigmas) {
    if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
    for (const auto& name : activations) {
      for (std::size_t run = 0; run < base.experiment.runs; ++run) {
        ExperimentConfig cfg = base;
        cfg.model.architecture = arch;
        cfg.model.activation = detail::with_tag(base.model.activation, name);
        cfg.dataset.noise_sigma = sigma;
        cells.push_back({std::move(cfg), name, run});
      }
    }
  }
  return detail::run_cells("noise_sweep", cells, full, base.experiment.threads, log);
}

// ---------------------------------------------------------------- verification

// Gradient check of one activation inside the reference network
// Flatten -> Dense(784, 32) -> BatchNorm -> act -> Dropout(0) -> Dense(32, 10),
// in long double precision with BatchNorm in Eval mode. Inputs are seeded
// U(0, 1) images; BatchNorm running statistics are first warmed up with
// Train-mode passes over a separate seeded batch so Eval mode is not the
// identity.
inline GradientCheckReport reference_gradient_check(const ActivationKind& kind,
                                                    const ExperimentSettings& settings,
                                                    std::uint64_t seed) {
  if (settings.grad_check_batch == 0) throw ConfigError("grad_check_batch must be positive");
  const NetworkSpec spec = build_mlp(1, kind, 32, 0.0);
  using T = long double;
  ParamStore<T> params = init_params<T>(spec, derive_seed(seed, streams::kInit));

  Rng rng(derive_seed(seed, streams::kShuffle));
  std::uniform_real_distribution<double> pixel(0.0, 1.0);
  Tensor<T> warmup({64, 1, kImageSide, kImageSide});
  for (auto& v : warmup.values()) v = pixel(rng);
  for (int pass = 0; pass < 20; ++pass) network_forward(spec, params, warmup, Mode::Train, seed, false);

  Tensor<T> batch({settings.grad_check_batch, 1, kImageSide, kImageSide});
  for (auto& v : batch.values()) v = pixel(rng);
  std::vector<int> labels(settings.grad_check_batch);
  for (auto& l : labels) l = static_cast<int>(rng() % kNumClasses);
  return gradient_check(spec, params, batch, labels, settings.grad_check_step, Mode::Eval);
}

}  // namespace nishlab
