// nish-lab: command-line front end for the activation experiments.
//
// Exit codes: 0 success, 1 experiment failure, 2 usage or configuration
// error.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nishlab/config.hpp"
#include "nishlab/data.hpp"
#include "nishlab/harness.hpp"
#include "nishlab/report.hpp"

namespace fs = std::filesystem;
using namespace nishlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitExperiment = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::string data_dir;
  std::optional<std::size_t> threads;
  bool quiet = false;
};

// Files written by this invocation; removed again if a later step fails.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    if (!fs::exists(dir_)) {
      std::error_code ec;
      fs::create_directories(dir_, ec);
      if (ec) throw IoError("cannot create output directory '" + dir_.string() + "'");
      created_dir_ = true;
    }
    const fs::path path = dir_ / name;
    written_.push_back(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    out.close();
    if (!out) throw IoError("cannot write '" + path.string() + "'");
  }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
    if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
    written_.clear();
  }

  const std::vector<fs::path>& written() const { return written_; }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
  bool created_dir_ = false;
};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Config file (or defaults) with command-line overrides applied.
ExperimentConfig resolve_config(const CommonOptions& opts) {
  ExperimentConfig cfg = opts.config_path.empty() ? ExperimentConfig{} : load_config(opts.config_path);
  // A relative dataset.dir in a config file is relative to that file.
  if (!opts.config_path.empty() && !cfg.dataset.dir.empty() && fs::path(cfg.dataset.dir).is_relative())
    cfg.dataset.dir = (fs::path(opts.config_path).parent_path() / cfg.dataset.dir).lexically_normal().string();
  if (opts.seed) cfg.experiment.seed = *opts.seed;
  if (opts.threads) cfg.experiment.threads = *opts.threads;
  if (!opts.data_dir.empty()) cfg.dataset.dir = opts.data_dir;
  if (cfg.dataset.dir.empty()) {
    if (const char* env = std::getenv("NISH_LAB_DATA"); env && *env) cfg.dataset.dir = env;
  }
#ifdef NISHLAB_DEFAULT_DATA_DIR
  if (cfg.dataset.dir.empty()) cfg.dataset.dir = NISHLAB_DEFAULT_DATA_DIR;
#endif
  cfg.validate();
  return cfg;
}

Dataset load_data(const ExperimentConfig& cfg) {
  if (cfg.dataset.dir.empty()) {
    throw ConfigError("no dataset directory: set dataset.dir, --data or NISH_LAB_DATA");
  }
  return load_dataset_dir(cfg.dataset.dir);
}

LogSink make_log(const CommonOptions& opts) {
  if (opts.quiet) return nullptr;
  return log_to_stderr;
}

std::string summary_json(const std::string& command, const ExperimentConfig& cfg,
                         const std::vector<MetricsRow>& rows) {
  nlohmann::ordered_json doc;
  doc["tool"] = "nish-lab";
  doc["version"] = NISHLAB_VERSION;
  doc["command"] = command;
  doc["timestamp"] = utc_timestamp();
  doc["config"] = config_table_to_json(config_to_table(cfg));
  doc["cells"] = stats_to_json(stats_grid({rows}));
  return doc.dump(2) + "\n";
}

void write_experiment_artifacts(ArtifactWriter& writer, const std::string& command,
                                const ExperimentConfig& cfg, const std::vector<SweepRow>& sweep,
                                const std::optional<std::string>& svg) {
  const auto rows = metrics_rows(sweep);
  std::ostringstream csv;
  write_metrics_csv(csv, rows);
  writer.write("metrics.csv", csv.str());
  writer.write("config.toml", to_toml(cfg));
  writer.write("summary.json", summary_json(command, cfg, rows));
  if (svg) writer.write("plot.svg", *svg);
}

void print_cells(const std::vector<SweepRow>& sweep) {
  std::cout << format_stats_table(stats_grid({metrics_rows(sweep)}));
}

int report_written(const ArtifactWriter& writer, bool quiet) {
  if (!quiet)
    for (const auto& p : writer.written()) std::cerr << "wrote " << p.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- commands

int cmd_plot_activations(const CommonOptions& opts, const std::vector<std::string>& kinds,
                         double lo, double hi, std::size_t points) {
  ActivationKind base = ActivationKind::of(ActivationTag::Nish);
  if (!opts.config_path.empty()) base = load_config(opts.config_path).model.activation;
  std::vector<ActivationKind> selected;
  for (const auto& name : kinds) {
    ActivationKind k = base;
    k.tag = parse_activation_tag(name);
    selected.push_back(k);
  }
  const std::string svg = render_svg(activation_panels(selected, lo, hi, points));
  ArtifactWriter writer(opts.out_dir);
  try {
    writer.write("activations.svg", svg);
  } catch (...) {
    writer.rollback();
    throw;
  }
  return report_written(writer, opts.quiet);
}

int cmd_grad_check(const CommonOptions& opts, const std::vector<std::string>& kinds) {
  const ExperimentConfig cfg = resolve_config(opts);
  std::vector<ActivationTag> tags;
  if (kinds.empty()) {
    tags.assign(std::begin(kAllActivationTags), std::end(kAllActivationTags));
  } else {
    for (const auto& k : kinds) tags.push_back(parse_activation_tag(k));
  }
  const double tolerance = cfg.experiment.grad_check_tolerance;
  bool all_pass = true;
  std::ostringstream csv;
  csv << "activation,max_relative_discrepancy,layer,slot,index,analytic,numeric,checked,pass\n";
  std::cout << "gradient check: 784-32-10 MLP, BatchNorm in eval mode, h="
            << format_double(cfg.experiment.grad_check_step) << ", tolerance "
            << format_double(tolerance) << "\n";
  for (ActivationTag tag : tags) {
    ActivationKind kind = cfg.model.activation;
    kind.tag = tag;
    const auto r = reference_gradient_check(kind, cfg.experiment, cfg.experiment.seed);
    const bool pass = r.max_relative_discrepancy <= tolerance;
    all_pass = all_pass && pass;
    char line[160];
    std::snprintf(line, sizeof line, "  %-11s max_rel=%.3e  %s", std::string(kind.name()).c_str(),
                  r.max_relative_discrepancy, pass ? "PASS" : "FAIL");
    std::cout << line;
    if (!pass) {
      std::cout << "  (layer " << r.layer << " " << r.slot << "[" << r.index
                << "]: analytic " << format_double(r.analytic) << ", numeric "
                << format_double(r.numeric) << ")";
    }
    std::cout << '\n';
    csv << kind.name() << ',' << format_double(r.max_relative_discrepancy) << ',' << r.layer << ','
        << r.slot << ',' << r.index << ',' << format_double(r.analytic) << ','
        << format_double(r.numeric) << ',' << r.checked << ',' << (pass ? "true" : "false")
        << '\n';
  }
  ArtifactWriter writer(opts.out_dir);
  try {
    writer.write("grad_check.csv", csv.str());
    writer.write("config.toml", to_toml(cfg));
  } catch (...) {
    writer.rollback();
    throw;
  }
  report_written(writer, opts.quiet);
  if (!all_pass) {
    std::cerr << "error: gradient check failed for at least one activation\n";
    return kExitExperiment;
  }
  return kExitOk;
}

int cmd_train(const CommonOptions& opts) {
  const ExperimentConfig cfg = resolve_config(opts);
  const Dataset full = load_data(cfg);
  const auto log = make_log(opts);
  if (log) {
    log("train: " + std::string(to_string(cfg.model.architecture)) + " activation=" +
        std::string(cfg.model.activation.name()) + " runs=" + std::to_string(cfg.experiment.runs) +
        " epochs=" + std::to_string(cfg.experiment.epochs));
  }
  const auto result = multi_run(cfg, full, log);
  std::vector<SweepRow> sweep;
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    sweep.push_back({cfg.experiment.name, std::string(cfg.model.activation.name()),
                     depth_label(cfg.model), cfg.dataset.noise_sigma, i, result.runs[i]});
  }
  PanelSpec acc{"Test accuracy", "epoch", "accuracy", {}};
  PanelSpec loss{"Test loss", "epoch", "cross-entropy", {}};
  for (const auto& row : sweep) {
    Series a{"run " + std::to_string(row.run), {}}, l{a.name, {}};
    for (const auto& e : row.metrics.epochs) {
      a.points.emplace_back(static_cast<double>(e.epoch), e.test_acc);
      l.points.emplace_back(static_cast<double>(e.epoch), e.test_loss);
    }
    acc.series.push_back(std::move(a));
    loss.series.push_back(std::move(l));
  }
  print_cells(sweep);
  ArtifactWriter writer(opts.out_dir);
  try {
    write_experiment_artifacts(writer, "train", cfg, sweep, render_svg({acc, loss}));
  } catch (...) {
    writer.rollback();
    throw;
  }
  return report_written(writer, opts.quiet);
}

int cmd_depth_sweep(const CommonOptions& opts) {
  const ExperimentConfig cfg = resolve_config(opts);
  const Dataset full = load_data(cfg);
  const auto rows =
      depth_sweep(cfg, cfg.experiment.depths, cfg.experiment.activations, full, make_log(opts));
  print_cells(rows);
  const std::string svg = render_svg(
      {sweep_panel(rows, false, false, "Depth sweep: accuracy"),
       sweep_panel(rows, false, true, "Depth sweep: loss")});
  ArtifactWriter writer(opts.out_dir);
  try {
    write_experiment_artifacts(writer, "depth-sweep", cfg, rows, svg);
  } catch (...) {
    writer.rollback();
    throw;
  }
  return report_written(writer, opts.quiet);
}

int cmd_noise_sweep(const CommonOptions& opts, const std::string& arch_override) {
  ExperimentConfig cfg = resolve_config(opts);
  if (!arch_override.empty()) cfg.model.architecture = parse_architecture(arch_override);
  if (cfg.model.architecture == Architecture::Mlp) {
    throw UsageError("noise-sweep needs a convolutional model: set model.architecture to "
                     "\"cnn5\" or \"cnn10\", or pass --arch");
  }
  const Dataset full = load_data(cfg);
  const auto rows = noise_sweep(cfg, cfg.experiment.sigmas, cfg.model.architecture,
                                cfg.experiment.activations, full, make_log(opts));
  print_cells(rows);
  const std::string title = std::string(to_string(cfg.model.architecture)) + " noise sweep";
  const std::string svg = render_svg({sweep_panel(rows, true, true, title + ": loss"),
                                      sweep_panel(rows, true, false, title + ": accuracy")});
  ArtifactWriter writer(opts.out_dir);
  try {
    write_experiment_artifacts(writer, "noise-sweep", cfg, rows, svg);
  } catch (...) {
    writer.rollback();
    throw;
  }
  return report_written(writer, opts.quiet);
}

int cmd_stats(const CommonOptions& opts, const std::vector<std::string>& inputs,
              bool out_given) {
  if (inputs.empty()) throw UsageError("stats needs at least one metrics CSV");
  std::vector<std::vector<MetricsRow>> sources;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    sources.push_back(read_metrics_csv(in, path));
  }
  const auto cells = stats_grid(sources);
  const std::string table = format_stats_table(cells);
  std::cout << table;
  if (!out_given) return kExitOk;
  nlohmann::ordered_json doc;
  doc["tool"] = "nish-lab";
  doc["version"] = NISHLAB_VERSION;
  doc["command"] = "stats";
  doc["timestamp"] = utc_timestamp();
  doc["inputs"] = inputs;
  doc["cells"] = stats_to_json(cells);
  ArtifactWriter writer(opts.out_dir);
  try {
    writer.write("stats.txt", table);
    writer.write("summary.json", doc.dump(2) + "\n");
  } catch (...) {
    writer.rollback();
    throw;
  }
  return report_written(writer, opts.quiet);
}

void add_common(CLI::App* cmd, CommonOptions& opts, bool experiment) {
  cmd->add_option("--config", opts.config_path, "TOML config file (or a summary.json)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out_dir, "Output directory")->capture_default_str();
  if (!experiment) return;
  cmd->add_option("--seed", opts.seed, "Override experiment.seed");
  cmd->add_option("--data", opts.data_dir,
                  "Dataset directory (default: dataset.dir, then $NISH_LAB_DATA)");
  cmd->add_option("--threads", opts.threads, "Override experiment.threads")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--quiet,-q", opts.quiet, "No progress output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nish-lab: activation-function experiments on MNIST"};
  app.set_version_flag("--version", std::string(NISHLAB_VERSION));
  app.require_subcommand(1);

  CommonOptions opts;

  auto* plot = app.add_subcommand("plot-activations", "Plot activations and derivatives as SVG");
  add_common(plot, opts, false);
  std::vector<std::string> plot_kinds{"relu", "silu", "mish", "nish"};
  std::vector<double> plot_range{-6.0, 6.0};
  std::size_t plot_points = 1201;
  plot->add_option("--kinds", plot_kinds, "Activations to draw")
      ->delimiter(',')
      ->capture_default_str();
  plot->add_option("--range", plot_range, "x range: LO HI")->expected(2)->capture_default_str();
  plot->add_option("--points", plot_points, "Samples per curve")->capture_default_str();
  plot->add_flag("--quiet,-q", opts.quiet, "No progress output");

  auto* grad = app.add_subcommand("grad-check", "Check backprop against finite differences");
  add_common(grad, opts, true);
  std::vector<std::string> grad_kinds;
  grad->add_option("--kinds", grad_kinds, "Activations to check (default: all)")->delimiter(',');

  auto* train = app.add_subcommand("train", "Train one configuration over experiment.runs seeds");
  add_common(train, opts, true);

  auto* depth = app.add_subcommand("depth-sweep", "MLP depth x activation sweep");
  add_common(depth, opts, true);

  auto* noise = app.add_subcommand("noise-sweep", "Gaussian input-noise sweep on a CNN");
  add_common(noise, opts, true);
  std::string noise_arch;
  noise->add_option("--arch", noise_arch, "cnn5 or cnn10 (default: model.architecture)");

  auto* stats = app.add_subcommand("stats", "Aggregate metrics CSVs into a per-cell table");
  std::vector<std::string> stats_inputs;
  stats->add_option("csv", stats_inputs, "metrics.csv files")->required()->check(CLI::ExistingFile);
  auto* stats_out = stats->add_option("--out", opts.out_dir, "Write stats.txt and summary.json here");
  stats->add_flag("--quiet,-q", opts.quiet, "No progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*plot) {
      if (plot_range.size() != 2) throw UsageError("--range takes two values");
      return cmd_plot_activations(opts, plot_kinds, plot_range[0], plot_range[1], plot_points);
    }
    if (*grad) return cmd_grad_check(opts, grad_kinds);
    if (*train) return cmd_train(opts);
    if (*depth) return cmd_depth_sweep(opts);
    if (*noise) return cmd_noise_sweep(opts, noise_arch);
    if (*stats) return cmd_stats(opts, stats_inputs, stats_out->count() > 0);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitExperiment;
  }
  return kExitUsage;
}
