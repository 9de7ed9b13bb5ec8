#pragma once

// Result artifacts: the metrics CSV (writer and reader), per-cell
// statistics over runs, summary.json and hand-written SVG charts.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "nishlab/activations.hpp"
#include "nishlab/config.hpp"
#include "nishlab/errors.hpp"
#include "nishlab/harness.hpp"
#include "nishlab/stats.hpp"

namespace nishlab {

// ---------------------------------------------------------------- CSV

inline constexpr std::string_view kMetricsHeader =
    "experiment,activation,depth,sigma,run,epoch,train_loss,test_loss,test_acc,seed";

// One line of metrics.csv. A diverged run ends with a row whose losses and
// accuracy are nan, numbered one past its last completed epoch.
struct MetricsRow {
  std::string experiment;
  std::string activation;
  std::size_t depth = 0;
  double sigma = 0.0;
  std::size_t run = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  std::uint64_t seed = 0;

  bool diverged() const { return std::isnan(test_acc); }
};

inline std::vector<MetricsRow> metrics_rows(const std::vector<SweepRow>& sweep) {
  std::vector<MetricsRow> out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : sweep) {
    MetricsRow base{r.experiment, r.activation, r.depth, r.sigma, r.run, 0, 0, 0, 0,
                    r.metrics.seed};
    for (const auto& e : r.metrics.epochs) {
      MetricsRow row = base;
      row.epoch = e.epoch;
      row.train_loss = e.train_loss;
      row.test_loss = e.test_loss;
      row.test_acc = e.test_acc;
      out.push_back(row);
    }
    if (r.metrics.diverged) {
      MetricsRow row = base;
      row.epoch = r.metrics.epochs.size() + 1;
      row.train_loss = row.test_loss = row.test_acc = nan;
      out.push_back(row);
    }
  }
  return out;
}

namespace detail {

inline bool csv_safe(std::string_view field) {
  return field.find_first_of(",\"\n\r") == std::string_view::npos;
}

}  // namespace detail

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    if (!detail::csv_safe(r.experiment) || !detail::csv_safe(r.activation)) {
      throw UsageError("CSV text fields must not contain commas, quotes or newlines");
    }
    out << r.experiment << ',' << r.activation << ',' << r.depth << ',' << format_double(r.sigma)
        << ',' << r.run << ',' << r.epoch << ',' << format_double(r.train_loss) << ','
        << format_double(r.test_loss) << ',' << format_double(r.test_acc) << ',' << r.seed << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename Int>
Int parse_unsigned_field(const std::string& s, const std::string& where) {
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw DataError(where + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

inline double parse_double_field(const std::string& s, const std::string& where) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw DataError(where + ": expected a number, got '" + s + "'");
  return v;
}

}  // namespace detail

inline std::vector<MetricsRow> read_metrics_csv(std::istream& in, const std::string& name = "csv") {
  std::string line;
  if (!std::getline(in, line)) throw DataError(name + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) {
    throw DataError(name + ": unexpected header '" + line + "', expected '" +
                    std::string(kMetricsHeader) + "'");
  }
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(line_no);
    const auto f = detail::split_csv_line(line);
    if (f.size() != 10) {
      throw DataError(where + ": expected 10 fields, got " + std::to_string(f.size()));
    }
    MetricsRow r;
    r.experiment = f[0];
    r.activation = f[1];
    r.depth = detail::parse_unsigned_field<std::size_t>(f[2], where + " depth");
    r.sigma = detail::parse_double_field(f[3], where + " sigma");
    r.run = detail::parse_unsigned_field<std::size_t>(f[4], where + " run");
    r.epoch = detail::parse_unsigned_field<std::size_t>(f[5], where + " epoch");
    r.train_loss = detail::parse_double_field(f[6], where + " train_loss");
    r.test_loss = detail::parse_double_field(f[7], where + " test_loss");
    r.test_acc = detail::parse_double_field(f[8], where + " test_acc");
    r.seed = detail::parse_unsigned_field<std::uint64_t>(f[9], where + " seed");
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------- statistics grid

struct StatsCell {
  std::string experiment;
  std::string activation;
  std::size_t depth = 0;
  double sigma = 0.0;
  std::size_t diverged = 0;
  std::optional<StatSummary> summary;  // empty when every run diverged
};

// Groups rows by (experiment, activation, depth, sigma). A run is identified
// by (source, run), so single-run files from separate invocations count as
// separate runs. Each run contributes its final epoch; runs ending in a
// diverged row are counted and excluded.
inline std::vector<StatsCell> stats_grid(const std::vector<std::vector<MetricsRow>>& sources) {
  using CellKey = std::tuple<std::string, std::string, std::size_t, double>;
  struct RunFinal {
    std::size_t epoch = 0;
    const MetricsRow* row = nullptr;
    double best = 0.0;
  };
  std::map<CellKey, std::map<std::pair<std::size_t, std::size_t>, RunFinal>> cells;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    for (const auto& row : sources[s]) {
      auto& run = cells[{row.experiment, row.activation, row.depth, row.sigma}][{s, row.run}];
      if (!run.row || row.epoch > run.epoch) {
        run.epoch = row.epoch;
        run.row = &row;
      }
      if (std::isfinite(row.test_acc)) run.best = std::max(run.best, row.test_acc);
    }
  }
  std::vector<StatsCell> out;
  for (const auto& [key, runs] : cells) {
    StatsCell cell{std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), 0, {}};
    std::vector<double> acc, loss, best;
    for (const auto& [id, run] : runs) {
      if (run.row->diverged()) {
        ++cell.diverged;
        continue;
      }
      acc.push_back(run.row->test_acc);
      loss.push_back(run.row->test_loss);
      best.push_back(run.best);
    }
    if (!acc.empty()) cell.summary = summarize(acc, loss, best);
    out.push_back(std::move(cell));
  }
  return out;
}

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string percent(double fraction) { return fixed(100.0 * fraction, 2) + "%"; }

}  // namespace detail

// Text table with one line per cell: mean final accuracy, mean final loss
// and the sample standard deviation of accuracy over runs.
inline std::string format_stats_table(const std::vector<StatsCell>& cells) {
  const std::vector<std::string> header{"experiment", "activation", "depth",    "sigma",
                                        "runs",       "mu_acc",     "mu_loss",  "sigma_acc",
                                        "best_acc",   "diverged"};
  std::vector<std::vector<std::string>> lines{header};
  for (const auto& c : cells) {
    std::vector<std::string> l{c.experiment, c.activation, std::to_string(c.depth),
                               format_double(c.sigma)};
    if (c.summary) {
      const auto& s = *c.summary;
      l.push_back(std::to_string(s.runs));
      l.push_back(detail::percent(s.mu_acc));
      l.push_back(detail::fixed(s.mu_loss, 4));
      l.push_back(s.sigma_acc ? detail::percent(*s.sigma_acc) : "-");
      l.push_back(s.mu_best_acc ? detail::percent(*s.mu_best_acc) : "-");
    } else {
      l.insert(l.end(), {"0", "-", "-", "-", "-"});
    }
    l.push_back(std::to_string(c.diverged));
    lines.push_back(std::move(l));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& l : lines)
    for (std::size_t i = 0; i < l.size(); ++i) width[i] = std::max(width[i], l[i].size());
  std::string out;
  for (const auto& l : lines) {
    for (std::size_t i = 0; i < l.size(); ++i) {
      if (i) out += "  ";
      // Text columns left-aligned, numbers right-aligned.
      const std::string pad(width[i] - l[i].size(), ' ');
      out += i < 2 ? l[i] + pad : pad + l[i];
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json stats_to_json(const std::vector<StatsCell>& cells) {
  auto arr = nlohmann::ordered_json::array();
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  for (const auto& c : cells) {
    nlohmann::ordered_json j{{"experiment", c.experiment}, {"activation", c.activation},
                             {"depth", c.depth},           {"sigma", c.sigma},
                             {"diverged", c.diverged}};
    if (c.summary) {
      j["runs"] = c.summary->runs;
      j["mu_acc"] = c.summary->mu_acc;
      j["mu_loss"] = c.summary->mu_loss;
      j["sigma_acc"] = opt(c.summary->sigma_acc);
      j["mu_best_acc"] = opt(c.summary->mu_best_acc);
    } else {
      j["runs"] = 0;
      j["mu_acc"] = j["mu_loss"] = j["sigma_acc"] = j["mu_best_acc"] = nullptr;
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

// ---------------------------------------------------------------- SVG

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct PanelSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

namespace detail {

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                           "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                           "#bcbd22", "#17becf", "#393b79", "#637939"};

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// About five round tick values covering [lo, hi].
inline std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    step = m * mag;
    if (span / step <= 6.0) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) {
    ticks.push_back(std::abs(t) < 1e-12 * span ? 0.0 : t);
  }
  return ticks;
}

inline std::string tick_label(double v) {
  std::string s = fixed(v, 3);
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s == "-0" ? "0" : s;
}

// Draws one panel at (ox, oy) of size w x h.
inline void render_panel(std::ostringstream& svg, const PanelSpec& panel, double ox, double oy,
                         double w, double h) {
  const double left = 60, right = 130, top = 30, bottom = 45;
  const double pw = w - left - right, ph = h - top - bottom;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : panel.series)
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (!(xmin <= xmax)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;
  auto sx = [&](double x) { return ox + left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return oy + top + (ymax - y) / (ymax - ymin) * ph; };

  svg << "<g class=\"panel\">\n";
  svg << "<text x=\"" << fixed(ox + left + pw / 2, 2) << "\" y=\"" << fixed(oy + 18, 2)
      << "\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(panel.title) << "</text>\n";
  svg << "<rect x=\"" << fixed(ox + left, 2) << "\" y=\"" << fixed(oy + top, 2) << "\" width=\""
      << fixed(pw, 2) << "\" height=\"" << fixed(ph, 2)
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (double t : nice_ticks(xmin, xmax)) {
    const double x = sx(t);
    svg << "<line x1=\"" << fixed(x, 2) << "\" y1=\"" << fixed(oy + top + ph, 2) << "\" x2=\""
        << fixed(x, 2) << "\" y2=\"" << fixed(oy + top + ph + 5, 2) << "\" stroke=\"#444\"/>"
        << "<text x=\"" << fixed(x, 2) << "\" y=\"" << fixed(oy + top + ph + 18, 2)
        << "\" text-anchor=\"middle\" font-size=\"11\">" << tick_label(t) << "</text>\n";
  }
  for (double t : nice_ticks(ymin, ymax)) {
    const double y = sy(t);
    svg << "<line x1=\"" << fixed(ox + left - 5, 2) << "\" y1=\"" << fixed(y, 2) << "\" x2=\""
        << fixed(ox + left, 2) << "\" y2=\"" << fixed(y, 2) << "\" stroke=\"#444\"/>"
        << "<text x=\"" << fixed(ox + left - 8, 2) << "\" y=\"" << fixed(y + 4, 2)
        << "\" text-anchor=\"end\" font-size=\"11\">" << tick_label(t) << "</text>\n";
  }
  if (ymin < 0 && ymax > 0) {
    svg << "<line x1=\"" << fixed(ox + left, 2) << "\" y1=\"" << fixed(sy(0), 2) << "\" x2=\""
        << fixed(ox + left + pw, 2) << "\" y2=\"" << fixed(sy(0), 2)
        << "\" stroke=\"#bbb\" stroke-dasharray=\"3,3\"/>\n";
  }
  svg << "<text x=\"" << fixed(ox + left + pw / 2, 2) << "\" y=\"" << fixed(oy + h - 8, 2)
      << "\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape(panel.x_label)
      << "</text>\n";
  svg << "<text transform=\"translate(" << fixed(ox + 16, 2) << "," << fixed(oy + top + ph / 2, 2)
      << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape(panel.y_label)
      << "</text>\n";

  for (std::size_t i = 0; i < panel.series.size(); ++i) {
    const auto& s = panel.series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    svg << "<polyline class=\"series\" data-name=\"" << xml_escape(s.name)
        << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (!first) svg << ' ';
      first = false;
      svg << fixed(sx(x), 2) << ',' << fixed(sy(y), 2);
    }
    svg << "\"/>\n";
    const double ly = oy + top + 12 + 18.0 * static_cast<double>(i);
    svg << "<line x1=\"" << fixed(ox + left + pw + 12, 2) << "\" y1=\"" << fixed(ly, 2)
        << "\" x2=\"" << fixed(ox + left + pw + 32, 2) << "\" y2=\"" << fixed(ly, 2)
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\""
        << fixed(ox + left + pw + 36, 2) << "\" y=\"" << fixed(ly + 4, 2)
        << "\" font-size=\"12\">" << xml_escape(s.name) << "</text>\n";
  }
  svg << "</g>\n";
}

}  // namespace detail

// Panels laid out side by side.
inline std::string render_svg(const std::vector<PanelSpec>& panels, double panel_width = 520,
                              double panel_height = 380) {
  if (panels.empty()) throw UsageError("nothing to plot");
  const double width = panel_width * static_cast<double>(panels.size());
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fixed(width, 0)
      << "\" height=\"" << detail::fixed(panel_height, 0) << "\" viewBox=\"0 0 "
      << detail::fixed(width, 0) << ' ' << detail::fixed(panel_height, 0)
      << "\" font-family=\"sans-serif\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) {
    detail::render_panel(svg, panels[i], panel_width * static_cast<double>(i), 0, panel_width,
                         panel_height);
  }
  svg << "</svg>\n";
  return svg.str();
}

// Two panels, values and first derivatives, each kind sampled at `points`
// evenly spaced x in [lo, hi]. RReLU is drawn with its evaluation slope.
inline std::vector<PanelSpec> activation_panels(const std::vector<ActivationKind>& kinds,
                                                double lo = -6.0, double hi = 6.0,
                                                std::size_t points = 1201) {
  if (kinds.empty()) throw UsageError("no activation kinds to plot");
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw UsageError("plot range must satisfy lo < hi");
  if (points < 2) throw UsageError("plot needs at least 2 points");
  PanelSpec values{"Activation", "x", "f(x)", {}};
  PanelSpec slopes{"First derivative", "x", "f'(x)", {}};
  for (const auto& kind : kinds) {
    kind.validate();
    Series v{std::string(kind.name()), {}}, d{std::string(kind.name()), {}};
    for (std::size_t i = 0; i < points; ++i) {
      const double x =
          lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
      v.points.emplace_back(x, activation_value(kind, x));
      d.points.emplace_back(x, activation_derivative(kind, x));
    }
    values.series.push_back(std::move(v));
    slopes.series.push_back(std::move(d));
  }
  return {values, slopes};
}

// Final-epoch metric of each run against `x`, one series per activation,
// averaged over runs. Diverged runs are skipped.
inline PanelSpec sweep_panel(const std::vector<SweepRow>& rows, bool x_is_sigma, bool plot_loss,
                             std::string title) {
  std::map<std::string, std::map<double, std::vector<double>>> grouped;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (!grouped.count(r.activation)) order.push_back(r.activation);
    auto& bucket = grouped[r.activation][x_is_sigma ? r.sigma : static_cast<double>(r.depth)];
    if (!r.metrics.completed()) continue;
    const auto& e = r.metrics.final_epoch();
    bucket.push_back(plot_loss ? e.test_loss : e.test_acc);
  }
  PanelSpec panel{std::move(title), x_is_sigma ? "noise sigma" : "hidden blocks",
                  plot_loss ? "final test loss" : "final test accuracy", {}};
  for (const auto& name : order) {
    Series s{name, {}};
    for (const auto& [x, ys] : grouped[name])
      if (!ys.empty()) s.points.emplace_back(x, mean(ys));
    panel.series.push_back(std::move(s));
  }
  return panel;
}

}  // namespace nishlab
