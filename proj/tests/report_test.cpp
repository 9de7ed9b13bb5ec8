#include "nishlab/report.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <regex>
#include <sstream>

#include <gtest/gtest.h>

namespace nishlab {
namespace {

MetricsRow row(std::string act, std::size_t run, std::size_t epoch, double acc, double loss) {
  return {"train", std::move(act), 3, 0.0, run, epoch, 0.5, loss, acc, 7 + run};
}

TEST(MetricsCsv, HeaderIsTheDeclaredSchema) {
  std::ostringstream out;
  write_metrics_csv(out, {});
  EXPECT_EQ(out.str(),
            "experiment,activation,depth,sigma,run,epoch,train_loss,test_loss,test_acc,seed\n");
}

TEST(MetricsCsv, RoundTripsExactValues) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MetricsRow> rows;
  for (std::size_t i = 0; i < 200; ++i) {
    rows.push_back({"depth_sweep", "nish", i % 15 + 1, u(rng), i, i + 1, u(rng) * 3, u(rng) * 3,
                    u(rng), rng()});
  }
  rows.back().test_acc = rows.back().test_loss = rows.back().train_loss =
      std::numeric_limits<double>::quiet_NaN();
  std::stringstream buf;
  write_metrics_csv(buf, rows);
  const auto back = read_metrics_csv(buf);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    EXPECT_EQ(back[i].sigma, rows[i].sigma);
    EXPECT_EQ(back[i].train_loss, rows[i].train_loss);
    EXPECT_EQ(back[i].test_loss, rows[i].test_loss);
    EXPECT_EQ(back[i].test_acc, rows[i].test_acc);
    EXPECT_EQ(back[i].seed, rows[i].seed);
    EXPECT_EQ(back[i].depth, rows[i].depth);
  }
  EXPECT_TRUE(back.back().diverged());
}

TEST(MetricsCsv, MalformedInput) {
  std::istringstream bad_header("a,b\n");
  EXPECT_THROW(read_metrics_csv(bad_header), DataError);
  std::istringstream short_row(std::string(kMetricsHeader) + "\ntrain,nish,3\n");
  EXPECT_THROW(read_metrics_csv(short_row), DataError);
  std::istringstream bad_number(std::string(kMetricsHeader) +
                                "\ntrain,nish,3,0,0,1,x,0.1,0.9,1\n");
  EXPECT_THROW(read_metrics_csv(bad_number), DataError);
}

TEST(MetricsRows, DivergedRunEndsWithNanRow) {
  SweepRow r{"train", "nish", 3, 0.0, 0, {}};
  r.metrics.seed = 4;
  r.metrics.epochs.push_back({1, 0.5, 0.4, 0.9, 1.0});
  r.metrics.diverged = true;
  const auto rows = metrics_rows({r});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].epoch, 2u);
  EXPECT_TRUE(rows[1].diverged());
  EXPECT_EQ(rows[1].seed, 4u);
}

TEST(StatsGrid, ThreeSingleRunFiles) {
  // Three invocations, each with one run numbered 0.
  const std::vector<std::vector<MetricsRow>> sources{
      {row("nish", 0, 1, 0.5, 1.0), row("nish", 0, 2, 0.90, 0.30)},
      {row("nish", 0, 1, 0.5, 1.0), row("nish", 0, 2, 0.91, 0.20)},
      {row("nish", 0, 1, 0.95, 1.0), row("nish", 0, 2, 0.92, 0.10)},
  };
  const auto cells = stats_grid(sources);
  ASSERT_EQ(cells.size(), 1u);
  const auto& s = *cells[0].summary;
  EXPECT_EQ(s.runs, 3u);
  EXPECT_NEAR(s.mu_acc, 0.91, 1e-12);
  EXPECT_NEAR(*s.sigma_acc, 0.01, 1e-12);
  EXPECT_NEAR(s.mu_loss, 0.2, 1e-12);
  EXPECT_NEAR(*s.mu_best_acc, (0.90 + 0.91 + 0.95) / 3, 1e-12);
  const std::string table = format_stats_table(cells);
  EXPECT_NE(table.find("91.00%"), std::string::npos);
  EXPECT_NE(table.find("1.00%"), std::string::npos);
  EXPECT_NE(table.find("mu_acc"), std::string::npos);
  EXPECT_NE(table.find("sigma_acc"), std::string::npos);
}

TEST(StatsGrid, DivergedRunsAreExcludedAndCounted) {
  auto diverged = row("relu", 1, 2, std::nan(""), std::nan(""));
  const std::vector<std::vector<MetricsRow>> sources{
      {row("relu", 0, 1, 0.8, 0.5), row("relu", 1, 1, 0.7, 0.6), diverged,
       row("mish", 0, 1, std::nan(""), std::nan(""))}};
  const auto cells = stats_grid(sources);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0].activation, "mish");
  EXPECT_FALSE(cells[0].summary);
  EXPECT_EQ(cells[1].diverged, 1u);
  EXPECT_EQ(cells[1].summary->runs, 1u);
  const auto json = stats_to_json(cells);
  EXPECT_TRUE(json[0]["mu_acc"].is_null());
  EXPECT_TRUE(json[1]["sigma_acc"].is_null());
}

std::vector<std::vector<std::pair<double, double>>> polylines(const std::string& svg) {
  std::vector<std::vector<std::pair<double, double>>> out;
  const std::regex poly("<polyline[^>]*points=\"([^\"]*)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), poly); it != std::sregex_iterator();
       ++it) {
    std::vector<std::pair<double, double>> pts;
    std::istringstream in((*it)[1].str());
    std::string pair;
    while (in >> pair) {
      const auto comma = pair.find(',');
      pts.emplace_back(std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1)));
    }
    out.push_back(std::move(pts));
  }
  return out;
}

TEST(ActivationPlot, DefaultKindsGiveEightDenseCurves) {
  std::vector<ActivationKind> kinds;
  for (auto t : {ActivationTag::ReLU, ActivationTag::SiLU, ActivationTag::Mish,
                 ActivationTag::Nish})
    kinds.push_back(ActivationKind::of(t));
  const auto panels = activation_panels(kinds);
  ASSERT_EQ(panels.size(), 2u);
  const std::string svg = render_svg(panels);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("viewBox"), std::string::npos);
  const auto lines = polylines(svg);
  ASSERT_EQ(lines.size(), 8u);
  for (const auto& l : lines) EXPECT_GE(l.size(), 1000u);
  // Data-space check: Nish's sampled minimum sits near its true minimum.
  const auto& nish = panels[0].series[3];
  EXPECT_EQ(nish.name, "nish");
  double lowest = 0.0;
  for (const auto& [x, y] : nish.points) lowest = std::min(lowest, y);
  EXPECT_NEAR(lowest, -0.4973705541899910218, 1e-4);
}

TEST(ActivationPlot, EmptyKindsIsUsageError) {
  EXPECT_THROW(activation_panels({}), UsageError);
  EXPECT_THROW(activation_panels({ActivationKind::of(ActivationTag::ReLU)}, 1.0, 1.0),
               UsageError);
}

TEST(SweepPanel, AveragesFinalEpochPerX) {
  std::vector<SweepRow> rows;
  for (std::size_t run = 0; run < 2; ++run)
    for (std::size_t depth : {3, 6}) {
      SweepRow r{"depth_sweep", "nish", depth, 0.0, run, {}};
      r.metrics.epochs.push_back({1, 1.0, 1.0, 0.5, 0.0});
      r.metrics.epochs.push_back({2, 1.0, 1.0, 0.8 + 0.1 * double(run), 0.0});
      rows.push_back(r);
    }
  const auto panel = sweep_panel(rows, false, false, "depth");
  ASSERT_EQ(panel.series.size(), 1u);
  ASSERT_EQ(panel.series[0].points.size(), 2u);
  EXPECT_DOUBLE_EQ(panel.series[0].points[0].first, 3.0);
  EXPECT_NEAR(panel.series[0].points[0].second, 0.85, 1e-15);
}

}  // namespace
}  // namespace nishlab
