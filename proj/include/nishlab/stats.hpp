#pragma once

// Aggregation of repeated runs into (mu_acc, mu_loss, sigma_acc) and rank
// statistics used by the sweep checks.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "nishlab/errors.hpp"

namespace nishlab {

struct StatSummary {
  std::size_t runs = 0;
  double mu_acc = 0.0;                 // mean final-epoch test accuracy
  double mu_loss = 0.0;                // mean final-epoch test loss
  std::optional<double> sigma_acc;     // sample std (n - 1); needs >= 2 runs
  std::optional<double> mu_best_acc;   // mean best-epoch accuracy, when known
};

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw UsageError("mean of an empty list");
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

// Two-pass sample standard deviation with n - 1 denominator.
inline std::optional<double> sample_stddev(std::span<const double> xs) {
  if (xs.size() < 2) return std::nullopt;
  const double mu = mean(xs);
  double sq = 0.0;
  for (double x : xs) sq += (x - mu) * (x - mu);
  return std::sqrt(sq / static_cast<double>(xs.size() - 1));
}

inline StatSummary summarize(std::span<const double> final_accuracies,
                             std::span<const double> final_losses,
                             std::span<const double> best_accuracies = {}) {
  if (final_accuracies.empty()) throw UsageError("no runs to summarize");
  if (final_accuracies.size() != final_losses.size()) {
    throw UsageError("accuracy and loss lists differ in length");
  }
  StatSummary s;
  s.runs = final_accuracies.size();
  s.mu_acc = mean(final_accuracies);
  s.mu_loss = mean(final_losses);
  s.sigma_acc = sample_stddev(final_accuracies);
  if (!best_accuracies.empty()) s.mu_best_acc = mean(best_accuracies);
  return s;
}

// Ranks starting at 1; ties share their average rank.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw UsageError("correlation needs two equally long lists of at least 2 values");
  }
  const double mx = mean(xs), my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Spearman rank correlation: Pearson correlation of average ranks.
inline double spearman(std::span<const double> xs, std::span<const double> ys) {
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

}  // namespace nishlab
