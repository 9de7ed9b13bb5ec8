#include "nishlab/optim.hpp"
#include "nishlab/stats.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

namespace nishlab {
namespace {

TensorGroups<double> single(std::vector<double> values) {
  const std::size_t n = values.size();
  return {{Tensor<double>({n}, std::move(values))}};
}

TEST(Sgd, PlainStep) {
  auto params = single({1.0, -2.0});
  TensorGroups<double> velocity;
  sgd_step(params, single({0.5, -1.0}), velocity, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(params[0][0][0], 0.95);
  EXPECT_DOUBLE_EQ(params[0][0][1], -1.9);
}

TEST(Sgd, MomentumAccumulates) {
  auto params = single({0.0});
  TensorGroups<double> velocity;
  const auto g = single({1.0});
  sgd_step(params, g, velocity, 0.1, 0.9);  // v = 1
  sgd_step(params, g, velocity, 0.1, 0.9);  // v = 1.9
  EXPECT_DOUBLE_EQ(velocity[0][0][0], 1.9);
  EXPECT_NEAR(params[0][0][0], -0.29, 1e-15);
}

TEST(Sgd, NonFiniteGradientIsTrainingError) {
  auto params = single({0.0});
  TensorGroups<double> velocity;
  EXPECT_THROW(sgd_step(params, single({std::numeric_limits<double>::quiet_NaN()}), velocity, 0.1,
                        0.0),
               TrainingError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first step is lr * g / (|g| + eps).
  auto params = single({1.0, 1.0});
  TensorGroups<double> m, v;
  const auto config = OptimizerConfig::adam(0.01);
  adam_step(params, single({3.0, -0.2}), m, v, 1, config);
  EXPECT_NEAR(params[0][0][0], 1.0 - 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(params[0][0][1], 1.0 + 0.01 * 0.2 / (0.2 + 1e-8), 1e-15);
  EXPECT_THROW(adam_step(params, single({1.0, 1.0}), m, v, 0, config), UsageError);
}

TEST(Adam, SecondStepMatchesHandComputation) {
  auto params = single({0.0});
  TensorGroups<double> m, v;
  const auto config = OptimizerConfig::adam(0.1);
  adam_step(params, single({1.0}), m, v, 1, config);
  adam_step(params, single({2.0}), m, v, 2, config);
  const double m2 = 0.9 * 0.1 + 0.1 * 2.0;
  const double v2 = 0.999 * 0.001 + 0.001 * 4.0;
  const double step2 = 0.1 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  EXPECT_NEAR(params[0][0][0], -0.1 * (1.0 / (1.0 + 1e-8)) - step2, 1e-12);
}

TEST(Optimizer, MinimizesQuadratic) {
  for (auto config : {OptimizerConfig::sgd(0.1, 0.5), OptimizerConfig::adam(0.05)}) {
    Optimizer<double> opt(config);
    auto params = single({3.0, -4.0});
    for (int i = 0; i < 2000; ++i) {
      const auto& p = params[0][0];
      opt.step(params, single({2.0 * p[0], 2.0 * p[1]}));
    }
    EXPECT_NEAR(params[0][0][0], 0.0, 1e-3);
    EXPECT_NEAR(params[0][0][1], 0.0, 1e-3);
  }
}

TEST(OptimizerConfig, Validation) {
  EXPECT_THROW(OptimizerConfig::sgd(0.0).validate(), ConfigError);
  EXPECT_THROW(OptimizerConfig::sgd(0.1, 1.0).validate(), ConfigError);
  auto adam = OptimizerConfig::adam();
  adam.beta2 = 1.0;
  EXPECT_THROW(adam.validate(), ConfigError);
}

TEST(Stats, SummaryMatchesDirectComputation) {
  const std::vector<double> acc{0.91, 0.93, 0.95, 0.92};
  const std::vector<double> loss{0.3, 0.2, 0.1, 0.25};
  const auto s = summarize(acc, loss);
  EXPECT_EQ(s.runs, 4u);
  EXPECT_NEAR(s.mu_acc, 0.9275, 1e-15);
  EXPECT_NEAR(s.mu_loss, 0.2125, 1e-15);
  ASSERT_TRUE(s.sigma_acc);
  EXPECT_NEAR(*s.sigma_acc, 0.017078251276599295, 1e-15);  // Python statistics.stdev
  EXPECT_FALSE(s.mu_best_acc);
}

TEST(Stats, SingleRunHasNoSpread) {
  const std::vector<double> one{0.5};
  EXPECT_FALSE(summarize(one, one).sigma_acc);
  EXPECT_THROW(summarize(std::vector<double>{}, std::vector<double>{}), UsageError);
}

TEST(Stats, AverageRanksWithTies) {
  const std::vector<double> xs{10, 20, 20, 5};
  EXPECT_EQ(average_ranks(xs), (std::vector<double>{2.0, 3.5, 3.5, 1.0}));
}

TEST(Stats, SpearmanMatchesScipy) {
  const std::vector<double> x{1, 2, 2, 3, 5}, y{2, 1, 4, 4, 9};
  EXPECT_NEAR(spearman(x, y), 0.7631578947368421, 1e-15);
  const std::vector<double> up{0, 1, 2, 3}, down{9, 4, 1, 0};
  EXPECT_DOUBLE_EQ(spearman(up, down), -1.0);
}

}  // namespace
}  // namespace nishlab
