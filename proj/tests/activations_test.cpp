#include "nishlab/activations.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

namespace nishlab {
namespace {

// Reference values below were computed with 40-digit arithmetic (mpmath).
constexpr double kSigmoidMinusOne = 0.2689414213699951207;
constexpr double kSoftplusMinusOne = 0.3132616875182228340;
constexpr double kNishMinusOne = -0.4952478240658403779;
constexpr double kNishPrimeMinusOne = 0.05219592114848248123;
constexpr double kMishMinusOne = -0.3034014613741089181;
constexpr double kNishArgmin = -1.082865270894081037;
constexpr double kNishMin = -0.4973705541899910218;
constexpr double kMishArgmin = -1.192431214515495212;
constexpr double kMishMin = -0.3088434130172504066;

double central_difference(const ActivationKind& kind, double x, double h = 1e-5) {
  return (activation_value(kind, x + h) - activation_value(kind, x - h)) / (2.0 * h);
}

bool near_kink(const ActivationKind& kind, double x, double radius = 1e-3) {
  for (double k : kind.kinks())
    if (std::abs(x - k) < radius) return true;
  return false;
}

TEST(Sigmoid, KnownValues) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(-1.0), kSigmoidMinusOne, 1e-15);
  EXPECT_NEAR(sigmoid(40.0), 1.0, 1e-15);
  EXPECT_GT(sigmoid(-800.0), -1e-300);
  EXPECT_TRUE(std::isfinite(sigmoid(-800.0)));
}

TEST(Softplus, KnownValues) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(softplus(-1.0), kSoftplusMinusOne, 1e-15);
  EXPECT_NEAR(softplus(100.0), 100.0, 1e-12 * 100.0);
  EXPECT_TRUE(std::isfinite(softplus(1000.0)));
}

TEST(ScalarKernels, RejectNonFiniteInput) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(sigmoid(nan), DomainError);
  EXPECT_THROW(softplus(inf), DomainError);
  EXPECT_THROW(nish(nan), DomainError);
  EXPECT_THROW(nish_prime(-inf), DomainError);
  EXPECT_THROW(activation_derivative(ActivationKind::of(ActivationTag::Mish), nan), DomainError);
}

TEST(Nish, Forward) {
  EXPECT_EQ(nish(0.0), 0.0);
  EXPECT_EQ(nish(2.5), 2.5);
  EXPECT_NEAR(nish(-1.0), kNishMinusOne, 1e-15);
  // Slope 1 on both sides of 0, so nish(-e) = -e + O(e^2).
  EXPECT_NEAR(nish(-1e-9), -1e-9, 1e-12);
  EXPECT_LE(std::abs(nish(-1e-10) - nish(0.0)), 1e-9);
}

TEST(Nish, Derivative) {
  EXPECT_EQ(nish_prime(1.0), 1.0);
  EXPECT_NEAR(nish_prime(-1.0), kNishPrimeMinusOne, 1e-14);
  EXPECT_NEAR(nish_prime(-1e-12), 1.0, 1e-9);
  EXPECT_EQ(nish_prime(0.0), 1.0);
}

TEST(Nish, PrintedDerivativeDisagreesWithFiniteDifferences) {
  const auto kind = ActivationKind::of(ActivationTag::Nish);
  EXPECT_NEAR(nish_prime_printed(-1.0), -3.0806046117362794, 1e-12);
  EXPECT_GT(std::abs(nish_prime_printed(-1.0) - central_difference(kind, -1.0)), 3.0);
  // Left limit at 0 is 0, right side is 1.
  EXPECT_NEAR(nish_prime_printed(-1e-12), 0.0, 1e-9);
}

TEST(ActivationForward, Examples) {
  EXPECT_EQ(activation_value(ActivationKind::of(ActivationTag::ReLU), -3.0), 0.0);
  EXPECT_DOUBLE_EQ(activation_value(ActivationKind::leaky_relu(0.01), -2.0), -0.02);
  EXPECT_NEAR(activation_value(ActivationKind::of(ActivationTag::Mish), -1.0), kMishMinusOne,
              1e-15);
  EXPECT_NEAR(activation_value(ActivationKind::rrelu(0.125, 1.0 / 3.0), -1.0),
              -0.22916666666666666, 1e-15);
  EXPECT_EQ(activation_value(ActivationKind::of(ActivationTag::ReLU6), 7.5), 6.0);
}

TEST(ActivationForward, RReLUTrainingNeedsNoiseSource) {
  EXPECT_THROW(activation_forward(ActivationKind::rrelu(0.1, 0.3), Mode::Train, -1.0),
               ConfigError);
  Rng rng(3);
  const auto out = activation_forward(ActivationKind::rrelu(0.1, 0.3), Mode::Train, -1.0, &rng);
  ASSERT_TRUE(out.sampled_slope.has_value());
  EXPECT_DOUBLE_EQ(out.value, -*out.sampled_slope);
}

TEST(ActivationDerivative, Examples) {
  EXPECT_EQ(activation_derivative(ActivationKind::of(ActivationTag::ReLU), 3.0), 1.0);
  EXPECT_EQ(activation_derivative(ActivationKind::of(ActivationTag::ReLU), 0.0), 1.0);
  EXPECT_DOUBLE_EQ(activation_derivative(ActivationKind::of(ActivationTag::SiLU), 0.0), 0.5);
  EXPECT_NEAR(activation_derivative(ActivationKind::of(ActivationTag::Mish), 0.0), 0.6, 1e-15);
  EXPECT_NEAR(central_difference(ActivationKind::of(ActivationTag::Mish), 0.0), 0.6, 1e-9);
  EXPECT_EQ(activation_derivative(ActivationKind::of(ActivationTag::ReLU6), 6.0), 0.0);
  EXPECT_DOUBLE_EQ(activation_derivative(ActivationKind::rrelu(0.1, 0.3), -2.0, {0.2}), 0.2);
}

TEST(ActivationParamGradient, Examples) {
  EXPECT_EQ(activation_param_gradient(ActivationKind::prelu(0.25), -2.0), -2.0);
  EXPECT_EQ(activation_param_gradient(ActivationKind::prelu(0.25), 3.0), 0.0);
  EXPECT_EQ(activation_param_gradient(ActivationKind::swish(1.0, true), 0.0), 0.0);
  EXPECT_THROW(activation_param_gradient(ActivationKind::of(ActivationTag::Nish), 1.0),
               UsageError);
  EXPECT_THROW(activation_param_gradient(ActivationKind::swish(1.0, false), 1.0), UsageError);
}

TEST(ActivationParamGradient, MatchesFiniteDifferenceInParameter) {
  const double h = 1e-6;
  for (double x : {-3.0, -0.5, 0.7, 2.0}) {
    auto lo = ActivationKind::swish(1.3 - h, true);
    auto hi = ActivationKind::swish(1.3 + h, true);
    const double fd = (activation_value(hi, x) - activation_value(lo, x)) / (2 * h);
    EXPECT_NEAR(activation_param_gradient(ActivationKind::swish(1.3, true), x), fd, 1e-8) << x;
    auto plo = ActivationKind::prelu(0.25 - h);
    auto phi = ActivationKind::prelu(0.25 + h);
    const double pfd = (activation_value(phi, x) - activation_value(plo, x)) / (2 * h);
    EXPECT_NEAR(activation_param_gradient(ActivationKind::prelu(0.25), x), pfd, 1e-8) << x;
  }
}

TEST(ActivationKind, Validation) {
  EXPECT_THROW(ActivationKind::rrelu(0.4, 0.3).validate(), ConfigError);
  EXPECT_THROW(ActivationKind::rrelu(0.1, 1.0).validate(), ConfigError);
  EXPECT_THROW(ActivationKind::leaky_relu(0.0).validate(), ConfigError);
  auto relu6 = ActivationKind::of(ActivationTag::ReLU6);
  relu6.cap = -1.0;
  EXPECT_THROW(relu6.validate(), ConfigError);
  EXPECT_NO_THROW(ActivationKind::rrelu(0.0, 0.5).validate());
  EXPECT_EQ(parse_activation_tag("nish"), ActivationTag::Nish);
  EXPECT_THROW(parse_activation_tag("nosuch"), ConfigError);
}

class EveryKind : public ::testing::TestWithParam<ActivationTag> {};

TEST_P(EveryKind, DerivativeMatchesCentralDifferences) {
  const auto kind = ActivationKind::of(GetParam());
  double worst = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double x = -10.0 + 0.01 * i;
    if (near_kink(kind, x)) continue;
    worst = std::max(worst, std::abs(activation_derivative(kind, x) - central_difference(kind, x)));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST_P(EveryKind, ContinuousAtZero) {
  const auto kind = ActivationKind::of(GetParam());
  EXPECT_LE(std::abs(activation_value(kind, -1e-10) - activation_value(kind, 0.0)), 1e-9);
}

INSTANTIATE_TEST_SUITE_P(AllKinds, EveryKind, ::testing::ValuesIn(kAllActivationTags),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Properties, NishIdentityBranchIsExact) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(0.0, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double x = dist(rng);
    EXPECT_EQ(nish(x), x);
  }
}

TEST(Properties, SelfGatedKindsAreNonMonotoneAndBoundedBelow) {
  for (ActivationTag tag : {ActivationTag::Nish, ActivationTag::Mish, ActivationTag::SiLU}) {
    const auto kind = ActivationKind::of(tag);
    bool rises = false, falls = false;
    double grid_min = activation_value(kind, -50.0);
    for (int i = 1; i <= 50000; ++i) {
      const double x1 = -50.0 + 0.001 * (i - 1);
      const double x2 = -50.0 + 0.001 * i;
      if (x2 >= 0.0) break;
      const double f1 = activation_value(kind, x1), f2 = activation_value(kind, x2);
      rises |= f1 < f2;
      falls |= f1 > f2;
      grid_min = std::min(grid_min, f2);
    }
    EXPECT_TRUE(rises) << to_string(tag);
    EXPECT_TRUE(falls) << to_string(tag);
    const auto m = find_minimum(kind, -50.0, 0.0);
    EXPECT_NEAR(m.value, grid_min, 1e-6) << to_string(tag);
    EXPECT_LE(m.value, grid_min) << to_string(tag);
    double prev = activation_value(kind, 1.0);
    for (double x = 1.01; x < 60.0; x += 0.01) {
      const double f = activation_value(kind, x);
      EXPECT_GT(f, prev) << to_string(tag) << " at " << x;
      prev = f;
    }
  }
}

TEST(Properties, PiecewiseLinearFamilyIsNonDecreasing) {
  for (const auto& kind : {ActivationKind::of(ActivationTag::ReLU),
                           ActivationKind::of(ActivationTag::ReLU6),
                           ActivationKind::leaky_relu(0.01), ActivationKind::prelu(0.25)}) {
    double prev = activation_value(kind, -10.0);
    for (int i = 1; i <= 2000; ++i) {
      const double f = activation_value(kind, -10.0 + 0.01 * i);
      EXPECT_GE(f, prev) << kind.name();
      prev = f;
    }
  }
}

TEST(Properties, RReLUSamplingMatchesUniformSlope) {
  const auto kind = ActivationKind::rrelu(0.125, 1.0 / 3.0);
  Rng rng(2024);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto out = activation_forward(kind, Mode::Train, -2.0, &rng);
    const double a = *out.sampled_slope;
    ASSERT_GE(a, kind.lower);
    ASSERT_LT(a, kind.upper);
    sum += a;
  }
  const double width = kind.upper - kind.lower;
  const double stderr_mean = width / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  EXPECT_LE(std::abs(sum / n - 0.5 * (kind.lower + kind.upper)), 3.0 * stderr_mean);
}

TEST(FindMinimum, Examples) {
  const auto relu = find_minimum(ActivationKind::of(ActivationTag::ReLU), -5.0, 5.0);
  EXPECT_LE(relu.argmin, 0.0);
  EXPECT_EQ(relu.value, 0.0);

  const auto n = find_minimum(ActivationKind::of(ActivationTag::Nish), -20.0, 0.0);
  EXPECT_NEAR(n.argmin, kNishArgmin, 1e-8);
  EXPECT_NEAR(n.value, kNishMin, 1e-12);

  const auto m = find_minimum(ActivationKind::of(ActivationTag::Mish), -20.0, 0.0);
  EXPECT_NEAR(m.argmin, kMishArgmin, 1e-8);
  EXPECT_NEAR(m.value, kMishMin, 1e-12);

  EXPECT_THROW(find_minimum(ActivationKind::of(ActivationTag::Nish), 1.0, 1.0), UsageError);
}

TEST(FloatPrecision, KernelsAgreeWithDouble) {
  for (double x : {-8.0, -1.5, -0.2, 0.0, 0.3, 4.0}) {
    EXPECT_NEAR(nish(static_cast<float>(x)), nish(x), 1e-6);
    EXPECT_NEAR(nish_prime(static_cast<float>(x)), nish_prime(x), 1e-6);
    EXPECT_NEAR(mish(static_cast<float>(x)), mish(x), 1e-6);
  }
}

}  // namespace
}  // namespace nishlab
