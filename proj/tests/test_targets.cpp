// Copyright 2026 The DSMCS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dsmcs/targets.hpp"

namespace dsmcs {
namespace {

constexpr double kHalfLog2Pi = 0.918938533204672741780329736406;

// Direct summation in extended precision, independent of the vectorised implementation.
long double brute_force_mixture(const GaussianMixtureTarget& target, const std::vector<double>& x) {
  const auto n = target.dim();
  long double total = 0.0L;
  for (std::size_t m = 0; m < target.components(); ++m) {
    long double sq = 0.0L;
    for (std::size_t j = 0; j < n; ++j) {
      const long double d = static_cast<long double>(x[j]) - target.means()[m * n + j];
      sq += d * d;
    }
    const long double log_component =
        -sq / (2.0L * target.component_variance()) -
        0.5L * static_cast<long double>(n) * std::log(2.0L * 3.14159265358979323846264338327950288L *
                                                      target.component_variance());
    total += target.weights()[m] * std::exp(log_component);
  }
  return std::log(total);
}

TEST(Targets, SingleStandardGaussianAtZero) {
  const GaussianMixtureTarget target{1, {0.0}, 1.0};
  ad::Tape tape;
  EXPECT_NEAR(target.log_density(tape.constant(0.0)).scalar(), -kHalfLog2Pi, 1e-15);
}

TEST(Targets, SymmetricPairHasZeroScoreAtTheOrigin) {
  const GaussianMixtureTarget target{1, {-1.7, 1.7}, 1.0};
  ad::Tape tape;
  auto x = tape.variable(0.0);
  const auto eval = target.evaluate(x);
  EXPECT_NEAR(eval.score.scalar(), 0.0, 1e-15);
  EXPECT_NEAR(tape.backward(eval.log_density).of(x)[0], 0.0, 1e-15);
}

TEST(Targets, FiftyDimensionalMixtureMatchesDirectSummation) {
  const auto target = GaussianMixtureTarget::with_random_means(50, 8, 0, 1.0);
  EXPECT_NEAR(std::accumulate(target.weights().begin(), target.weights().end(), 0.0), 1.0, 1e-12);
  std::vector<double> x(target.means().begin(), target.means().begin() + 50);
  ad::Tape tape;
  const double value = target.log_density(tape.constant({1, 50}, x)).scalar();
  EXPECT_NEAR(value, static_cast<double>(brute_force_mixture(target, x)), 1e-10);
  // Also away from every mean, where the components are far apart in log scale.
  for (auto& v : x) {
    v = -v;
  }
  const double far = target.log_density(tape.constant({1, 50}, x)).scalar();
  EXPECT_NEAR(far, static_cast<double>(brute_force_mixture(target, x)), 1e-10 * std::abs(far));
}

TEST(Targets, MeansAreDrawnAroundThree) {
  const auto target = GaussianMixtureTarget::with_random_means(50, 8, 0, 1.0);
  const auto& means = target.means();
  const double mean = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
  EXPECT_NEAR(mean, 3.0, 4.0 / std::sqrt(static_cast<double>(means.size())));
  EXPECT_EQ(means, GaussianMixtureTarget::with_random_means(50, 8, 0, 1.0).means());
  EXPECT_NE(means, GaussianMixtureTarget::with_random_means(50, 8, 1, 1.0).means());
}

TEST(Targets, ScoreMatchesFiniteDifferencesOnRandomPoints) {
  const auto target = GaussianMixtureTarget::with_random_means(50, 8, 3, 1.0);
  CounterEngine engine{StreamKey{17}};
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> x(50);
    for (auto& v : x) {
      v = 3.0 + 1.5 * engine.normal();
    }
    const auto f = [&](ad::Tape&, ad::Var flat) {
      return target.log_density(ad::transpose(flat));
    };
    EXPECT_LT(ad::finite_difference_check(f, x, 1e-5), 1e-5);

    ad::Tape tape;
    auto point = tape.variable({1, 50}, x);
    const auto eval = target.evaluate(point);
    const auto grad = tape.backward(eval.log_density).of(point);
    for (std::size_t j = 0; j < 50; ++j) {
      EXPECT_NEAR(eval.score.value()[j], grad[j], 1e-12 * (1.0 + std::abs(grad[j])));
    }
  }
}

TEST(Targets, ScoreGradientMatchesFiniteDifferences) {
  const auto target = GaussianMixtureTarget::with_random_means(3, 4, 5, 0.7);
  const std::vector<double> x{2.1, 3.5, 2.9};
  const auto f = [&](ad::Tape& tape, ad::Var flat) {
    const auto eval = target.evaluate(ad::transpose(flat));
    return ad::dot(eval.score, tape.constant({1, 3}, {0.3, -1.1, 0.4}));
  };
  EXPECT_LT(ad::finite_difference_check(f, x, 1e-6), 1e-6);
}

TEST(Targets, MixtureRespectsLogSumExpBounds) {
  const auto target = GaussianMixtureTarget::with_random_means(4, 8, 2, 1.3);
  CounterEngine engine{StreamKey{23}};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(4);
    for (auto& v : x) {
      v = 3.0 + 3.0 * engine.normal();
    }
    ad::Tape tape;
    const double value = target.log_density(tape.constant({1, 4}, x)).scalar();
    double best = -INFINITY;
    for (std::size_t m = 0; m < 8; ++m) {
      const std::vector<double> mean(target.means().begin() + static_cast<std::ptrdiff_t>(m * 4),
                                     target.means().begin() + static_cast<std::ptrdiff_t>(m * 4 + 4));
      const double component =
          std::log(target.weights()[m]) +
          ad::gaussian_log_density(tape.constant({1, 4}, x), tape.constant({1, 4}, mean), tape.constant(1.3))
              .scalar();
      best = std::max(best, component);
    }
    EXPECT_GE(value, best - 1e-12);
    EXPECT_LE(value, best + std::log(8.0) + 1e-12);
  }
}

TEST(Targets, InitialDensityClosedForm) {
  const GaussianInitial initial{{0.0}, 9.0};
  ad::Tape tape;
  EXPECT_NEAR(initial.log_density(tape.constant(0.0)).scalar(), -2.01755082187278243317557497333, 1e-14);
}

TEST(Targets, InitialSampleMean) {
  const GaussianInitial initial{{0.0, 0.0, 0.0}, 9.0};
  CounterEngine engine{StreamKey{31}};
  const std::size_t count = 100000;
  const auto samples = initial.sample(count, engine);
  for (std::size_t j = 0; j < 3; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      total += samples[i * 3 + j];
    }
    EXPECT_NEAR(total / count, 0.0, 3.0 * 3.0 / std::sqrt(static_cast<double>(count)));
  }
}

TEST(Targets, InitialDensityIntegratesToOne) {
  const GaussianInitial initial{{0.5}, 9.0};
  const double h = 0.01;
  std::vector<double> grid;
  for (double x = -60.0; x <= 61.0 + 1e-9; x += h) {
    grid.push_back(x);
  }
  ad::Tape tape;
  const auto values = ad::exp(initial.log_density(tape.constant({grid.size(), 1}, grid))).value();
  double integral = 0.0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    integral += 0.5 * h * (values[i] + values[i - 1]);
  }
  EXPECT_NEAR(integral, 1.0, 1e-6);
}

TEST(Targets, ScheduleFromEqualRawsIsUniform) {
  ad::Tape tape;
  const auto path = AnnealPath::build(tape.variable({4, 1}, {0.3, 0.3, 0.3, 0.3}));
  const auto betas = path.values();
  ASSERT_EQ(betas.size(), 5U);
  const std::vector<double> expected{0.0, 0.25, 0.5, 0.75, 1.0};
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_NEAR(betas[k], expected[k], 1e-15);
  }
}

TEST(Targets, ScheduleEndpointsAreExactAndStrictlyIncreasing) {
  CounterEngine engine{StreamKey{41}};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> raw(7);
    for (auto& r : raw) {
      r = 3.0 * engine.normal();
    }
    ad::Tape tape;
    const auto betas = AnnealPath::build(tape.variable({7, 1}, raw)).values();
    EXPECT_EQ(betas.front(), 0.0);
    EXPECT_EQ(betas.back(), 1.0);
    for (std::size_t k = 1; k < betas.size(); ++k) {
      EXPECT_GT(betas[k], betas[k - 1]);
    }
  }
}

TEST(Targets, ScheduleGradientMatchesFiniteDifferences) {
  const std::vector<double> raw{0.4, -1.0, 0.7, 0.1};
  const auto f = [](ad::Tape&, ad::Var r) { return AnnealPath::build(r).beta(2); };
  EXPECT_LT(ad::finite_difference_check(f, raw, 1e-6), 1e-6);
}

TEST(Targets, AnnealedEndpointsAreBitExact) {
  const auto target = GaussianMixtureTarget::with_random_means(5, 8, 0, 1.0);
  const GaussianInitial initial{std::vector<double>(5, 0.0), 9.0};
  ad::Tape tape;
  AnnealedDensity density{initial, target, AnnealPath::build(tape.variable({3, 1}, {0.2, -0.4, 1.0}))};
  CounterEngine engine{StreamKey{43}};
  auto x = tape.constant({4, 5}, engine.normals(20));
  const auto terms = density.terms(x);
  const auto at0 = density.log_density(terms, 0).value();
  const auto at_end = density.log_density(terms, 3).value();
  const auto q = initial.log_density(x).value();
  const auto p = target.log_density(x).value();
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(at0[i], q[i]);
    EXPECT_EQ(at_end[i], p[i]);
  }
  const auto score_end = density.score(terms, 3).value();
  const auto target_score = target.evaluate(x).score.value();
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(score_end[i], target_score[i]);
  }
}

TEST(Targets, AnnealedMidpointInOneDimension) {
  const GaussianMixtureTarget target{1, {0.0}, 1.0};
  const GaussianInitial initial{{0.0}, 9.0};
  ad::Tape tape;
  AnnealedDensity density{initial, target, AnnealPath::build(tape.filled({2, 1}, 0.0))};
  EXPECT_NEAR(density.log_density(tape.constant(1.0), 1).scalar(), -1.74602245531650536371375370955, 1e-14);
}

}  // namespace
}  // namespace dsmcs
