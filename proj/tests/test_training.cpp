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

#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

#include "dsmcs/training.hpp"

namespace dsmcs {
namespace {

RunConfig small_config(KernelKind kernel = KernelKind::kLangevin) {
  RunConfig c;
  c.kernel = kernel;
  c.resampling = ResamplingScheme::kBernCat;
  c.steps = 3;
  c.particles = 4;
  c.hidden_width = 4;
  c.target.dim = 2;
  c.target.components = 2;
  c.epochs = 2;
  c.iterations = 2;
  c.batch = 3;
  c.learning_rate = 0.05;
  return c;
}

void expect_same_history(const TrainState& a, const TrainState& b) {
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    EXPECT_EQ(a.history[e].epoch, b.history[e].epoch);
    EXPECT_EQ(a.history[e].elbo_mean, b.history[e].elbo_mean);
    EXPECT_EQ(a.history[e].elbo_std, b.history[e].elbo_std);
    EXPECT_EQ(a.history[e].ess, b.history[e].ess);
    EXPECT_EQ(a.history[e].resample_rate, b.history[e].resample_rate);
  }
  EXPECT_EQ(a.params.flatten(), b.params.flatten());
}

TEST(LearningRate, DecaysEveryTwentyFiveEpochsUntilTwoHundred) {
  EXPECT_DOUBLE_EQ(lr_schedule(0), 1.0);
  EXPECT_DOUBLE_EQ(lr_schedule(24), 1.0);
  EXPECT_DOUBLE_EQ(lr_schedule(25), 0.75);
  EXPECT_DOUBLE_EQ(lr_schedule(199), std::pow(0.75, 7));
  EXPECT_DOUBLE_EQ(lr_schedule(200), std::pow(0.75, 8));
  EXPECT_DOUBLE_EQ(lr_schedule(300), std::pow(0.75, 8));
}

ParameterSet two_parameters() {
  ParameterSet p;
  p.add({"a", "net", {2, 1}, {0.5, -1.0}});
  p.add({"b", "schedule", {1, 1}, {3.0}});
  return p;
}

TEST(Adam, FirstStepMovesByTheLearningRate) {
  auto params = two_parameters();
  auto state = AdamState::zeros_like(params);
  ASSERT_TRUE(adam_update(params, state, {{2.0, -0.01}, {1e3}}, 0.1));
  EXPECT_NEAR(params.get("a").values[0], 0.6, 1e-8);
  EXPECT_NEAR(params.get("a").values[1], -1.1, 1e-6);
  EXPECT_NEAR(params.get("b").values[0], 3.1, 1e-8);
  EXPECT_EQ(state.t, 1U);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto params = two_parameters();
  auto state = AdamState::zeros_like(params);
  const auto before = params.flatten();
  ASSERT_TRUE(adam_update(params, state, {{0.0, 0.0}, {0.0}}, 0.1));
  EXPECT_EQ(params.flatten(), before);
}

TEST(Adam, NonFiniteGradientIsRejectedWithoutSideEffects) {
  auto params = two_parameters();
  auto state = AdamState::zeros_like(params);
  ASSERT_TRUE(adam_update(params, state, {{1.0, 1.0}, {1.0}}, 0.1));
  const auto before = params.flatten();
  const auto m = state.m;
  EXPECT_FALSE(adam_update(params, state, {{std::numeric_limits<double>::quiet_NaN(), 1.0}, {1.0}}, 0.1));
  EXPECT_FALSE(adam_update(params, state, {{1.0, 1.0}, {std::numeric_limits<double>::infinity()}}, 0.1));
  EXPECT_EQ(params.flatten(), before);
  EXPECT_EQ(state.m, m);
  EXPECT_EQ(state.t, 1U);
}

TEST(Parameters, FlattenAndAssignRoundTrip) {
  auto params = two_parameters();
  EXPECT_EQ(params.scalar_count(), 3U);
  params.assign(std::vector<double>{7.0, 8.0, 9.0});
  EXPECT_EQ(params.flatten(), (std::vector<double>{7.0, 8.0, 9.0}));
  EXPECT_THROW(params.assign(std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(params.add({"a", "net", {1, 1}, {0.0}}), std::invalid_argument);
  EXPECT_FALSE(params.contains("c"));
}

TEST(Initialization, StepSizesStartAtHalfTheBoundAndBetasAreUniform) {
  auto config = small_config(KernelKind::kHamiltonian);
  config.delta_hat = 0.25;
  config.rho_init = 0.7;
  config.mass_scale_init = 2.0;
  const auto summary = summarize(init_parameters(config), config);
  ASSERT_EQ(summary.step_sizes.size(), 3U);
  for (const double d : summary.step_sizes) {
    EXPECT_DOUBLE_EQ(d, 0.125);
  }
  const std::vector<double> betas{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(summary.betas[k], betas[k], 1e-15);
  }
  EXPECT_NEAR(summary.rho, 0.7, 1e-15);
  EXPECT_NEAR(summary.mass_scale, 2.0, 1e-15);
  const auto langevin = init_parameters(small_config());
  EXPECT_FALSE(langevin.contains("rho"));
  EXPECT_TRUE(langevin.contains("schedule"));
}

TEST(Initialization, SeedControlsNetworkWeights) {
  auto config = small_config();
  const auto a = init_parameters(config).flatten();
  EXPECT_EQ(a, init_parameters(config).flatten());
  config.seed = 1;
  EXPECT_NE(a, init_parameters(config).flatten());
}

// Finite differences through the constrained step sizes, after moving off the symmetric start.
TEST(StepSizeNetwork, GradientMatchesFiniteDifferences) {
  const auto config = small_config(KernelKind::kHamiltonian);
  auto params = init_parameters(config);
  CounterEngine engine{StreamKey{99}};
  auto flat = params.flatten();
  for (auto& v : flat) {
    v += 0.3 * engine.normal();
  }
  params.assign(flat);
  const std::vector<double> weights{0.7, -1.3, 2.1};
  const auto objective = [&](const ReplicateModel& model, ad::Tape& tape) {
    ad::Var total = tape.constant(0.0);
    for (std::size_t k = 0; k < 3; ++k) {
      total = ad::add(total, ad::mul(model.params.step_sizes[k], weights[k]));
      total = ad::add(total, ad::mul(model.path.beta(k + 1), weights[2 - k]));
    }
    return ad::add(total, ad::mul(model.params.rho, model.params.mass_scale));
  };

  ad::Tape tape;
  const auto model = build_model(tape, params, config);
  const auto gradients = tape.backward(objective(model, tape));
  std::vector<double> analytic;
  for (const auto& leaf : model.leaves) {
    const auto part = gradients.of(leaf);
    analytic.insert(analytic.end(), part.begin(), part.end());
  }
  ASSERT_EQ(analytic.size(), flat.size());

  const auto value_at = [&](const std::vector<double>& at) {
    auto p = params;
    p.assign(at);
    ad::Tape t;
    return objective(build_model(t, p, config), t).scalar();
  };
  for (std::size_t i = 0; i < flat.size(); ++i) {
    auto plus = flat;
    auto minus = flat;
    plus[i] += 1e-6;
    minus[i] -= 1e-6;
    const double fd = (value_at(plus) - value_at(minus)) / 2e-6;
    EXPECT_NEAR(analytic[i], fd, 1e-7 * (1.0 + std::abs(fd))) << "coordinate " << i;
  }
}

TEST(Training, DeterministicAcrossRunsAndThreadCounts) {
  const auto config = small_config();
  auto a = init_train_state(config);
  auto b = init_train_state(config);
  auto c = init_train_state(config);
  train(config, a);
  train(config, b);
  train(config, c, {}, 2);
  expect_same_history(a, b);
  expect_same_history(a, c);
  ASSERT_EQ(a.history.size(), 2U);
  EXPECT_EQ(a.history[0].epoch, 1U);
  EXPECT_EQ(a.history[1].epoch, 2U);
  EXPECT_EQ(a.history[0].ess.size(), 3U);
  EXPECT_EQ(a.history[0].ess.front(), 4.0);
  EXPECT_TRUE(std::isfinite(a.history[1].elbo_mean));
  EXPECT_GT(a.history[1].elbo_std, 0.0);
}

TEST(Training, CheckpointResumeMatchesUninterruptedRun) {
  for (const auto kernel : {KernelKind::kLangevin, KernelKind::kHamiltonian}) {
    auto config = small_config(kernel);
    config.epochs = 3;
    auto straight = init_train_state(config);
    train(config, straight);

    const auto path = (std::filesystem::temp_directory_path() / "dsmcs_test_checkpoint.json").string();
    auto first = init_train_state(config);
    auto partial = config;
    partial.epochs = 1;
    train(partial, first);
    save_checkpoint(path, first);
    auto resumed = load_checkpoint(path);
    EXPECT_EQ(resumed.epoch, 1U);
    EXPECT_EQ(resumed.adam.t, first.adam.t);
    train(config, resumed);
    expect_same_history(straight, resumed);
    std::filesystem::remove(path);
  }
}

TEST(Training, CallbackSeesEveryEpoch) {
  const auto config = small_config();
  auto state = init_train_state(config);
  std::vector<std::size_t> seen;
  train(config, state, [&](const EpochRecord& r, const TrainState& s) {
    seen.push_back(r.epoch);
    EXPECT_EQ(s.epoch, r.epoch);
  });
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2}));
}

TEST(Training, ZeroEpochsLeavesStateUntouched) {
  auto config = small_config();
  config.epochs = 0;
  auto state = init_train_state(config);
  const auto before = state.params.flatten();
  train(config, state);
  EXPECT_TRUE(state.history.empty());
  EXPECT_EQ(state.params.flatten(), before);
}

TEST(Training, PersistentOverflowMarksTheRunDiverged) {
  auto config = small_config();
  config.delta_hat = 1e300;
  config.max_nonfinite = 3;
  config.epochs = 5;
  auto state = init_train_state(config);
  const auto before = state.params.flatten();
  train(config, state);
  EXPECT_TRUE(state.diverged);
  EXPECT_EQ(state.skipped_total, 4U);
  EXPECT_EQ(state.params.flatten(), before);
  ASSERT_FALSE(state.history.empty());
  EXPECT_TRUE(std::isnan(state.history.back().elbo_mean));
}

TEST(Training, IterationKeysAreDistinct) {
  EXPECT_NE(iteration_key(0, 0, 1).value(), iteration_key(0, 1, 0).value());
  EXPECT_NE(iteration_key(0, 0, 0).value(), iteration_key(1, 0, 0).value());
  EXPECT_EQ(iteration_key(4, 2, 3).value(), iteration_key(4, 2, 3).value());
}

}  // namespace
}  // namespace dsmcs
