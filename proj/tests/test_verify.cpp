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
#include <string>
#include <vector>

#include "dsmcs/verify.hpp"

namespace dsmcs {
namespace {

TEST(GradientAudit, PassesForEveryKernelAndDetachedScheme) {
  for (const auto kernel : {KernelKind::kLangevin, KernelKind::kHamiltonian}) {
    for (const auto scheme : {ResamplingScheme::kNone, ResamplingScheme::kCat, ResamplingScheme::kBernCat}) {
      AuditConfig config;
      config.kernel = kernel;
      config.scheme = scheme;
      config.seed = 3;
      const auto report = gradient_audit(config);
      EXPECT_TRUE(report.passed) << to_string(kernel) << "/" << to_string(scheme) << " " << report.max_rel_error;
      EXPECT_LE(report.max_rel_error, 1e-4);
      EXPECT_TRUE(std::isfinite(report.elbo));
    }
  }
}

TEST(GradientAudit, CoversEveryParameterGroup) {
  AuditConfig config;
  config.kernel = KernelKind::kHamiltonian;
  const auto report = gradient_audit(config);
  std::vector<std::string> groups;
  for (const auto& g : report.groups) {
    groups.push_back(g.group);
    EXPECT_GT(g.count, 0U);
  }
  EXPECT_EQ(groups, (std::vector<std::string>{"net", "schedule", "rho", "mass"}));
}

TEST(GradientAudit, TamperedGroupIsTheOnlyFailure) {
  for (const std::string target : {"schedule", "rho", "net"}) {
    AuditConfig config;
    config.kernel = KernelKind::kHamiltonian;
    const auto report = gradient_audit(config, [&](std::vector<std::vector<double>>& grads, const ParameterSet& p) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p.all()[i].group == target) {
          grads[i].back() += 0.1;
          return;
        }
      }
    });
    EXPECT_FALSE(report.passed);
    EXPECT_EQ(report.failing_groups(), (std::vector<std::string>{target}));
  }
}

TEST(GradientAudit, StraightThroughSchemesAreRejected) {
  AuditConfig config;
  config.scheme = ResamplingScheme::kGst;
  EXPECT_THROW((void)gradient_audit(config), std::invalid_argument);
  config.scheme = ResamplingScheme::kBernGst;
  EXPECT_THROW((void)gradient_audit(config), std::invalid_argument);
}

TEST(VanishingGradient, IdenticalParticlesGiveZeroLogitGradient) {
  for (const auto kernel : {KernelKind::kLangevin, KernelKind::kHamiltonian}) {
    for (const auto scheme : {ResamplingScheme::kGst, ResamplingScheme::kBernGst}) {
      Theorem1Config config;
      config.kernel = kernel;
      config.scheme = scheme;
      const auto report = theorem1_check(config);
      EXPECT_TRUE(report.passed) << to_string(kernel) << "/" << to_string(scheme);
      EXPECT_LE(report.max_abs_resampling_gradient, 1e-12);
      for (const auto& [group, norm] : report.kernel_gradient_norms) {
        EXPECT_GT(norm, 0.0) << group;
      }
      for (const double e : report.ess) {
        EXPECT_DOUBLE_EQ(e, 8.0);
      }
      if (scheme == ResamplingScheme::kGst) {
        EXPECT_EQ(report.resampling_events, 3U);
      }
    }
  }
}

TEST(VanishingGradient, BrokenSymmetryIsDetected) {
  Theorem1Config config;
  config.perturbation = 1e-3;
  const auto report = theorem1_check(config);
  EXPECT_GT(report.max_abs_resampling_gradient, 1e-12);
  EXPECT_FALSE(report.passed);
}

TEST(VanishingGradient, DiverseParticlesCarryAGradient) {
  Theorem1Config config;
  config.identical = false;
  const auto report = theorem1_check(config);
  EXPECT_GT(report.max_abs_resampling_gradient, 1e-8);
}

TEST(Unbiasedness, EvidenceEstimateMatchesTheNormaliser) {
  for (const auto scheme : {ResamplingScheme::kNone, ResamplingScheme::kCat, ResamplingScheme::kBernCat}) {
    UnbiasednessConfig config;
    config.scheme = scheme;
    config.replicates = 20000;
    config.seed = 4;
    const auto report = unbiasedness_check(config);
    EXPECT_TRUE(report.passed) << to_string(scheme) << " z=" << report.z_score;
    EXPECT_TRUE(report.jensen) << to_string(scheme);
    EXPECT_LT(report.elbo_mean, 0.0);
  }
}

TEST(Suite, UnknownSuiteIsRejected) {
  EXPECT_THROW((void)run_verify_suite("everything"), std::invalid_argument);
}

TEST(Suite, GradientSuiteReportsPassed) {
  const auto report = run_verify_suite("grad", 1);
  EXPECT_TRUE(report.at("passed").get<bool>());
  EXPECT_EQ(report.at("grad").size(), 6U);
}

}  // namespace
}  // namespace dsmcs
