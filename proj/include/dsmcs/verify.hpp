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

#ifndef DSMCS_VERIFY_HPP
#define DSMCS_VERIFY_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsmcs/config.hpp"
#include "dsmcs/training.hpp"

namespace dsmcs {

// --- finite-difference gradient audit --------------------------------------------------------

struct AuditConfig {
  KernelKind kernel{KernelKind::kLangevin};
  ResamplingScheme scheme{ResamplingScheme::kNone};
  std::size_t steps{2};
  std::size_t particles{2};
  std::size_t dim{2};
  std::size_t components{4};
  std::uint64_t seed{0};
  double eps{1e-5};
  double tolerance{1e-4};
  /// Relative errors are taken against max(|tape|, |fd|, floor).
  double floor{1e-3};
};

struct GroupAudit {
  std::string group;
  std::size_t count{0};
  double max_rel_error{0.0};
  double max_abs_error{0.0};
  std::string worst;  ///< parameter[index] with the largest relative error
  bool passed{true};
};

struct AuditReport {
  AuditConfig config;
  double elbo{0.0};
  std::vector<GroupAudit> groups;
  double max_rel_error{0.0};
  bool passed{true};

  [[nodiscard]] std::vector<std::string> failing_groups() const;
};

/// Lets a test corrupt tape gradients (one vector per parameter) before they are compared.
using GradientTamper = std::function<void(std::vector<std::vector<double>>&, const ParameterSet&)>;

/// Central finite differences against tape gradients of the full bound, for every trainable
/// scalar. The run is recorded once; every perturbed evaluation replays its normals and its
/// discrete draws (resampling indices and gates), so the bound is a smooth function of the
/// parameters. Parameters are randomised away from their initial values first.
AuditReport gradient_audit(const AuditConfig& config, const GradientTamper& tamper = {});

// --- vanishing resampling gradient -----------------------------------------------------------

struct Theorem1Config {
  KernelKind kernel{KernelKind::kLangevin};
  ResamplingScheme scheme{ResamplingScheme::kGst};
  std::size_t steps{4};
  std::size_t particles{8};
  std::size_t dim{2};
  std::size_t components{4};
  std::uint64_t seed{0};
  double tau{0.1};
  double gap{1.0};
  /// false draws ordinary, diverse particles with live kernel noise instead.
  bool identical{true};
  /// Added to the first coordinate of particle 0 after initialisation; 0 keeps all particles
  /// bit-identical.
  double perturbation{0.0};
  double tolerance{1e-12};
};

struct Theorem1Report {
  Theorem1Config config;
  double elbo{0.0};
  double max_abs_resampling_gradient{0.0};
  std::vector<double> resampling_gradient_per_step;  ///< max |d elbo / d logits| at each resampling point
  std::size_t resampling_events{0};
  std::vector<std::pair<std::string, double>> kernel_gradient_norms;  ///< per parameter group
  std::vector<double> ess;
  bool passed{false};
};

/// Runs the sampler with every particle started at the same point and all kernel noise set to
/// zero, so all particles stay bit-identical and every weight is 1/N, while resampling draws stay
/// live. Passes when the gradient reaching the resampling logits is at most `tolerance` in
/// absolute value while the kernel parameters receive a nonzero gradient and, for the ungated
/// schemes, at least one resampling happened.
Theorem1Report theorem1_check(const Theorem1Config& config);

// --- unbiasedness of the evidence estimator --------------------------------------------------

struct UnbiasednessConfig {
  ResamplingScheme scheme{ResamplingScheme::kNone};
  KernelKind kernel{KernelKind::kLangevin};
  std::size_t steps{2};
  std::size_t particles{3};
  std::size_t replicates{100000};
  std::uint64_t seed{0};
  double step_size{0.5};
  double init_variance{9.0};
  double z_threshold{3.0};
};

struct UnbiasednessReport {
  UnbiasednessConfig config;
  double z_mean{0.0};   ///< Monte Carlo mean of exp(bound); Z = 1
  double z_se{0.0};
  double z_score{0.0};  ///< (mean - 1) / se
  double elbo_mean{0.0};
  double elbo_se{0.0};
  bool jensen{false};   ///< elbo_mean <= log Z + 3 se
  bool passed{false};   ///< |z_score| < z_threshold
};

/// One-dimensional N(0, init_variance) to N(0, 1) transport, for which log Z = 0: the Monte Carlo
/// mean of exp(bound) over independent replicates must match Z = 1.
UnbiasednessReport unbiasedness_check(const UnbiasednessConfig& config);

nlohmann::json to_json(const AuditReport& report);
nlohmann::json to_json(const Theorem1Report& report);
nlohmann::json to_json(const UnbiasednessReport& report);

/// Runs the named suite ("all", "grad", "theorem" or "unbiased") and returns its JSON report,
/// whose top-level "passed" summarises every check.
nlohmann::json run_verify_suite(const std::string& suite, std::uint64_t seed = 0, std::size_t replicates = 100000);

}  // namespace dsmcs

#endif
