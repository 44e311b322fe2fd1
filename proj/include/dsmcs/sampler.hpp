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

#ifndef DSMCS_SAMPLER_HPP
#define DSMCS_SAMPLER_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "dsmcs/autodiff.hpp"
#include "dsmcs/kernels.hpp"
#include "dsmcs/random.hpp"
#include "dsmcs/resampling.hpp"
#include "dsmcs/targets.hpp"

namespace dsmcs {

enum class KernelKind { kLangevin, kHamiltonian };

KernelKind parse_kernel(std::string_view name);
std::string_view to_string(KernelKind kernel);

struct ChainSettings {
  KernelKind kernel{KernelKind::kLangevin};
  ResamplingScheme scheme{ResamplingScheme::kNone};
  double tau{0.1};
  double gap{1.0};
  std::size_t particles{1};
};

/// Differentiable kernel parameters of one replicate. `step_sizes` holds K scalars;
/// `rho` and `mass_scale` are used by the Hamiltonian kernel only.
struct ChainParameters {
  std::vector<ad::Var> step_sizes;
  ad::Var rho;
  ad::Var mass_scale;
};

/// Stochastic lower bound on log Z from one run of the sampler.
struct BoundEstimate {
  ad::Var elbo;
  std::vector<double> step_terms;         ///< log sum_i alpha_k^i w_k^i, k = 1..K
  std::vector<double> ess;                ///< ESS of the weights entering step k, before resampling (ESS_1 = N)
  std::vector<std::uint8_t> resampled;    ///< whether those weights were resampled before step k
  std::vector<ad::Var> resampling_logits; ///< per step: the node the resampling scheme read its logits from
};

/// One sampler run on `density.path().steps()` transitions.
///
/// Draws N particles from the initial density (and N(0, c I) momenta for the Hamiltonian
/// kernel), then for k = 1..K moves every particle with the kernel, adds the bound term
/// log sum_i alpha_k^i w_k^i where alpha_k are the normalised weights entering step k (exactly
/// 1/N after a resampling), updates the weights and applies the resampling scheme. No
/// resampling happens after the last transition since it cannot affect the bound.
///
/// Diagnostics are indexed by the transition the weights enter: ess[k - 1] is the ESS of the
/// weights after step k - 1 (N for the initial weights) and resampled[k - 1] tells whether they
/// were resampled before step k, which never happens before step 1.
BoundEstimate run_chain(const AnnealedDensity& density, const ChainSettings& settings, const ChainParameters& params,
                        RandomSource& rng);

/// Parameters instantiated on a replicate's tape, plus the leaves to differentiate.
struct ReplicateModel {
  ChainParameters params;
  AnnealPath path;
  std::vector<ad::Var> leaves;
};

using ModelBuilder = std::function<ReplicateModel(ad::Tape&)>;

/// Averages over a batch of independent replicates.
struct BatchEstimate {
  double elbo_mean{0.0};
  std::vector<double> elbo_values;            ///< one per replicate (NaN on failure)
  std::vector<std::vector<double>> gradients; ///< mean d elbo / d leaf, in leaf order
  std::vector<double> ess;                    ///< mean per-step ESS
  std::vector<double> resample_rate;          ///< fraction of replicates resampled before step k
  std::size_t failures{0};
  std::string first_error;

  [[nodiscard]] bool finite() const noexcept { return failures == 0; }
};

/// Runs `batch` replicates, replicate r drawing from the streams of `key.child(r)`. Replicates
/// run on up to `threads` workers; results are reduced in replicate order so the outcome does
/// not depend on the worker count.
BatchEstimate elbo_batch(const GaussianInitial& initial, const GaussianMixtureTarget& target,
                         const ChainSettings& settings, const ModelBuilder& builder, StreamKey key, std::size_t batch,
                         std::size_t threads = 1);

/// Worker count from the DSMCS_THREADS environment variable, capped by the hardware.
std::size_t default_threads();

}  // namespace dsmcs

#endif
