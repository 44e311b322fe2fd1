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

#ifndef DSMCS_KERNELS_HPP
#define DSMCS_KERNELS_HPP

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

#include "dsmcs/autodiff.hpp"
#include "dsmcs/targets.hpp"

/**
 * \file
 * \brief Unadjusted Markov kernels and their incremental importance weights.
 *
 * All functions act on a block of particles (one per row). Noise is always passed in as an
 * explicit standard-normal block, so positions are reparameterised functions of the trainable
 * parameters and tests can freeze randomness.
 */

namespace dsmcs {

/// A non-finite value appeared inside a transition.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::size_t step, std::size_t particle);

  [[nodiscard]] std::size_t step() const noexcept { return step_; }
  [[nodiscard]] std::size_t particle() const noexcept { return particle_; }

 private:
  std::size_t step_;
  std::size_t particle_;
};

/// Throws NonFiniteError naming the first row of `block` that holds a non-finite entry.
void require_finite(ad::Var block, const char* what, std::size_t step);

using ScoreFn = std::function<ad::Var(ad::Var)>;

/// Result of one transition of every particle.
struct Move {
  ad::Var positions;
  ad::Var momenta;     ///< Hamiltonian only
  ad::Var log_weight;  ///< N x 1 incremental log-weights
  DensityTerms terms;  ///< density terms at the new positions, reusable by the next step
};

// --- overdamped Langevin -------------------------------------------------------------------

/// z = prev + step * score_prev + sqrt(2 step) * noise.
ad::Var langevin_step(ad::Var prev, ad::Var step_size, ad::Var score_prev, ad::Var noise);

/// log gamma_k(z) + log B_k(prev | z) - log gamma_{k-1}(prev) - log F_k(z | prev), where
/// F_k(. | x) = N(x + step * grad log gamma_k(x), 2 step I) and B_k = F_k. `score_previous` may
/// carry an already computed grad log gamma_k(prev).
ad::Var langevin_log_incremental_weight(const AnnealedDensity& density, std::size_t k, const DensityTerms& current,
                                        const DensityTerms& previous, ad::Var step_size, ad::Var score_previous = {});

Move langevin_transition(const AnnealedDensity& density, std::size_t k, const DensityTerms& previous,
                         ad::Var step_size, ad::Var noise);

// --- Hamiltonian ---------------------------------------------------------------------------

struct PhasePoint {
  ad::Var positions;
  ad::Var momenta;
};

/// One leapfrog step with mass matrix c I:
///   v' = v + (step / 2) score(z);  z' = z + step v' / c;  v'' = v' + (step / 2) score(z').
PhasePoint leapfrog(ad::Var positions, ad::Var momenta, ad::Var step_size, ad::Var mass_scale, const ScoreFn& score);

/// rho v + sqrt(1 - rho^2) sqrt(c) noise, which leaves N(0, c I) invariant.
ad::Var refresh_momentum(ad::Var momenta, ad::Var rho, ad::Var mass_scale, ad::Var noise);

/// log gamma_k(z, v) + log N(v_prev | rho v_ref, (1 - rho^2) c I)
///   - log gamma_{k-1}(z_prev, v_prev) - log N(v_ref | rho v_prev, (1 - rho^2) c I),
/// with gamma_k(z, v) = gamma_k(z) N(v | 0, c I). `current` and `momenta` are the leapfrog output
/// started from (`previous`, `refreshed`).
ad::Var hamiltonian_log_incremental_weight(const AnnealedDensity& density, std::size_t k, const DensityTerms& current,
                                           ad::Var momenta, const DensityTerms& previous, ad::Var previous_momenta,
                                           ad::Var refreshed, ad::Var rho, ad::Var mass_scale);

Move hamiltonian_transition(const AnnealedDensity& density, std::size_t k, const DensityTerms& previous,
                            ad::Var previous_momenta, ad::Var step_size, ad::Var rho, ad::Var mass_scale,
                            ad::Var noise);

}  // namespace dsmcs

#endif
