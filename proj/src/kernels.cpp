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

#include "dsmcs/kernels.hpp"

#include <cmath>
#include <sstream>

namespace dsmcs {

NonFiniteError::NonFiniteError(const std::string& what, std::size_t step, std::size_t particle)
    : std::runtime_error{[&] {
        std::ostringstream os;
        os << "non-finite " << what << " at step " << step << ", particle " << particle;
        return os.str();
      }()},
      step_{step},
      particle_{particle} {}

void require_finite(ad::Var block, const char* what, std::size_t step) {
  const auto values = block.value();
  const auto cols = block.cols();
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      throw NonFiniteError{what, step, k / cols};
    }
  }
}

ad::Var langevin_step(ad::Var prev, ad::Var step_size, ad::Var score_prev, ad::Var noise) {
  auto drift = ad::axpy(step_size, score_prev, prev);
  return ad::axpy(ad::sqrt(ad::mul(2.0, step_size)), noise, drift);
}

ad::Var langevin_log_incremental_weight(const AnnealedDensity& density, std::size_t k, const DensityTerms& current,
                                        const DensityTerms& previous, ad::Var step_size, ad::Var score_previous) {
  auto variance = ad::mul(2.0, step_size);
  if (!score_previous.valid()) {
    score_previous = density.score(previous, k);
  }
  auto forward_mean = ad::axpy(step_size, score_previous, previous.points);
  auto backward_mean = ad::axpy(step_size, density.score(current, k), current.points);
  auto log_forward = ad::gaussian_log_density(current.points, forward_mean, variance);
  auto log_backward = ad::gaussian_log_density(previous.points, backward_mean, variance);
  auto numerator = ad::add(density.log_density(current, k), log_backward);
  auto denominator = ad::add(density.log_density(previous, k - 1), log_forward);
  return ad::sub(numerator, denominator);
}

Move langevin_transition(const AnnealedDensity& density, std::size_t k, const DensityTerms& previous,
                         ad::Var step_size, ad::Var noise) {
  auto score_prev = density.score(previous, k);
  require_finite(score_prev, "score of the annealed log-density", k);
  auto positions = langevin_step(previous.points, step_size, score_prev, noise);
  auto terms = density.terms(positions);
  require_finite(terms.score_target, "score of the annealed log-density", k);
  auto log_weight = langevin_log_incremental_weight(density, k, terms, previous, step_size, score_prev);
  return {positions, {}, log_weight, terms};
}

PhasePoint leapfrog(ad::Var positions, ad::Var momenta, ad::Var step_size, ad::Var mass_scale, const ScoreFn& score) {
  auto half = ad::mul(0.5, step_size);
  auto mid = ad::axpy(half, score(positions), momenta);
  auto next = ad::axpy(ad::div(step_size, mass_scale), mid, positions);
  auto out = ad::axpy(half, score(next), mid);
  return {next, out};
}

ad::Var refresh_momentum(ad::Var momenta, ad::Var rho, ad::Var mass_scale, ad::Var noise) {
  auto spread = ad::sqrt(ad::mul(ad::sub(1.0, ad::square(rho)), mass_scale));
  return ad::axpy(spread, noise, ad::mul(rho, momenta));
}

ad::Var hamiltonian_log_incremental_weight(const AnnealedDensity& density, std::size_t k, const DensityTerms& current,
                                           ad::Var momenta, const DensityTerms& previous, ad::Var previous_momenta,
                                           ad::Var refreshed, ad::Var rho, ad::Var mass_scale) {
  auto& tape = momenta.tape();
  auto zero = tape.constant(0.0);
  auto refresh_variance = ad::mul(ad::sub(1.0, ad::square(rho)), mass_scale);
  auto joint_current =
      ad::add(density.log_density(current, k), ad::gaussian_log_density(momenta, zero, mass_scale));
  auto joint_previous =
      ad::add(density.log_density(previous, k - 1), ad::gaussian_log_density(previous_momenta, zero, mass_scale));
  auto log_backward = ad::gaussian_log_density(previous_momenta, ad::mul(rho, refreshed), refresh_variance);
  auto log_forward = ad::gaussian_log_density(refreshed, ad::mul(rho, previous_momenta), refresh_variance);
  return ad::sub(ad::add(joint_current, log_backward), ad::add(joint_previous, log_forward));
}

Move hamiltonian_transition(const AnnealedDensity& density, std::size_t k, const DensityTerms& previous,
                            ad::Var previous_momenta, ad::Var step_size, ad::Var rho, ad::Var mass_scale,
                            ad::Var noise) {
  auto refreshed = refresh_momentum(previous_momenta, rho, mass_scale, noise);
  DensityTerms current;
  bool at_start = true;
  const ScoreFn score = [&](ad::Var x) {
    if (at_start) {
      at_start = false;
      auto s = density.score(previous, k);
      require_finite(s, "score of the annealed log-density", k);
      return s;
    }
    current = density.terms(x);
    auto s = density.score(current, k);
    require_finite(s, "score of the annealed log-density", k);
    return s;
  };
  auto end = leapfrog(previous.points, refreshed, step_size, mass_scale, score);
  auto log_weight = hamiltonian_log_incremental_weight(density, k, current, end.momenta, previous, previous_momenta,
                                                       refreshed, rho, mass_scale);
  return {end.positions, end.momenta, log_weight, current};
}

}  // namespace dsmcs
