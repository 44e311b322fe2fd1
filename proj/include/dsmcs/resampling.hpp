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

#ifndef DSMCS_RESAMPLING_HPP
#define DSMCS_RESAMPLING_HPP

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsmcs/autodiff.hpp"
#include "dsmcs/random.hpp"

/**
 * \file
 * \brief Effective sample size, multinomial resampling and its straight-through variants.
 *
 * Four schemes are provided. `cat` draws every ancestor index i.i.d. from the normalised
 * weights and passes no gradient to them. `bern-cat` first flips a coin with probability
 * 1 - (ESS - 1) / (N - 1) to decide whether to resample at all. `gst` and `bern-gst` have the
 * same forward law but route gradients to the weights through a gapped straight-through
 * surrogate: the hard one-hot selection in the forward pass, the gradient of a tempered softmax
 * of minimally perturbed logits in the backward pass.
 */

namespace dsmcs {

enum class ResamplingScheme { kNone, kCat, kBernCat, kGst, kBernGst };

ResamplingScheme parse_scheme(std::string_view name);
std::string_view to_string(ResamplingScheme scheme);
[[nodiscard]] constexpr bool is_gated(ResamplingScheme s) noexcept {
  return s == ResamplingScheme::kBernCat || s == ResamplingScheme::kBernGst;
}
[[nodiscard]] constexpr bool carries_gradient(ResamplingScheme s) noexcept {
  return s == ResamplingScheme::kGst || s == ResamplingScheme::kBernGst;
}

/// Normalised log-weights (N x 1) together with their probabilities as plain numbers.
struct NormalizedWeights {
  ad::Var log_weights;
  std::vector<double> probs;

  /// Wraps already normalised log-weights.
  static NormalizedWeights from_log(ad::Var log_weights);
  [[nodiscard]] std::size_t size() const noexcept { return probs.size(); }
};

/// 1 / sum_i w_i^2.
double ess(std::span<const double> probs);

/// 1 - (ESS - 1) / (N - 1), clamped to [0, 1]; zero for a single particle.
double gate_probability(double effective_size, std::size_t particles);

/// The same probability as a differentiable function of normalised log-weights (N x 1).
ad::Var gate_probability(ad::Var log_weights);

/// Logits perturbed so that `sampled` is the argmax and leads every other entry by at least
/// `gap`: the sampled entry is raised to the current maximum and each other entry is lowered only
/// as far as the gap requires. Returns the logits unchanged when the condition already holds.
std::vector<double> gapped_logits(std::span<const double> logits, std::size_t sampled, double gap);

/// Straight-through one-hot rows. Row r is exactly one-hot at `sampled[r]` in the forward pass;
/// its gradient is that of softmax((logits + perturbation_r) / tau), with the perturbation from
/// gapped_logits held constant. `logits` is 1 x C.
ad::Var straight_through_one_hot(ad::Var logits, std::span<const std::size_t> sampled, double tau, double gap);

struct ResamplingOutcome {
  std::vector<std::size_t> indices;  ///< ancestor of each new particle (zero-based)
  bool resampled{false};             ///< the gate value b_k
  double gate_probability{1.0};
  ad::Var surrogate;                 ///< N x N straight-through one-hot rows (GST schemes)
  ad::Var gate;                      ///< 1 x 1 straight-through gate (Bern-GST)
};

/// Scheme `cat`: indices drawn i.i.d. from the detached weights.
ResamplingOutcome categorical_resample(const NormalizedWeights& weights, RandomSource& rng);

/// Draws b ~ Bern(1 - (ESS - 1) / (N - 1)). With `tau` > 0 the returned gate carries a
/// straight-through gradient through the two-category surrogate (Bern-GST); otherwise the
/// probability is detached (Bern-Cat). For N = 1 the gate never fires.
ResamplingOutcome bernoulli_gate(const NormalizedWeights& weights, RandomSource& rng, double tau = 0.0,
                                 double gap = 1.0);

/// Schemes `gst`: categorical indices plus the N x N straight-through surrogate built on the
/// (non-detached) log-weights.
ResamplingOutcome gst_resample(const NormalizedWeights& weights, double tau, double gap, RandomSource& rng);

/// Full resampling decision for one step under `scheme`. The weights passed in are what the
/// scheme sees as its logits.
ResamplingOutcome resample(ResamplingScheme scheme, const NormalizedWeights& weights, double tau, double gap,
                           RandomSource& rng);

/// N particles at one step. Momenta are present only for the Hamiltonian kernel.
struct ParticleSystem {
  ad::Var positions;
  ad::Var momenta;
  ad::Var log_weights;  ///< normalised, N x 1
  bool uniform_weights{true};
  std::size_t step{0};

  [[nodiscard]] std::size_t size() const { return positions.rows(); }
  [[nodiscard]] bool has_momenta() const noexcept { return momenta.valid(); }
};

/// Clones particles along the outcome. GST outcomes gather through the surrogate matrix so
/// gradients reach the resampling probabilities; the gated straight-through variant blends the
/// unchanged and the resampled system with the gate. Weights reset to 1/N whenever the gate fired
/// and are left untouched otherwise.
ParticleSystem apply_resampling(const ParticleSystem& particles, const ResamplingOutcome& outcome);

}  // namespace dsmcs

#endif
