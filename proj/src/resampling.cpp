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

#include "dsmcs/resampling.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace dsmcs {

namespace {

// Keeps the surrogate's two-category logits finite when the gate probability is 0 or 1.
constexpr double kGateFloor = 1e-10;

std::vector<std::size_t> identity_indices(std::size_t n) {
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

}  // namespace

ResamplingScheme parse_scheme(std::string_view name) {
  if (name == "none") {
    return ResamplingScheme::kNone;
  }
  if (name == "cat") {
    return ResamplingScheme::kCat;
  }
  if (name == "bern-cat") {
    return ResamplingScheme::kBernCat;
  }
  if (name == "gst") {
    return ResamplingScheme::kGst;
  }
  if (name == "bern-gst") {
    return ResamplingScheme::kBernGst;
  }
  throw std::invalid_argument{"unknown resampling scheme '" + std::string{name} + "'"};
}

std::string_view to_string(ResamplingScheme scheme) {
  switch (scheme) {
    case ResamplingScheme::kNone:
      return "none";
    case ResamplingScheme::kCat:
      return "cat";
    case ResamplingScheme::kBernCat:
      return "bern-cat";
    case ResamplingScheme::kGst:
      return "gst";
    case ResamplingScheme::kBernGst:
      return "bern-gst";
  }
  return "none";
}

NormalizedWeights NormalizedWeights::from_log(ad::Var log_weights) {
  const auto values = log_weights.value();
  std::vector<double> probs(values.size());
  std::transform(values.begin(), values.end(), probs.begin(), [](double lw) { return std::exp(lw); });
  return {log_weights, std::move(probs)};
}

double ess(std::span<const double> probs) {
  double sq = 0.0;
  for (double w : probs) {
    sq += w * w;
  }
  return 1.0 / sq;
}

double gate_probability(double effective_size, std::size_t particles) {
  if (particles < 2) {
    return 0.0;
  }
  const double p = 1.0 - (effective_size - 1.0) / static_cast<double>(particles - 1);
  return std::clamp(p, 0.0, 1.0);
}

ad::Var gate_probability(ad::Var log_weights) {
  auto& tape = log_weights.tape();
  const auto n = log_weights.size();
  if (n < 2) {
    return tape.constant(0.0);
  }
  auto effective_size = ad::div(tape.constant(1.0), ad::sum(ad::exp(ad::mul(2.0, log_weights))));
  return ad::sub(1.0, ad::mul(ad::add(effective_size, -1.0), 1.0 / static_cast<double>(n - 1)));
}

std::vector<double> gapped_logits(std::span<const double> logits, std::size_t sampled, double gap) {
  std::vector<double> out(logits.begin(), logits.end());
  const double top = *std::max_element(logits.begin(), logits.end());
  out[sampled] = std::max(out[sampled], top);
  for (std::size_t j = 0; j < out.size(); ++j) {
    if (j != sampled) {
      out[j] = std::min(out[j], out[sampled] - gap);
    }
  }
  return out;
}

ad::Var straight_through_one_hot(ad::Var logits, std::span<const std::size_t> sampled, double tau, double gap) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument{"straight-through temperature must be positive"};
  }
  if (logits.rows() != 1 && logits.cols() != 1) {
    throw std::invalid_argument{"straight-through logits must be a vector"};
  }
  auto& tape = logits.tape();
  const auto categories = logits.size();
  const auto rows = sampled.size();
  const auto base = logits.value();
  // Row r of `soft` is softmax((logits + perturbation_r) / tau); the perturbation is a constant.
  auto soft = std::make_shared<std::vector<double>>(rows * categories);
  std::vector<double> hard(rows * categories, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (sampled[r] >= categories) {
      throw std::invalid_argument{"straight-through sample index out of range"};
    }
    const auto target = gapped_logits(base, sampled[r], gap);
    const double hi = *std::max_element(target.begin(), target.end());
    double total = 0.0;
    double* row = &(*soft)[r * categories];
    for (std::size_t j = 0; j < categories; ++j) {
      row[j] = std::exp((target[j] - hi) / tau);
      total += row[j];
    }
    for (std::size_t j = 0; j < categories; ++j) {
      row[j] /= total;
    }
    hard[r * categories + sampled[r]] = 1.0;
  }
  // Forward: exactly one-hot. Backward: the softmax Jacobian of each row.
  return tape.record("straight_through_one_hot", {rows, categories}, std::move(hard), {logits},
                     [logits, soft, rows, categories, tau](ad::BackwardContext& ctx) {
                       const auto g = ctx.grad_out();
                       auto gl = ctx.grad(logits);
                       if (gl.empty()) {
                         return;
                       }
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* p = &(*soft)[r * categories];
                         const double* gr = &g[r * categories];
                         double inner = 0.0;
                         for (std::size_t j = 0; j < categories; ++j) {
                           inner += p[j] * gr[j];
                         }
                         for (std::size_t j = 0; j < categories; ++j) {
                           gl[j] += p[j] * (gr[j] - inner) / tau;
                         }
                       }
                     });
}

ResamplingOutcome categorical_resample(const NormalizedWeights& weights, RandomSource& rng) {
  ResamplingOutcome out;
  out.indices = rng.categorical(weights.probs, weights.size());
  out.resampled = true;
  return out;
}

ResamplingOutcome bernoulli_gate(const NormalizedWeights& weights, RandomSource& rng, double tau, double gap) {
  const auto n = weights.size();
  ResamplingOutcome out;
  out.indices = identity_indices(n);
  if (n < 2) {
    out.gate_probability = 0.0;
    return out;
  }
  out.gate_probability = gate_probability(ess(weights.probs), n);
  out.resampled = rng.bernoulli(out.gate_probability);
  if (tau > 0.0) {
    auto& tape = weights.log_weights.tape();
    auto p = ad::add(ad::mul(gate_probability(weights.log_weights), 1.0 - 2.0 * kGateFloor), kGateFloor);
    const double p_value = p.scalar();
    const std::vector<double> two_logits{std::log1p(-p_value), std::log(p_value)};
    const auto target = gapped_logits(two_logits, out.resampled ? 1 : 0, gap);
    const double shift = (target[1] - two_logits[1]) - (target[0] - two_logits[0]);
    // softmax over (log(1-p), log p) / tau, read at the "resample" category, is a sigmoid of the
    // logit difference.
    auto logit = ad::sub(ad::log(p), ad::log(ad::sub(1.0, p)));
    auto soft = ad::sigmoid(ad::mul(ad::add(logit, shift), 1.0 / tau));
    out.gate = ad::add(tape.constant(out.resampled ? 1.0 : 0.0), ad::sub(soft, ad::stop_gradient(soft)));
  }
  return out;
}

ResamplingOutcome gst_resample(const NormalizedWeights& weights, double tau, double gap, RandomSource& rng) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument{"gst_resample: temperature must be positive"};
  }
  ResamplingOutcome out = categorical_resample(weights, rng);
  out.surrogate = straight_through_one_hot(weights.log_weights, out.indices, tau, gap);
  return out;
}

ResamplingOutcome resample(ResamplingScheme scheme, const NormalizedWeights& weights, double tau, double gap,
                           RandomSource& rng) {
  const auto n = weights.size();
  if (scheme == ResamplingScheme::kNone || n < 2) {
    ResamplingOutcome out;
    out.indices = identity_indices(n);
    out.gate_probability = 0.0;
    return out;
  }
  switch (scheme) {
    case ResamplingScheme::kCat:
      return categorical_resample(weights, rng);
    case ResamplingScheme::kGst:
      return gst_resample(weights, tau, gap, rng);
    case ResamplingScheme::kBernCat: {
      auto gate = bernoulli_gate(weights, rng);
      if (gate.resampled) {
        gate.indices = categorical_resample(weights, rng).indices;
      }
      return gate;
    }
    case ResamplingScheme::kBernGst: {
      auto gate = bernoulli_gate(weights, rng, tau, gap);
      // Candidate ancestors are drawn even when the gate stays closed: the gate's surrogate
      // gradient compares the resampled and the unchanged system.
      auto candidate = gst_resample(weights, tau, gap, rng);
      gate.surrogate = candidate.surrogate;
      if (gate.resampled) {
        gate.indices = std::move(candidate.indices);
      }
      return gate;
    }
    case ResamplingScheme::kNone:
      break;
  }
  throw std::logic_error{"resample: unhandled scheme"};
}

ParticleSystem apply_resampling(const ParticleSystem& particles, const ResamplingOutcome& outcome) {
  const auto n = particles.size();
  if (outcome.indices.size() != n) {
    throw std::invalid_argument{"apply_resampling: one ancestor index per particle required"};
  }
  const bool gated_surrogate = outcome.gate.valid();
  if (!outcome.resampled && !gated_surrogate) {
    return particles;
  }
  auto gather = [&](ad::Var block) {
    if (outcome.surrogate.valid()) {
      return ad::matmul(outcome.surrogate, block);
    }
    return ad::gather_rows(block, outcome.indices);
  };
  auto& tape = particles.positions.tape();
  auto uniform = tape.filled({n, 1}, -std::log(static_cast<double>(n)));
  ParticleSystem out = particles;
  if (gated_surrogate) {
    // (1 - b) x + b x_resampled, exact in the forward pass because b is exactly 0 or 1.
    auto blend = [&](ad::Var current, ad::Var resampled) { return ad::lerp(current, resampled, outcome.gate); };
    out.positions = blend(particles.positions, gather(particles.positions));
    if (particles.has_momenta()) {
      out.momenta = blend(particles.momenta, gather(particles.momenta));
    }
    out.log_weights = blend(particles.log_weights, uniform);
    out.uniform_weights = outcome.resampled;
    return out;
  }
  out.positions = gather(particles.positions);
  if (particles.has_momenta()) {
    out.momenta = gather(particles.momenta);
  }
  out.log_weights = uniform;
  out.uniform_weights = true;
  return out;
}

}  // namespace dsmcs
