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

#include "dsmcs/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <stdexcept>
#include <thread>

namespace dsmcs {

KernelKind parse_kernel(std::string_view name) {
  if (name == "langevin") {
    return KernelKind::kLangevin;
  }
  if (name == "hamiltonian") {
    return KernelKind::kHamiltonian;
  }
  throw std::invalid_argument{"unknown kernel '" + std::string{name} + "'"};
}

std::string_view to_string(KernelKind kernel) {
  return kernel == KernelKind::kHamiltonian ? "hamiltonian" : "langevin";
}

namespace {

std::size_t first_non_finite_row(ad::Var block) {
  const auto values = block.value();
  const auto cols = block.cols();
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      return k / cols;
    }
  }
  return 0;
}

}  // namespace

BoundEstimate run_chain(const AnnealedDensity& density, const ChainSettings& settings, const ChainParameters& params,
                        RandomSource& rng) {
  const auto steps = density.path().steps();
  const auto n = settings.particles;
  const auto dim = density.initial().dim();
  if (steps < 1 || n < 1) {
    throw std::invalid_argument{"run_chain: need at least one step and one particle"};
  }
  if (params.step_sizes.size() != steps) {
    throw std::invalid_argument{"run_chain: one step size per transition required"};
  }
  const bool hamiltonian = settings.kernel == KernelKind::kHamiltonian;
  if (hamiltonian && (!params.rho.valid() || !params.mass_scale.valid())) {
    throw std::invalid_argument{"run_chain: the Hamiltonian kernel needs rho and the mass scale"};
  }
  auto& tape = params.step_sizes.front().tape();

  rng.begin_step(0);
  ParticleSystem particles;
  particles.positions = density.initial().sample(tape, rng.normals(n * dim));
  if (hamiltonian) {
    auto noise = tape.constant({n, dim}, rng.normals(n * dim));
    particles.momenta = ad::mul(ad::sqrt(params.mass_scale), noise);
  }
  particles.log_weights = tape.filled({n, 1}, -std::log(static_cast<double>(n)));
  particles.uniform_weights = true;
  auto terms = density.terms(particles.positions);
  require_finite(terms.score_target, "score of the target", 0);

  BoundEstimate out;
  out.step_terms.reserve(steps);
  out.ess.reserve(steps);
  out.resampled.reserve(steps);
  out.ess.push_back(static_cast<double>(n));
  out.resampled.push_back(0);
  std::vector<ad::Var> bound_terms;
  bound_terms.reserve(steps);

  for (std::size_t k = 1; k <= steps; ++k) {
    rng.begin_step(k);
    auto noise = tape.constant({n, dim}, rng.normals(n * dim));
    const auto& delta = params.step_sizes[k - 1];
    Move move = hamiltonian ? hamiltonian_transition(density, k, terms, particles.momenta, delta, params.rho,
                                                     params.mass_scale, noise)
                            : langevin_transition(density, k, terms, delta, noise);

    auto joint = ad::add(particles.log_weights, move.log_weight);
    auto term = ad::logsumexp(joint);
    if (!std::isfinite(term.scalar())) {
      throw NonFiniteError{"bound term", k, first_non_finite_row(move.log_weight)};
    }
    bound_terms.push_back(term);
    out.step_terms.push_back(term.scalar());

    particles.positions = move.positions;
    particles.momenta = move.momenta;
    particles.log_weights = ad::sub(joint, term);
    particles.uniform_weights = false;
    particles.step = k;
    terms = move.terms;
    if (k == steps) {
      break;
    }

    auto weights = NormalizedWeights::from_log(particles.log_weights);
    out.ess.push_back(std::clamp(ess(weights.probs), 1.0, static_cast<double>(n)));
    if (settings.scheme == ResamplingScheme::kNone || n < 2) {
      out.resampled.push_back(0);
      continue;
    }
    // A dedicated node marks where the resampling scheme reads the weights, so the gradient that
    // flows through resampling alone can be read off it.
    auto logits = ad::identity(particles.log_weights);
    out.resampling_logits.push_back(logits);
    auto scheme_weights = carries_gradient(settings.scheme) ? logits : ad::stop_gradient(logits);
    weights.log_weights = scheme_weights;
    auto outcome = resample(settings.scheme, weights, settings.tau, settings.gap, rng);
    out.resampled.push_back(outcome.resampled ? 1 : 0);
    auto next = apply_resampling(particles, outcome);
    if (next.positions.id() != particles.positions.id()) {
      if (outcome.surrogate.valid()) {
        terms = density.terms(next.positions);
      } else {
        // Plain index gathers commute with the row-wise density terms.
        auto gather = [&](ad::Var block) { return ad::gather_rows(block, outcome.indices); };
        terms = {next.positions, gather(terms.log_initial), gather(terms.score_initial), gather(terms.log_target),
                 gather(terms.score_target)};
      }
    }
    particles = next;
  }

  auto total = bound_terms.front();
  for (std::size_t k = 1; k < bound_terms.size(); ++k) {
    total = ad::add(total, bound_terms[k]);
  }
  out.elbo = total;
  return out;
}

std::size_t default_threads() {
  const auto hardware = std::max(1U, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DSMCS_THREADS"); env != nullptr) {
    char* end = nullptr;
    const auto value = std::strtoul(env, &end, 10);
    if (end != env && value > 0) {
      return std::min<std::size_t>(value, hardware);
    }
  }
  return hardware;
}

namespace {

struct ReplicateResult {
  double elbo{std::numeric_limits<double>::quiet_NaN()};
  std::vector<std::vector<double>> gradients;
  std::vector<double> ess;
  std::vector<std::uint8_t> resampled;
  std::string error;
  bool ok{false};
};

ReplicateResult run_replicate(const GaussianInitial& initial, const GaussianMixtureTarget& target,
                              const ChainSettings& settings, const ModelBuilder& builder, StreamKey key) {
  ReplicateResult result;
  try {
    ad::Tape tape;
    auto model = builder(tape);
    AnnealedDensity density{initial, target, model.path};
    StreamSource source{key};
    auto bound = run_chain(density, settings, model.params, source);
    result.elbo = bound.elbo.scalar();
    const auto grads = tape.backward(bound.elbo);
    result.gradients.reserve(model.leaves.size());
    bool finite = true;
    for (const auto& leaf : model.leaves) {
      auto g = grads.of(leaf);
      finite = finite && std::all_of(g.begin(), g.end(), [](double x) { return std::isfinite(x); });
      result.gradients.push_back(std::move(g));
    }
    result.ess = std::move(bound.ess);
    result.resampled = std::move(bound.resampled);
    result.ok = finite;
    if (!finite) {
      result.error = "non-finite gradient";
    }
  } catch (const NonFiniteError& e) {
    result.error = e.what();
  } catch (const ad::DomainError& e) {
    result.error = e.what();
  }
  return result;
}

}  // namespace

BatchEstimate elbo_batch(const GaussianInitial& initial, const GaussianMixtureTarget& target,
                         const ChainSettings& settings, const ModelBuilder& builder, StreamKey key, std::size_t batch,
                         std::size_t threads) {
  if (batch < 1) {
    throw std::invalid_argument{"elbo_batch: batch must be at least 1"};
  }
  std::vector<ReplicateResult> results(batch);
  const auto workers = std::clamp<std::size_t>(threads, 1, batch);
  if (workers == 1) {
    for (std::size_t r = 0; r < batch; ++r) {
      results[r] = run_replicate(initial, target, settings, builder, key.child(r));
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (auto r = next.fetch_add(1); r < batch && !failed.load(); r = next.fetch_add(1)) {
          try {
            results[r] = run_replicate(initial, target, settings, builder, key.child(r));
          } catch (...) {
            if (!failed.exchange(true)) {
              failure = std::current_exception();
            }
          }
        }
      });
    }
    for (auto& t : pool) {
      t.join();
    }
    if (failure) {
      std::rethrow_exception(failure);
    }
  }

  BatchEstimate out;
  out.elbo_values.reserve(batch);
  std::size_t succeeded = 0;
  double elbo_sum = 0.0;
  for (auto& result : results) {
    out.elbo_values.push_back(result.elbo);
    if (!result.ok) {
      if (out.failures++ == 0) {
        out.first_error = result.error;
      }
      continue;
    }
    ++succeeded;
    elbo_sum += result.elbo;
    if (out.gradients.empty()) {
      out.gradients = result.gradients;
      out.ess = result.ess;
      out.resample_rate.assign(result.resampled.begin(), result.resampled.end());
      continue;
    }
    for (std::size_t l = 0; l < out.gradients.size(); ++l) {
      for (std::size_t j = 0; j < out.gradients[l].size(); ++j) {
        out.gradients[l][j] += result.gradients[l][j];
      }
    }
    for (std::size_t k = 0; k < out.ess.size(); ++k) {
      out.ess[k] += result.ess[k];
      out.resample_rate[k] += result.resampled[k];
    }
  }
  if (succeeded == 0) {
    out.elbo_mean = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const double scale = 1.0 / static_cast<double>(succeeded);
  out.elbo_mean = elbo_sum * scale;
  for (auto& g : out.gradients) {
    for (auto& x : g) {
      x *= scale;
    }
  }
  for (std::size_t k = 0; k < out.ess.size(); ++k) {
    out.ess[k] *= scale;
    out.resample_rate[k] *= scale;
  }
  return out;
}

}  // namespace dsmcs
