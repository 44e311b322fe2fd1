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

#include "dsmcs/verify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dsmcs {

using nlohmann::json;

namespace {

RunConfig small_config(KernelKind kernel, ResamplingScheme scheme, std::size_t steps, std::size_t particles,
                       std::size_t dim, std::size_t components, std::uint64_t seed) {
  RunConfig c;
  c.kernel = kernel;
  c.resampling = scheme;
  c.steps = steps;
  c.particles = particles;
  c.target.dim = dim;
  c.target.components = components;
  c.target.mean_seed = seed;
  c.seed = seed;
  c.validate();
  return c;
}

/// Moves every parameter away from its initial value, so that no gradient is zero by symmetry.
void randomize(ParameterSet& params, std::uint64_t seed) {
  CounterEngine engine{StreamKey{seed}.child(7)};
  for (auto& p : params.all()) {
    const double scale = p.group == "net" ? 0.3 : 0.5;
    for (auto& v : p.values) {
      v += scale * engine.normal();
    }
  }
}

double evaluate(const RunConfig& config, const GaussianInitial& initial, const GaussianMixtureTarget& target,
                const ParameterSet& params, RandomSource& rng) {
  ad::Tape tape;
  auto model = build_model(tape, params, config);
  AnnealedDensity density{initial, target, model.path};
  return run_chain(density, config.chain_settings(), model.params, rng).elbo.scalar();
}

/// All particles start at one point and every kernel normal is zero; discrete draws stay live.
class IdenticalParticlesSource final : public RandomSource {
 public:
  IdenticalParticlesSource(StreamKey key, std::size_t dim, double perturbation)
      : live_{key}, dim_{dim}, perturbation_{perturbation} {}

  void begin_step(std::size_t step) override {
    step_ = step;
    live_.begin_step(step);
  }

  std::vector<double> normals(std::size_t count) override {
    if (step_ != 0) {
      return std::vector<double>(count, 0.0);
    }
    const auto row = live_.normals(dim_);
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      out[i] = row[i % dim_];
    }
    if (!perturbed_) {
      out[0] += perturbation_;
      perturbed_ = true;
    }
    return out;
  }

  std::vector<std::size_t> categorical(std::span<const double> probs, std::size_t count) override {
    return live_.categorical(probs, count);
  }
  bool bernoulli(double p) override { return live_.bernoulli(p); }

 private:
  StreamSource live_;
  std::size_t dim_;
  double perturbation_;
  std::size_t step_{0};
  bool perturbed_{false};
};

}  // namespace

// --- gradient audit --------------------------------------------------------------------------

std::vector<std::string> AuditReport::failing_groups() const {
  std::vector<std::string> out;
  for (const auto& g : groups) {
    if (!g.passed) {
      out.push_back(g.group);
    }
  }
  return out;
}

AuditReport gradient_audit(const AuditConfig& audit, const GradientTamper& tamper) {
  if (audit.scheme == ResamplingScheme::kGst || audit.scheme == ResamplingScheme::kBernGst) {
    throw std::invalid_argument{"gradient_audit: straight-through schemes have no finite-difference counterpart"};
  }
  const auto config = small_config(audit.kernel, audit.scheme, audit.steps, audit.particles, audit.dim,
                                   audit.components, audit.seed);
  const auto target = config.target.make_target();
  const auto initial = config.target.make_initial();
  auto params = init_parameters(config);
  randomize(params, audit.seed);

  AuditReport report;
  report.config = audit;
  std::vector<std::vector<double>> tape_grads;
  DrawLog log;
  {
    ad::Tape tape;
    auto model = build_model(tape, params, config);
    AnnealedDensity density{initial, target, model.path};
    StreamSource live{StreamKey{audit.seed}.child(8)};
    RecordingSource recorder{live};
    auto bound = run_chain(density, config.chain_settings(), model.params, recorder);
    report.elbo = bound.elbo.scalar();
    const auto grads = tape.backward(bound.elbo);
    for (const auto& leaf : model.leaves) {
      tape_grads.push_back(grads.of(leaf));
    }
    log = recorder.log();
  }
  if (tamper) {
    tamper(tape_grads, params);
  }

  auto replayed = [&](const ParameterSet& p) {
    ReplaySource replay{log};
    return evaluate(config, initial, target, p, replay);
  };

  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.all()[i].name;
    const auto& group_name = params.all()[i].group;
    auto group = std::find_if(report.groups.begin(), report.groups.end(),
                              [&](const GroupAudit& g) { return g.group == group_name; });
    if (group == report.groups.end()) {
      GroupAudit fresh;
      fresh.group = group_name;
      report.groups.push_back(fresh);
      group = report.groups.end() - 1;
    }
    for (std::size_t j = 0; j < params.all()[i].values.size(); ++j) {
      auto shifted = params;
      const double x = params.all()[i].values[j];
      shifted.all()[i].values[j] = x + audit.eps;
      const double up = replayed(shifted);
      shifted.all()[i].values[j] = x - audit.eps;
      const double down = replayed(shifted);
      const double fd = (up - down) / (2.0 * audit.eps);
      const double ad = tape_grads[i][j];
      const double abs_error = std::abs(fd - ad);
      const double rel_error = abs_error / std::max({std::abs(fd), std::abs(ad), audit.floor});
      ++group->count;
      group->max_abs_error = std::max(group->max_abs_error, abs_error);
      if (rel_error > group->max_rel_error || !std::isfinite(rel_error)) {
        group->max_rel_error = rel_error;
        group->worst = name + "[" + std::to_string(j) + "]";
      }
    }
  }
  for (auto& g : report.groups) {
    g.passed = g.max_rel_error <= audit.tolerance;
    report.passed = report.passed && g.passed;
    report.max_rel_error = std::max(report.max_rel_error, g.max_rel_error);
  }
  return report;
}

// --- vanishing resampling gradient -----------------------------------------------------------

Theorem1Report theorem1_check(const Theorem1Config& check) {
  auto config = small_config(check.kernel, check.scheme, check.steps, check.particles, check.dim, check.components,
                             check.seed);
  config.tau = check.tau;
  config.gap = check.gap;
  const auto target = config.target.make_target();
  const auto initial = config.target.make_initial();
  auto params = init_parameters(config);
  randomize(params, check.seed);

  Theorem1Report report;
  report.config = check;
  ad::Tape tape;
  auto model = build_model(tape, params, config);
  AnnealedDensity density{initial, target, model.path};
  const StreamKey key{StreamKey{check.seed}.child(9)};
  IdenticalParticlesSource identical{key, check.dim, check.perturbation};
  StreamSource diverse{key};
  RandomSource& rng = check.identical ? static_cast<RandomSource&>(identical) : diverse;
  auto bound = run_chain(density, config.chain_settings(), model.params, rng);
  report.elbo = bound.elbo.scalar();
  report.ess = bound.ess;
  for (auto r : bound.resampled) {
    report.resampling_events += r;
  }
  const auto grads = tape.backward(bound.elbo);
  for (const auto& logits : bound.resampling_logits) {
    double step_max = 0.0;
    for (double g : grads.of(logits)) {
      step_max = std::max(step_max, std::abs(g));
    }
    report.resampling_gradient_per_step.push_back(step_max);
    report.max_abs_resampling_gradient = std::max(report.max_abs_resampling_gradient, step_max);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& group = params.all()[i].group;
    double sq = 0.0;
    for (double g : grads.of(model.leaves[i])) {
      sq += g * g;
    }
    auto it = std::find_if(report.kernel_gradient_norms.begin(), report.kernel_gradient_norms.end(),
                           [&](const auto& entry) { return entry.first == group; });
    if (it == report.kernel_gradient_norms.end()) {
      report.kernel_gradient_norms.emplace_back(group, sq);
    } else {
      it->second += sq;
    }
  }
  bool kernel_nonzero = true;
  for (auto& [group, norm] : report.kernel_gradient_norms) {
    norm = std::sqrt(norm);
    kernel_nonzero = kernel_nonzero && norm > 0.0 && std::isfinite(norm);
  }
  const bool needs_event = !is_gated(check.scheme) && check.scheme != ResamplingScheme::kNone;
  report.passed = report.max_abs_resampling_gradient <= check.tolerance && kernel_nonzero &&
                  (!needs_event || report.resampling_events > 0);
  return report;
}

// --- unbiasedness ----------------------------------------------------------------------------

UnbiasednessReport unbiasedness_check(const UnbiasednessConfig& check) {
  if (check.replicates < 2) {
    throw std::invalid_argument{"unbiasedness_check: need at least two replicates"};
  }
  const GaussianMixtureTarget target{1, {0.0}, 1.0};
  const GaussianInitial initial{{0.0}, check.init_variance};
  ChainSettings settings;
  settings.kernel = check.kernel;
  settings.scheme = check.scheme;
  settings.particles = check.particles;
  const StreamKey key{StreamKey{check.seed}.child(10)};

  // Welford accumulators for exp(bound) and the bound.
  double z_mean = 0.0;
  double z_m2 = 0.0;
  double l_mean = 0.0;
  double l_m2 = 0.0;
  for (std::size_t r = 0; r < check.replicates; ++r) {
    ad::Tape tape;
    ChainParameters params;
    for (std::size_t k = 0; k < check.steps; ++k) {
      params.step_sizes.push_back(tape.constant(check.step_size));
    }
    if (check.kernel == KernelKind::kHamiltonian) {
      params.rho = tape.constant(0.5);
      params.mass_scale = tape.constant(1.0);
    }
    AnnealedDensity density{initial, target, AnnealPath::build(tape.filled({check.steps, 1}, 0.0))};
    StreamSource rng{key.child(r)};
    const double bound = run_chain(density, settings, params, rng).elbo.scalar();
    const double z = std::exp(bound);
    const double n = static_cast<double>(r + 1);
    const double dz = z - z_mean;
    z_mean += dz / n;
    z_m2 += dz * (z - z_mean);
    const double dl = bound - l_mean;
    l_mean += dl / n;
    l_m2 += dl * (bound - l_mean);
  }
  const double count = static_cast<double>(check.replicates);
  UnbiasednessReport report;
  report.config = check;
  report.z_mean = z_mean;
  report.z_se = std::sqrt(z_m2 / (count - 1.0) / count);
  report.z_score = (z_mean - 1.0) / report.z_se;
  report.elbo_mean = l_mean;
  report.elbo_se = std::sqrt(l_m2 / (count - 1.0) / count);
  report.jensen = report.elbo_mean <= 3.0 * report.elbo_se;
  report.passed = std::abs(report.z_score) < check.z_threshold;
  return report;
}

// --- reports ---------------------------------------------------------------------------------

json to_json(const AuditReport& r) {
  json groups = json::array();
  for (const auto& g : r.groups) {
    groups.push_back({{"group", g.group},
                      {"count", g.count},
                      {"max_rel_error", g.max_rel_error},
                      {"max_abs_error", g.max_abs_error},
                      {"worst", g.worst},
                      {"passed", g.passed}});
  }
  return json{{"check", "gradient_audit"},
              {"kernel", std::string{to_string(r.config.kernel)}},
              {"resampling", std::string{to_string(r.config.scheme)}},
              {"K", r.config.steps},
              {"N", r.config.particles},
              {"dim", r.config.dim},
              {"eps", r.config.eps},
              {"tolerance", r.config.tolerance},
              {"elbo", r.elbo},
              {"max_rel_error", r.max_rel_error},
              {"groups", groups},
              {"failing_groups", r.failing_groups()},
              {"passed", r.passed}};
}

json to_json(const Theorem1Report& r) {
  json norms = json::object();
  for (const auto& [group, norm] : r.kernel_gradient_norms) {
    norms[group] = norm;
  }
  return json{{"check", "theorem1"},
              {"kernel", std::string{to_string(r.config.kernel)}},
              {"resampling", std::string{to_string(r.config.scheme)}},
              {"K", r.config.steps},
              {"N", r.config.particles},
              {"identical", r.config.identical},
              {"perturbation", r.config.perturbation},
              {"tolerance", r.config.tolerance},
              {"elbo", r.elbo},
              {"max_abs_resampling_gradient", r.max_abs_resampling_gradient},
              {"resampling_gradient_per_step", r.resampling_gradient_per_step},
              {"resampling_events", r.resampling_events},
              {"kernel_gradient_norms", norms},
              {"ess", r.ess},
              {"passed", r.passed}};
}

json to_json(const UnbiasednessReport& r) {
  return json{{"check", "unbiasedness"},
              {"kernel", std::string{to_string(r.config.kernel)}},
              {"resampling", std::string{to_string(r.config.scheme)}},
              {"K", r.config.steps},
              {"N", r.config.particles},
              {"replicates", r.config.replicates},
              {"z_mean", r.z_mean},
              {"z_se", r.z_se},
              {"z_score", r.z_score},
              {"elbo_mean", r.elbo_mean},
              {"elbo_se", r.elbo_se},
              {"jensen", r.jensen},
              {"passed", r.passed}};
}

json run_verify_suite(const std::string& suite, std::uint64_t seed, std::size_t replicates) {
  if (suite != "all" && suite != "grad" && suite != "theorem" && suite != "unbiased") {
    throw std::invalid_argument{"unknown verify suite '" + suite + "'"};
  }
  const std::vector<KernelKind> kernels{KernelKind::kLangevin, KernelKind::kHamiltonian};
  json out{{"suite", suite}, {"seed", seed}};
  bool passed = true;

  if (suite == "all" || suite == "grad") {
    json reports = json::array();
    for (auto kernel : kernels) {
      for (auto scheme : {ResamplingScheme::kNone, ResamplingScheme::kCat, ResamplingScheme::kBernCat}) {
        AuditConfig c;
        c.kernel = kernel;
        c.scheme = scheme;
        c.seed = seed;
        const auto r = gradient_audit(c);
        passed = passed && r.passed;
        reports.push_back(to_json(r));
      }
    }
    out["grad"] = reports;
  }

  if (suite == "all" || suite == "theorem") {
    json reports = json::array();
    for (auto kernel : kernels) {
      for (auto scheme : {ResamplingScheme::kGst, ResamplingScheme::kBernGst}) {
        Theorem1Config c;
        c.kernel = kernel;
        c.scheme = scheme;
        c.seed = seed;
        const auto r = theorem1_check(c);
        passed = passed && r.passed;
        reports.push_back(to_json(r));
      }
      for (auto scheme : {ResamplingScheme::kCat, ResamplingScheme::kBernCat}) {
        Theorem1Config c;
        c.kernel = kernel;
        c.scheme = scheme;
        c.seed = seed;
        c.identical = false;
        const auto r = theorem1_check(c);
        passed = passed && r.passed;
        reports.push_back(to_json(r));
      }
    }
    Theorem1Config probe;
    probe.seed = seed;
    probe.perturbation = 1e-3;
    auto probe_json = to_json(theorem1_check(probe));
    probe_json["asserted"] = false;
    out["theorem_probe"] = probe_json;
    out["theorem"] = reports;
  }

  if (suite == "all" || suite == "unbiased") {
    json reports = json::array();
    for (auto scheme : {ResamplingScheme::kNone, ResamplingScheme::kCat, ResamplingScheme::kBernCat}) {
      UnbiasednessConfig c;
      c.scheme = scheme;
      c.seed = seed;
      c.replicates = replicates;
      const auto r = unbiasedness_check(c);
      passed = passed && r.passed && r.jensen;
      reports.push_back(to_json(r));
    }
    out["unbiased"] = reports;
  }

  out["passed"] = passed;
  return out;
}

}  // namespace dsmcs
