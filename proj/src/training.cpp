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

#include "dsmcs/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "dsmcs/io.hpp"
#include "json.hpp"

namespace dsmcs {

using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kTrainStream = 2;

double logit(double p) { return std::log(p) - std::log1p(-p); }

StepSizeNetwork network_of(const RunConfig& config) {
  return {config.hidden_width, config.hidden_layers, config.delta_hat};
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double number_from(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

}  // namespace

// --- ParameterSet ----------------------------------------------------------------------------

void ParameterSet::add(Parameter p) {
  if (contains(p.name)) {
    throw std::invalid_argument{"duplicate parameter '" + p.name + "'"};
  }
  if (p.values.size() != p.shape.size()) {
    throw std::invalid_argument{"parameter '" + p.name + "' has the wrong number of values"};
  }
  params_.push_back(std::move(p));
}

const Parameter& ParameterSet::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) {
      return p;
    }
  }
  throw std::out_of_range{"no parameter named '" + name + "'"};
}

Parameter& ParameterSet::get(const std::string& name) {
  return const_cast<Parameter&>(static_cast<const ParameterSet&>(*this).get(name));
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) {
    total += p.values.size();
  }
  return total;
}

std::vector<double> ParameterSet::flatten() const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (const auto& p : params_) {
    out.insert(out.end(), p.values.begin(), p.values.end());
  }
  return out;
}

void ParameterSet::assign(std::span<const double> flat) {
  if (flat.size() != scalar_count()) {
    throw std::invalid_argument{"ParameterSet::assign: size mismatch"};
  }
  std::size_t offset = 0;
  for (auto& p : params_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), p.values.size(), p.values.begin());
    offset += p.values.size();
  }
}

// --- step-size network -----------------------------------------------------------------------

void StepSizeNetwork::initialize(ParameterSet& params, CounterEngine& engine) const {
  std::size_t fan_in = 1;
  for (std::size_t layer = 1; layer <= hidden_layers + 1; ++layer) {
    const bool output = layer == hidden_layers + 1;
    const std::size_t fan_out = output ? 1 : hidden_width;
    std::vector<double> weights(fan_in * fan_out, 0.0);
    if (!output) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (auto& w : weights) {
        w = limit * (2.0 * engine.uniform() - 1.0);
      }
    }
    const auto suffix = std::to_string(layer);
    params.add({"W" + suffix, "net", {fan_in, fan_out}, std::move(weights)});
    params.add({"b" + suffix, "net", {1, fan_out}, std::vector<double>(fan_out, 0.0)});
    fan_in = fan_out;
  }
}

std::vector<ad::Var> StepSizeNetwork::step_sizes(const std::vector<ad::Var>& layers, std::size_t steps) const {
  if (layers.size() != 2 * (hidden_layers + 1) || steps < 1) {
    throw std::invalid_argument{"StepSizeNetwork: layer count mismatch"};
  }
  auto& tape = layers.front().tape();
  std::vector<double> encoding(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    encoding[k] = static_cast<double>(k + 1) / static_cast<double>(steps);
  }
  auto h = tape.constant({steps, 1}, std::move(encoding));
  for (std::size_t layer = 0; layer < hidden_layers; ++layer) {
    h = ad::tanh(ad::affine(h, layers[2 * layer], layers[2 * layer + 1]));
  }
  auto out = ad::affine(h, layers[2 * hidden_layers], layers[2 * hidden_layers + 1]);
  auto deltas = ad::mul(delta_hat, ad::sigmoid(out));
  std::vector<ad::Var> result;
  result.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    result.push_back(ad::element(deltas, k));
  }
  return result;
}

// --- model -----------------------------------------------------------------------------------

ParameterSet init_parameters(const RunConfig& config) {
  ParameterSet params;
  CounterEngine engine{StreamKey{config.seed}.child(kInitStream)};
  network_of(config).initialize(params, engine);
  params.add({"schedule", "schedule", {config.steps, 1}, std::vector<double>(config.steps, 0.0)});
  if (config.kernel == KernelKind::kHamiltonian) {
    params.add({"rho", "rho", {1, 1}, {logit(config.rho_init)}});
    params.add({"mass_scale", "mass", {1, 1}, {std::log(config.mass_scale_init)}});
  }
  return params;
}

ReplicateModel build_model(ad::Tape& tape, const ParameterSet& params, const RunConfig& config) {
  ReplicateModel model;
  std::vector<ad::Var> layers;
  ad::Var schedule;
  ad::Var rho_raw;
  ad::Var mass_raw;
  for (const auto& p : params.all()) {
    auto leaf = tape.variable(p.shape, p.values);
    model.leaves.push_back(leaf);
    if (p.group == "net") {
      layers.push_back(leaf);
    } else if (p.group == "schedule") {
      schedule = leaf;
    } else if (p.group == "rho") {
      rho_raw = leaf;
    } else if (p.group == "mass") {
      mass_raw = leaf;
    }
  }
  model.params.step_sizes = network_of(config).step_sizes(layers, config.steps);
  model.path = AnnealPath::build(schedule);
  if (config.kernel == KernelKind::kHamiltonian) {
    model.params.rho = ad::sigmoid(rho_raw);
    model.params.mass_scale = ad::exp(mass_raw);
  }
  return model;
}

ModelBuilder model_builder(const ParameterSet& params, const RunConfig& config) {
  return [&params, &config](ad::Tape& tape) { return build_model(tape, params, config); };
}

KernelSummary summarize(const ParameterSet& params, const RunConfig& config) {
  ad::Tape tape;
  auto model = build_model(tape, params, config);
  KernelSummary out;
  for (const auto& d : model.params.step_sizes) {
    out.step_sizes.push_back(d.scalar());
  }
  out.betas = model.path.values();
  if (model.params.rho.valid()) {
    out.rho = model.params.rho.scalar();
    out.mass_scale = model.params.mass_scale.scalar();
  }
  return out;
}

// --- optimiser -------------------------------------------------------------------------------

AdamState AdamState::zeros_like(const ParameterSet& params) {
  AdamState state;
  for (const auto& p : params.all()) {
    state.m.emplace_back(p.values.size(), 0.0);
    state.v.emplace_back(p.values.size(), 0.0);
  }
  return state;
}

bool adam_update(ParameterSet& params, AdamState& state, const std::vector<std::vector<double>>& grads,
                 double learning_rate, const AdamSettings& settings) {
  auto& all = params.all();
  if (grads.size() != all.size() || state.m.size() != all.size() || state.v.size() != all.size()) {
    throw std::invalid_argument{"adam_update: gradient and parameter lists differ"};
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (grads[i].size() != all[i].values.size()) {
      throw std::invalid_argument{"adam_update: gradient shape mismatch for '" + all[i].name + "'"};
    }
    if (!std::all_of(grads[i].begin(), grads[i].end(), [](double g) { return std::isfinite(g); })) {
      return false;
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(settings.beta1, t);
  const double correction2 = 1.0 - std::pow(settings.beta2, t);
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& values = all[i].values;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grads[i][j];
      m[j] = settings.beta1 * m[j] + (1.0 - settings.beta1) * g;
      v[j] = settings.beta2 * v[j] + (1.0 - settings.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      values[j] += learning_rate * m_hat / (std::sqrt(v_hat) + settings.eps);
    }
  }
  return true;
}

double lr_schedule(std::size_t epoch) {
  const auto decays = std::min<std::size_t>(epoch, 200) / 25;
  return std::pow(0.75, static_cast<double>(decays));
}

// --- training loop ---------------------------------------------------------------------------

TrainState init_train_state(const RunConfig& config) {
  TrainState state;
  state.params = init_parameters(config);
  state.adam = AdamState::zeros_like(state.params);
  return state;
}

StreamKey iteration_key(std::uint64_t seed, std::size_t epoch, std::size_t iteration) {
  return StreamKey{seed}.child({kTrainStream, epoch, iteration});
}

void train(const RunConfig& config, TrainState& state, const EpochCallback& on_epoch, std::size_t threads) {
  config.validate();
  const auto target = config.target.make_target();
  const auto initial = config.target.make_initial();
  const auto settings = config.chain_settings();
  const auto steps = config.steps;
  const auto nan = std::numeric_limits<double>::quiet_NaN();

  while (state.epoch < config.epochs && !state.diverged) {
    const auto epoch = state.epoch;
    const auto start = std::chrono::steady_clock::now();
    const double lr = config.learning_rate * lr_schedule(epoch);
    EpochRecord record;
    record.epoch = epoch + 1;
    record.ess.assign(steps, 0.0);
    record.resample_rate.assign(steps, 0.0);
    std::vector<double> elbos;
    std::size_t finite_iterations = 0;

    for (std::size_t it = 0; it < config.iterations; ++it) {
      const auto builder = model_builder(state.params, config);
      auto batch = elbo_batch(initial, target, settings, builder, iteration_key(config.seed, epoch, it), config.batch,
                              threads);
      if (!batch.finite() || !adam_update(state.params, state.adam, batch.gradients, lr)) {
        ++record.skipped;
        ++state.skipped_total;
        if (++state.consecutive_nonfinite > config.max_nonfinite) {
          state.diverged = true;
          break;
        }
        continue;
      }
      state.consecutive_nonfinite = 0;
      ++finite_iterations;
      elbos.insert(elbos.end(), batch.elbo_values.begin(), batch.elbo_values.end());
      for (std::size_t k = 0; k < steps; ++k) {
        record.ess[k] += batch.ess[k];
        record.resample_rate[k] += batch.resample_rate[k];
      }
    }

    if (finite_iterations == 0) {
      record.elbo_mean = nan;
      record.elbo_std = nan;
      record.ess.assign(steps, nan);
      record.resample_rate.assign(steps, nan);
    } else {
      double total = 0.0;
      for (double e : elbos) {
        total += e;
      }
      record.elbo_mean = total / static_cast<double>(elbos.size());
      double sq = 0.0;
      for (double e : elbos) {
        sq += (e - record.elbo_mean) * (e - record.elbo_mean);
      }
      record.elbo_std = elbos.size() > 1 ? std::sqrt(sq / static_cast<double>(elbos.size() - 1)) : 0.0;
      for (std::size_t k = 0; k < steps; ++k) {
        record.ess[k] /= static_cast<double>(finite_iterations);
        record.resample_rate[k] /= static_cast<double>(finite_iterations);
      }
    }
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    state.history.push_back(record);
    state.epoch = epoch + 1;
    if (on_epoch) {
      on_epoch(state.history.back(), state);
    }
  }
}

// --- checkpoints -----------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const TrainState& state) {
  json params = json::array();
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    const auto& p = state.params.all()[i];
    params.push_back({{"name", p.name},
                      {"group", p.group},
                      {"rows", p.shape.rows},
                      {"cols", p.shape.cols},
                      {"values", p.values},
                      {"adam_m", state.adam.m.at(i)},
                      {"adam_v", state.adam.v.at(i)}});
  }
  json history = json::array();
  for (const auto& r : state.history) {
    json ess = json::array();
    json rate = json::array();
    for (std::size_t k = 0; k < r.ess.size(); ++k) {
      ess.push_back(number_or_null(r.ess[k]));
      rate.push_back(number_or_null(r.resample_rate[k]));
    }
    history.push_back({{"epoch", r.epoch},
                       {"elbo_mean", number_or_null(r.elbo_mean)},
                       {"elbo_std", number_or_null(r.elbo_std)},
                       {"ess", ess},
                       {"resample_rate", rate},
                       {"skipped", r.skipped},
                       {"seconds", r.seconds}});
  }
  const json j{{"parameters", params},
               {"adam_t", state.adam.t},
               {"epoch", state.epoch},
               {"consecutive_nonfinite", state.consecutive_nonfinite},
               {"skipped_total", state.skipped_total},
               {"diverged", state.diverged},
               {"history", history}};
  write_file_atomic(path, j.dump(1) + "\n");
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in{path};
  if (!in) {
    throw std::runtime_error{"cannot open checkpoint '" + path + "'"};
  }
  const auto j = json::parse(in);
  TrainState state;
  for (const auto& p : j.at("parameters")) {
    state.params.add({p.at("name").get<std::string>(),
                      p.at("group").get<std::string>(),
                      {p.at("rows").get<std::size_t>(), p.at("cols").get<std::size_t>()},
                      p.at("values").get<std::vector<double>>()});
    state.adam.m.push_back(p.at("adam_m").get<std::vector<double>>());
    state.adam.v.push_back(p.at("adam_v").get<std::vector<double>>());
  }
  state.adam.t = j.at("adam_t").get<std::uint64_t>();
  state.epoch = j.at("epoch").get<std::size_t>();
  state.consecutive_nonfinite = j.at("consecutive_nonfinite").get<std::size_t>();
  state.skipped_total = j.at("skipped_total").get<std::size_t>();
  state.diverged = j.at("diverged").get<bool>();
  for (const auto& r : j.at("history")) {
    EpochRecord record;
    record.epoch = r.at("epoch").get<std::size_t>();
    record.elbo_mean = number_from(r.at("elbo_mean"));
    record.elbo_std = number_from(r.at("elbo_std"));
    for (const auto& x : r.at("ess")) {
      record.ess.push_back(number_from(x));
    }
    for (const auto& x : r.at("resample_rate")) {
      record.resample_rate.push_back(number_from(x));
    }
    record.skipped = r.at("skipped").get<std::size_t>();
    record.seconds = r.at("seconds").get<double>();
    state.history.push_back(std::move(record));
  }
  return state;
}

}  // namespace dsmcs
