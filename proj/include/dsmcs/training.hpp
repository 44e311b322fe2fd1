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

#ifndef DSMCS_TRAINING_HPP
#define DSMCS_TRAINING_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsmcs/autodiff.hpp"
#include "dsmcs/config.hpp"
#include "dsmcs/random.hpp"
#include "dsmcs/sampler.hpp"

namespace dsmcs {

/// One named, trainable tensor in unconstrained coordinates.
struct Parameter {
  std::string name;
  std::string group;  ///< "net", "schedule", "rho" or "mass"
  ad::Shape shape;
  std::vector<double> values;
};

class ParameterSet {
 public:
  void add(Parameter p);
  [[nodiscard]] const Parameter& get(const std::string& name) const;
  [[nodiscard]] Parameter& get(const std::string& name);
  [[nodiscard]] bool contains(const std::string& name) const;
  [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }
  [[nodiscard]] std::size_t scalar_count() const;
  [[nodiscard]] const std::vector<Parameter>& all() const noexcept { return params_; }
  [[nodiscard]] std::vector<Parameter>& all() noexcept { return params_; }

  /// Every value in parameter order, and the inverse.
  [[nodiscard]] std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

 private:
  std::vector<Parameter> params_;
};

/// Fully connected network mapping the step encoding k / K to a scalar, with tanh hidden layers.
/// Parameters are named W1, b1, ..., W{L+1}, b{L+1}.
struct StepSizeNetwork {
  std::size_t hidden_width{32};
  std::size_t hidden_layers{2};
  double delta_hat{1.0};

  /// Adds Glorot-uniform weights and zero biases drawn from `engine`; the output layer is zero so
  /// every step size starts at delta_hat / 2.
  void initialize(ParameterSet& params, CounterEngine& engine) const;

  /// delta_k = delta_hat * sigmoid(NN(k / K)) for k = 1..K, as K scalars on the tape.
  [[nodiscard]] std::vector<ad::Var> step_sizes(const std::vector<ad::Var>& layers, std::size_t steps) const;
};

/// Initial parameters of a run: network, schedule raws (zero, hence uniform beta spacing) and,
/// for the Hamiltonian kernel, logit(rho) and log(c).
ParameterSet init_parameters(const RunConfig& config);

/// Puts the parameters on a tape as leaves and derives the kernel parameters and the annealing
/// path. Leaves come in parameter order.
ReplicateModel build_model(ad::Tape& tape, const ParameterSet& params, const RunConfig& config);

/// The model builder for elbo_batch.
ModelBuilder model_builder(const ParameterSet& params, const RunConfig& config);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t{0};

  static AdamState zeros_like(const ParameterSet& params);
};

struct AdamSettings {
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
};

/// One bias-corrected Adam ascent step (the bound is maximised). Returns false and leaves both
/// parameters and state untouched if any gradient entry is non-finite.
bool adam_update(ParameterSet& params, AdamState& state, const std::vector<std::vector<double>>& grads,
                 double learning_rate, const AdamSettings& settings = {});

/// Learning-rate multiplier 0.75^floor(min(epoch, 200) / 25).
double lr_schedule(std::size_t epoch);

struct EpochRecord {
  std::size_t epoch{0};
  double elbo_mean{0.0};
  double elbo_std{0.0};
  std::vector<double> ess;
  std::vector<double> resample_rate;
  std::size_t skipped{0};  ///< iterations whose update was skipped
  double seconds{0.0};
};

struct TrainState {
  ParameterSet params;
  AdamState adam;
  std::size_t epoch{0};  ///< epochs completed
  std::size_t consecutive_nonfinite{0};
  std::size_t skipped_total{0};
  bool diverged{false};
  std::vector<EpochRecord> history;
};

TrainState init_train_state(const RunConfig& config);

using EpochCallback = std::function<void(const EpochRecord&, const TrainState&)>;

/// Continues training from `state` up to config.epochs. Each iteration averages the bound over a
/// batch, backpropagates and takes an Adam step. More than config.max_nonfinite consecutive
/// iterations without a finite batch mark the run as diverged and stop it.
void train(const RunConfig& config, TrainState& state, const EpochCallback& on_epoch = {},
           std::size_t threads = 1);

/// Stream key of iteration `iteration` of epoch `epoch`.
StreamKey iteration_key(std::uint64_t seed, std::size_t epoch, std::size_t iteration);

/// JSON checkpoints: parameters, Adam moments, counters and the epoch history.
void save_checkpoint(const std::string& path, const TrainState& state);
TrainState load_checkpoint(const std::string& path);

/// Current constrained kernel parameters, for reporting.
struct KernelSummary {
  std::vector<double> step_sizes;
  std::vector<double> betas;
  double rho{0.0};
  double mass_scale{0.0};
};
KernelSummary summarize(const ParameterSet& params, const RunConfig& config);

}  // namespace dsmcs

#endif
