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

#ifndef DSMCS_CONFIG_HPP
#define DSMCS_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsmcs/resampling.hpp"
#include "dsmcs/sampler.hpp"
#include "dsmcs/targets.hpp"

namespace dsmcs {

/// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TargetConfig {
  std::string type{"gaussian_mixture"};
  std::size_t dim{50};
  std::size_t components{8};
  std::uint64_t mean_seed{0};
  double component_variance{1.0};
  double init_mean{0.0};
  double init_variance{9.0};

  [[nodiscard]] GaussianMixtureTarget make_target() const;
  [[nodiscard]] GaussianInitial make_initial() const;
};

struct RunConfig {
  KernelKind kernel{KernelKind::kLangevin};
  ResamplingScheme resampling{ResamplingScheme::kNone};
  double tau{0.1};
  double gap{1.0};
  std::size_t steps{8};       ///< K
  std::size_t particles{64};  ///< N
  double delta_hat{1.0};
  double rho_init{0.9};
  double mass_scale_init{1.0};
  std::size_t hidden_width{32};
  std::size_t hidden_layers{2};
  TargetConfig target;
  double learning_rate{1e-2};
  std::size_t epochs{500};
  std::size_t iterations{10};
  std::size_t batch{64};
  std::uint64_t seed{0};
  std::size_t max_nonfinite{10};

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
  [[nodiscard]] ChainSettings chain_settings() const;
};

/// Strict parsing: unknown keys and wrongly typed values raise ConfigError. Missing keys keep
/// their defaults. The result is validated.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
/// Every field, defaults included, so that parse_run_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& config);

/// A Cartesian grid over run settings. Each axis left empty keeps the base value.
struct GridConfig {
  RunConfig base;
  std::vector<std::string> kernels;
  std::vector<std::string> resampling;
  std::vector<double> taus;
  std::vector<std::size_t> steps;
  std::vector<std::size_t> particles;
  std::vector<double> delta_hats;
  std::vector<double> learning_rates;  ///< searched with the first seed; empty keeps base
  std::vector<std::uint64_t> seeds{0};
  std::string out{"grid_out"};
};

GridConfig parse_grid_config(const nlohmann::json& j);
GridConfig load_grid_config(const std::string& path);

}  // namespace dsmcs

#endif
