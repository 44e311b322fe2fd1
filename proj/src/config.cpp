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

#include "dsmcs/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace dsmcs {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) {
    throw ConfigError{where + " must be a JSON object"};
  }
  for (const auto& item : j.items()) {
    if (known.count(item.key()) == 0) {
      throw ConfigError{"unknown field '" + item.key() + "' in " + where};
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& into) {
  const auto it = j.find(key);
  if (it == j.end()) {
    return;
  }
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) {
        throw ConfigError{std::string{"field '"} + key + "' must be a number"};
      }
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_unsigned() && !(it->is_number_integer() && it->template get<std::int64_t>() >= 0)) {
        throw ConfigError{std::string{"field '"} + key + "' must be a non-negative integer"};
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) {
        throw ConfigError{std::string{"field '"} + key + "' must be a string"};
      }
    }
    into = it->template get<T>();
  } catch (const json::exception& e) {
    throw ConfigError{std::string{"field '"} + key + "': " + e.what()};
  }
}

template <class T>
void read_list(const json& j, const char* key, std::vector<T>& into) {
  const auto it = j.find(key);
  if (it == j.end()) {
    return;
  }
  if (!it->is_array()) {
    throw ConfigError{std::string{"field '"} + key + "' must be an array"};
  }
  into.clear();
  for (std::size_t i = 0; i < it->size(); ++i) {
    json wrapper = json::object();
    wrapper[key] = (*it)[i];
    T value{};
    read(wrapper, key, value);
    into.push_back(value);
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in{path};
  if (!in) {
    throw ConfigError{"cannot open config file '" + path + "'"};
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError{"malformed JSON in '" + path + "': " + e.what()};
  }
}

TargetConfig parse_target(const json& j) {
  reject_unknown(j,
                 {"type", "dim", "components", "mean_seed", "component_variance", "init_mean", "init_variance"},
                 "target");
  TargetConfig t;
  read(j, "type", t.type);
  read(j, "dim", t.dim);
  read(j, "components", t.components);
  read(j, "mean_seed", t.mean_seed);
  read(j, "component_variance", t.component_variance);
  read(j, "init_mean", t.init_mean);
  read(j, "init_variance", t.init_variance);
  return t;
}

const std::set<std::string> kRunKeys{"kernel",        "resampling",      "tau",          "gap",
                                     "K",             "N",               "delta_hat",    "rho_init",
                                     "mass_scale_init", "hidden_width",  "hidden_layers", "target",
                                     "learning_rate", "epochs",          "iterations",   "batch",
                                     "seed",          "max_nonfinite"};

}  // namespace

GaussianMixtureTarget TargetConfig::make_target() const {
  return GaussianMixtureTarget::with_random_means(dim, components, mean_seed, component_variance);
}

GaussianInitial TargetConfig::make_initial() const {
  return GaussianInitial{std::vector<double>(dim, init_mean), init_variance};
}

void RunConfig::validate() const {
  auto require = [](bool ok, const char* message) {
    if (!ok) {
      throw ConfigError{message};
    }
  };
  require(steps >= 1, "K must be at least 1");
  require(particles >= 1, "N must be at least 1");
  require(delta_hat > 0.0, "delta_hat must be positive");
  require(tau > 0.0, "tau must be positive");
  require(gap >= 0.0, "gap must be non-negative");
  require(rho_init > 0.0 && rho_init < 1.0, "rho_init must lie in (0, 1)");
  require(mass_scale_init > 0.0, "mass_scale_init must be positive");
  require(hidden_width >= 1, "hidden_width must be at least 1");
  require(hidden_layers >= 1, "hidden_layers must be at least 1");
  require(target.type == "gaussian_mixture", "target.type must be \"gaussian_mixture\"");
  require(target.dim >= 1, "target.dim must be at least 1");
  require(target.components >= 1, "target.components must be at least 1");
  require(target.component_variance > 0.0, "target.component_variance must be positive");
  require(target.init_variance > 0.0, "target.init_variance must be positive");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(iterations >= 1, "iterations must be at least 1");
  require(batch >= 1, "batch must be at least 1");
}

ChainSettings RunConfig::chain_settings() const { return {kernel, resampling, tau, gap, particles}; }

RunConfig parse_run_config(const json& j) {
  reject_unknown(j, kRunKeys, "run config");
  RunConfig c;
  try {
    std::string name{to_string(c.kernel)};
    read(j, "kernel", name);
    c.kernel = parse_kernel(name);
    name = std::string{to_string(c.resampling)};
    read(j, "resampling", name);
    c.resampling = parse_scheme(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError{e.what()};
  }
  read(j, "tau", c.tau);
  read(j, "gap", c.gap);
  read(j, "K", c.steps);
  read(j, "N", c.particles);
  read(j, "delta_hat", c.delta_hat);
  read(j, "rho_init", c.rho_init);
  read(j, "mass_scale_init", c.mass_scale_init);
  read(j, "hidden_width", c.hidden_width);
  read(j, "hidden_layers", c.hidden_layers);
  if (const auto it = j.find("target"); it != j.end()) {
    c.target = parse_target(*it);
  }
  read(j, "learning_rate", c.learning_rate);
  read(j, "epochs", c.epochs);
  read(j, "iterations", c.iterations);
  read(j, "batch", c.batch);
  read(j, "seed", c.seed);
  read(j, "max_nonfinite", c.max_nonfinite);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_json_file(path)); }

json to_json(const RunConfig& c) {
  return json{{"kernel", std::string{to_string(c.kernel)}},
              {"resampling", std::string{to_string(c.resampling)}},
              {"tau", c.tau},
              {"gap", c.gap},
              {"K", c.steps},
              {"N", c.particles},
              {"delta_hat", c.delta_hat},
              {"rho_init", c.rho_init},
              {"mass_scale_init", c.mass_scale_init},
              {"hidden_width", c.hidden_width},
              {"hidden_layers", c.hidden_layers},
              {"target",
               {{"type", c.target.type},
                {"dim", c.target.dim},
                {"components", c.target.components},
                {"mean_seed", c.target.mean_seed},
                {"component_variance", c.target.component_variance},
                {"init_mean", c.target.init_mean},
                {"init_variance", c.target.init_variance}}},
              {"learning_rate", c.learning_rate},
              {"epochs", c.epochs},
              {"iterations", c.iterations},
              {"batch", c.batch},
              {"seed", c.seed},
              {"max_nonfinite", c.max_nonfinite}};
}

GridConfig parse_grid_config(const json& j) {
  reject_unknown(j, {"base", "kernel", "resampling", "tau", "K", "N", "delta_hat", "learning_rates", "seeds", "out"},
                 "grid config");
  GridConfig g;
  if (const auto it = j.find("base"); it != j.end()) {
    g.base = parse_run_config(*it);
  }
  read_list(j, "kernel", g.kernels);
  read_list(j, "resampling", g.resampling);
  read_list(j, "tau", g.taus);
  read_list(j, "K", g.steps);
  read_list(j, "N", g.particles);
  read_list(j, "delta_hat", g.delta_hats);
  read_list(j, "learning_rates", g.learning_rates);
  read_list(j, "seeds", g.seeds);
  read(j, "out", g.out);
  if (g.seeds.empty()) {
    throw ConfigError{"grid config needs at least one seed"};
  }
  try {
    for (const auto& k : g.kernels) {
      parse_kernel(k);
    }
    for (const auto& r : g.resampling) {
      parse_scheme(r);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError{e.what()};
  }
  for (double lr : g.learning_rates) {
    if (!(lr > 0.0)) {
      throw ConfigError{"learning rates must be positive"};
    }
  }
  return g;
}

GridConfig load_grid_config(const std::string& path) { return parse_grid_config(read_json_file(path)); }

}  // namespace dsmcs
