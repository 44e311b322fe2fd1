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

#include "dsmcs/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "dsmcs/io.hpp"

namespace dsmcs {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double number_from(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json numbers(const std::vector<double>& xs) {
  json out = json::array();
  for (double x : xs) {
    out.push_back(number_or_null(x));
  }
  return out;
}

std::vector<double> numbers_from(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) {
    out.push_back(number_from(x));
  }
  return out;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) {
    return text;
  }
  std::string quoted = "\"";
  for (char c : text) {
    if (c == '"') {
      quoted += '"';
    }
    quoted += c == '\n' ? ' ' : c;
  }
  return quoted + "\"";
}

std::string timing_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,seconds\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_double(r.seconds) << '\n';
  }
  return out.str();
}

std::string read_text(const fs::path& path) {
  std::ifstream in{path, std::ios::binary};
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_outputs(const std::string& out, const RunConfig& config, const TrainState& state,
                   const RunOptions& options) {
  const fs::path dir{out};
  const auto width = std::max(options.ess_width, config.steps);
  write_file_atomic((dir / "run.csv").string(), run_csv(state.history, width, options.wall_time));
  write_file_atomic((dir / "timing.csv").string(), timing_csv(state.history));
  save_checkpoint((dir / "checkpoint.json").string(), state);
}

std::string format_label(double x) {
  auto text = format_double(x);
  std::replace(text.begin(), text.end(), '-', 'm');
  return text;
}

}  // namespace

// --- single runs -----------------------------------------------------------------------------

FinalSummary summarize_run(const TrainState& state, const RunConfig& config) {
  FinalSummary s;
  s.epochs = state.history.size();
  s.skipped_iterations = state.skipped_total;
  s.kernel = summarize(state.params, config);
  if (state.history.empty()) {
    s.status = "N/A";
    s.reason = "no epochs were run";
    s.elbo_mean = s.elbo_std = s.elbo_se = kNaN;
    return s;
  }
  s.ess = state.history.back().ess;
  s.resample_rate = state.history.back().resample_rate;
  const auto window = std::min(kFinalWindow, state.history.size());
  const auto first = state.history.end() - static_cast<std::ptrdiff_t>(window);
  double total = 0.0;
  for (auto it = first; it != state.history.end(); ++it) {
    total += it->elbo_mean;
  }
  s.window = window;
  s.elbo_mean = total / static_cast<double>(window);
  double sq = 0.0;
  for (auto it = first; it != state.history.end(); ++it) {
    sq += (it->elbo_mean - s.elbo_mean) * (it->elbo_mean - s.elbo_mean);
  }
  s.elbo_std = window > 1 ? std::sqrt(sq / static_cast<double>(window - 1)) : 0.0;
  s.elbo_se = s.elbo_std / std::sqrt(static_cast<double>(window));
  if (state.diverged) {
    s.status = "N/A";
    s.reason = "more than " + std::to_string(config.max_nonfinite) + " consecutive non-finite iterations";
  } else if (!std::isfinite(s.elbo_mean)) {
    s.status = "N/A";
    s.reason = "non-finite bound in the final epochs";
  }
  return s;
}

json to_json(const FinalSummary& s) {
  json kernel{{"step_sizes", numbers(s.kernel.step_sizes)}, {"betas", numbers(s.kernel.betas)}};
  if (s.kernel.mass_scale > 0.0) {
    kernel["rho"] = s.kernel.rho;
    kernel["mass_scale"] = s.kernel.mass_scale;
  }
  return json{{"status", s.status},
              {"reason", s.reason},
              {"elbo_mean", number_or_null(s.elbo_mean)},
              {"elbo_std", number_or_null(s.elbo_std)},
              {"elbo_se", number_or_null(s.elbo_se)},
              {"window", s.window},
              {"epochs", s.epochs},
              {"ess", numbers(s.ess)},
              {"resample_rate", numbers(s.resample_rate)},
              {"skipped_iterations", s.skipped_iterations},
              {"kernel", kernel}};
}

FinalSummary final_from_json(const json& j) {
  FinalSummary s;
  s.status = j.at("status").get<std::string>();
  s.reason = j.at("reason").get<std::string>();
  s.elbo_mean = number_from(j.at("elbo_mean"));
  s.elbo_std = number_from(j.at("elbo_std"));
  s.elbo_se = number_from(j.at("elbo_se"));
  s.window = j.at("window").get<std::size_t>();
  s.epochs = j.at("epochs").get<std::size_t>();
  s.ess = numbers_from(j.at("ess"));
  s.resample_rate = numbers_from(j.at("resample_rate"));
  s.skipped_iterations = j.at("skipped_iterations").get<std::size_t>();
  const auto& kernel = j.at("kernel");
  s.kernel.step_sizes = numbers_from(kernel.at("step_sizes"));
  s.kernel.betas = numbers_from(kernel.at("betas"));
  if (kernel.contains("rho")) {
    s.kernel.rho = kernel.at("rho").get<double>();
    s.kernel.mass_scale = kernel.at("mass_scale").get<double>();
  }
  return s;
}

std::string run_csv(const std::vector<EpochRecord>& history, std::size_t width, bool wall_time) {
  std::ostringstream out;
  out << "epoch,elbo_mean,elbo_std";
  for (std::size_t k = 1; k <= width; ++k) {
    out << ",ess_" << k;
  }
  for (std::size_t k = 1; k <= width; ++k) {
    out << ",resample_rate_" << k;
  }
  out << ",seconds\n";
  auto padded = [&](const std::vector<double>& xs) {
    for (std::size_t k = 0; k < width; ++k) {
      out << ',';
      if (k < xs.size()) {
        out << format_double(xs[k]);
      }
    }
  };
  for (const auto& r : history) {
    out << r.epoch << ',' << format_double(r.elbo_mean) << ',' << format_double(r.elbo_std);
    padded(r.ess);
    padded(r.resample_rate);
    out << ',';
    if (wall_time) {
      out << format_double(r.seconds);
    }
    out << '\n';
  }
  return out.str();
}

FinalSummary run_experiment(const RunConfig& config, const std::string& out, const RunOptions& options) {
  config.validate();
  const fs::path dir{out};
  const auto config_text = to_json(config).dump(2) + "\n";
  const auto checkpoint = dir / "checkpoint.json";

  TrainState state;
  bool resumed = false;
  if (options.resume && fs::exists(checkpoint) && fs::exists(dir / "config.json")) {
    if (read_text(dir / "config.json") != config_text) {
      throw std::runtime_error{"'" + out + "' holds a run of a different configuration"};
    }
    state = load_checkpoint(checkpoint.string());
    resumed = true;
  }
  if (!resumed) {
    state = init_train_state(config);
  }
  write_file_atomic((dir / "config.json").string(), config_text);

  train(
      config, state,
      [&](const EpochRecord& record, const TrainState& current) {
        write_outputs(out, config, current, options);
        if (options.progress) {
          options.progress(record, config);
        }
      },
      options.threads);

  write_outputs(out, config, state, options);
  const auto summary = summarize_run(state, config);
  write_file_atomic((dir / "final.json").string(), to_json(summary).dump(2) + "\n");
  return summary;
}

// --- grids -----------------------------------------------------------------------------------

std::vector<GridCell> enumerate_cells(const GridConfig& grid) {
  const auto& base = grid.base;
  auto axis = [](const auto& values, auto fallback) {
    using T = typename std::decay_t<decltype(values)>::value_type;
    return values.empty() ? std::vector<T>{static_cast<T>(fallback)} : values;
  };
  const auto kernels = axis(grid.kernels, std::string{to_string(base.kernel)});
  const auto schemes = axis(grid.resampling, std::string{to_string(base.resampling)});
  const auto taus = axis(grid.taus, base.tau);
  const auto steps = axis(grid.steps, base.steps);
  const auto particles = axis(grid.particles, base.particles);
  const auto deltas = axis(grid.delta_hats, base.delta_hat);

  std::vector<GridCell> cells;
  for (const auto& kernel : kernels) {
    for (const auto& scheme : schemes) {
      for (double tau : taus) {
        for (auto k : steps) {
          for (auto n : particles) {
            for (double delta : deltas) {
              GridCell cell;
              cell.config = base;
              try {
                cell.config.kernel = parse_kernel(kernel);
                cell.config.resampling = parse_scheme(scheme);
              } catch (const std::invalid_argument& e) {
                throw ConfigError{e.what()};
              }
              cell.config.tau = tau;
              cell.config.steps = k;
              cell.config.particles = n;
              cell.config.delta_hat = delta;
              cell.config.validate();
              cell.name = kernel + "_" + scheme + "_tau" + format_label(tau) + "_K" + std::to_string(k) + "_N" +
                          std::to_string(n) + "_d" + format_label(delta);
              cells.push_back(std::move(cell));
            }
          }
        }
      }
    }
  }
  return cells;
}

namespace {

SeedResult run_seed(RunConfig config, std::uint64_t seed, double lr, const fs::path& dir, const RunOptions& options) {
  config.seed = seed;
  config.learning_rate = lr;
  SeedResult result;
  result.seed = seed;
  result.learning_rate = lr;
  result.dir = (dir / ("lr" + format_label(lr) + "_seed" + std::to_string(seed))).string();
  try {
    result.final = run_experiment(config, result.dir, options);
  } catch (const std::exception& e) {
    result.error = e.what();
    result.final.status = "N/A";
    result.final.reason = e.what();
    result.final.elbo_mean = result.final.elbo_std = result.final.elbo_se = kNaN;
  }
  return result;
}

void finish_cell(CellResult& cell) {
  std::vector<double> values;
  for (const auto& s : cell.seeds) {
    if (s.final.ok()) {
      values.push_back(s.final.elbo_mean);
    } else if (cell.error.empty()) {
      cell.error = s.error.empty() ? s.final.reason : s.error;
    }
  }
  cell.seeds_ok = values.size();
  if (values.empty()) {
    cell.status = "N/A";
    cell.elbo_mean = cell.elbo_std = kNaN;
    return;
  }
  cell.status = values.size() == cell.seeds.size() ? "ok" : "partial";
  double total = 0.0;
  for (double v : values) {
    total += v;
  }
  cell.elbo_mean = total / static_cast<double>(values.size());
  if (values.size() == 1) {
    for (const auto& s : cell.seeds) {
      if (s.final.ok()) {
        cell.elbo_std = s.final.elbo_std;
      }
    }
    return;
  }
  double sq = 0.0;
  for (double v : values) {
    sq += (v - cell.elbo_mean) * (v - cell.elbo_mean);
  }
  cell.elbo_std = std::sqrt(sq / static_cast<double>(values.size() - 1));
}

}  // namespace

std::vector<CellResult> run_grid(const GridConfig& grid, const RunOptions& options) {
  const auto cells = enumerate_cells(grid);
  auto run_options = options;
  for (const auto& cell : cells) {
    run_options.ess_width = std::max(run_options.ess_width, cell.config.steps);
  }
  const fs::path root{grid.out};
  const auto rates = grid.learning_rates.empty() ? std::vector<double>{grid.base.learning_rate} : grid.learning_rates;

  std::vector<CellResult> results;
  for (const auto& cell : cells) {
    CellResult result;
    result.cell = cell;
    const auto dir = root / cell.name;
    const auto first_seed = grid.seeds.front();
    std::optional<SeedResult> best;
    if (rates.size() > 1) {
      for (double lr : rates) {
        auto run = run_seed(cell.config, first_seed, lr, dir, run_options);
        if (run.final.ok() && (!best || run.final.elbo_mean > best->final.elbo_mean)) {
          best = run;
        }
        result.search.push_back(std::move(run));
      }
      if (!best) {
        result.learning_rate = kNaN;
        result.status = "N/A";
        result.error = "no learning rate converged";
        result.elbo_mean = result.elbo_std = kNaN;
        results.push_back(std::move(result));
        write_file_atomic((root / "summary.csv").string(), summary_csv(results));
        continue;
      }
    }
    result.learning_rate = best ? best->learning_rate : rates.front();
    for (auto seed : grid.seeds) {
      if (best && seed == first_seed) {
        result.seeds.push_back(*best);
      } else {
        result.seeds.push_back(run_seed(cell.config, seed, result.learning_rate, dir, run_options));
      }
    }
    finish_cell(result);
    results.push_back(std::move(result));
    write_file_atomic((root / "summary.csv").string(), summary_csv(results));
  }
  write_file_atomic((root / "summary.csv").string(), summary_csv(results));
  return results;
}

std::string summary_csv(const std::vector<CellResult>& cells) {
  std::ostringstream out;
  out << "cell,kernel,resampling,tau,K,N,delta_hat,learning_rate,seeds,seeds_ok,elbo_mean,elbo_std,status,error\n";
  for (const auto& c : cells) {
    const auto& cfg = c.cell.config;
    out << c.cell.name << ',' << to_string(cfg.kernel) << ',' << to_string(cfg.resampling) << ','
        << format_double(cfg.tau) << ',' << cfg.steps << ',' << cfg.particles << ',' << format_double(cfg.delta_hat)
        << ',' << format_double(c.learning_rate) << ',' << c.seeds.size() << ',' << c.seeds_ok << ','
        << format_double(c.elbo_mean) << ',' << format_double(c.elbo_std) << ',' << c.status << ','
        << csv_field(c.error) << '\n';
  }
  return out.str();
}

}  // namespace dsmcs
