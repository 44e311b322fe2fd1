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

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "dsmcs/config.hpp"
#include "dsmcs/harness.hpp"
#include "dsmcs/io.hpp"
#include "dsmcs/verify.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

void print_progress(const dsmcs::EpochRecord& r, const dsmcs::RunConfig& config) {
  std::fprintf(stderr, "[%s/%s K=%zu N=%zu lr=%g seed=%llu] epoch %zu/%zu  elbo %.4f  (%.2f s)\n",
               std::string{dsmcs::to_string(config.kernel)}.c_str(),
               std::string{dsmcs::to_string(config.resampling)}.c_str(), config.steps, config.particles,
               config.learning_rate, static_cast<unsigned long long>(config.seed), r.epoch, config.epochs, r.elbo_mean,
               r.seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable sequential Monte Carlo samplers"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  bool wall_time = false;
  bool resume = false;
  bool quiet = false;
  std::size_t threads = 0;

  auto* run = app.add_subcommand("run", "Train one configuration and write its run directory");
  run->add_option("--config", config_path, "Run configuration (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory")->default_val("run_out");
  run->add_flag("--wall-time", wall_time, "Fill the seconds column of run.csv");
  run->add_flag("--resume", resume, "Continue from the checkpoint in the output directory");
  run->add_option("--threads", threads, "Worker threads (default: DSMCS_THREADS or all cores)");
  run->add_flag("--quiet", quiet, "No per-epoch progress on stderr");

  auto* grid = app.add_subcommand("grid", "Run a grid of configurations and write summary.csv");
  grid->add_option("--config", config_path, "Grid configuration (JSON)")->required();
  grid->add_option("--out", out_dir, "Output directory (overrides the config's \"out\")");
  grid->add_flag("--wall-time", wall_time, "Fill the seconds column of run.csv");
  grid->add_flag("--resume", resume, "Reuse finished runs and continue interrupted ones");
  grid->add_option("--threads", threads, "Worker threads (default: DSMCS_THREADS or all cores)");
  grid->add_flag("--quiet", quiet, "No per-epoch progress on stderr");

  std::string suite = "all";
  std::uint64_t seed = 0;
  std::size_t replicates = 100000;
  std::string report_path;
  auto* verify = app.add_subcommand("verify", "Run the numerical verification suite");
  verify->add_option("--suite", suite, "Checks to run")->check(CLI::IsMember({"all", "grad", "theorem", "unbiased"}));
  verify->add_option("--seed", seed, "Seed of every check");
  verify->add_option("--replicates", replicates, "Replicates of the unbiasedness checks");
  verify->add_option("--report", report_path, "Also write the JSON report to this file");

  CLI11_PARSE(app, argc, argv);

  dsmcs::RunOptions options;
  options.threads = threads > 0 ? threads : dsmcs::default_threads();
  options.wall_time = wall_time;
  options.resume = resume;
  if (!quiet) {
    options.progress = print_progress;
  }

  try {
    if (run->parsed()) {
      const auto config = dsmcs::load_run_config(config_path);
      const auto summary = dsmcs::run_experiment(config, out_dir, options);
      std::cout << dsmcs::to_json(summary).dump(2) << '\n';
      return 0;
    }
    if (grid->parsed()) {
      auto config = dsmcs::load_grid_config(config_path);
      if (!out_dir.empty()) {
        config.out = out_dir;
      }
      dsmcs::enumerate_cells(config);
      const auto cells = dsmcs::run_grid(config, options);
      std::cout << dsmcs::summary_csv(cells);
      return 0;
    }
    const auto report = dsmcs::run_verify_suite(suite, seed, replicates);
    const auto text = report.dump(2) + "\n";
    if (!report_path.empty()) {
      dsmcs::write_file_atomic(report_path, text);
    }
    std::cout << text;
    return report.at("passed").get<bool>() ? 0 : kExitFailure;
  } catch (const dsmcs::ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
