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

#ifndef DSMCS_HARNESS_HPP
#define DSMCS_HARNESS_HPP

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsmcs/config.hpp"
#include "dsmcs/training.hpp"

/**
 * \file
 * \brief Experiment orchestration: single runs, grids and their on-disk records.
 *
 * A run directory holds
 *  - `run.csv`: one row per epoch with columns
 *    `epoch,elbo_mean,elbo_std,ess_1..ess_W,resample_rate_1..resample_rate_W,seconds`, where W is
 *    the ESS width (K for a single run, the largest K for a grid) and unused columns are empty;
 *  - `timing.csv`: `epoch,seconds`;
 *  - `config.json`: the resolved configuration, every field included;
 *  - `final.json`: the final summary (see FinalSummary);
 *  - `checkpoint.json`: the training state after the last completed epoch.
 *
 * `seconds` in run.csv stays empty unless wall time is requested; without it, reruns of one
 * configuration give byte-identical run.csv files. Every file is written atomically.
 */

namespace dsmcs {

/// Number of trailing epochs the final bound is averaged over.
inline constexpr std::size_t kFinalWindow = 10;

struct FinalSummary {
  std::string status{"ok"};  ///< "ok", or "N/A" when training did not converge
  std::string reason;        ///< why the status is N/A
  double elbo_mean{0.0};     ///< mean of the per-epoch bound over the final window
  double elbo_std{0.0};      ///< standard deviation of the per-epoch bound over the window
  double elbo_se{0.0};       ///< elbo_std / sqrt(window length)
  std::size_t window{0};
  std::size_t epochs{0};
  std::vector<double> ess;            ///< last epoch
  std::vector<double> resample_rate;  ///< last epoch
  std::size_t skipped_iterations{0};
  KernelSummary kernel;

  [[nodiscard]] bool ok() const noexcept { return status == "ok"; }
};

FinalSummary summarize_run(const TrainState& state, const RunConfig& config);
nlohmann::json to_json(const FinalSummary& summary);
FinalSummary final_from_json(const nlohmann::json& j);

/// Header plus one row per epoch; `width` >= K pads the per-step columns.
std::string run_csv(const std::vector<EpochRecord>& history, std::size_t width, bool wall_time);

struct RunOptions {
  std::size_t threads{1};
  bool wall_time{false};
  /// Continue from `checkpoint.json` when the directory already holds a run of the same
  /// configuration; a finished run is then not trained again.
  bool resume{false};
  std::size_t ess_width{0};  ///< 0 means K
  std::function<void(const EpochRecord&, const RunConfig&)> progress;
};

/// Trains `config` and writes the run directory `out`. Divergence is reported through the
/// summary status rather than thrown.
FinalSummary run_experiment(const RunConfig& config, const std::string& out, const RunOptions& options = {});

/// One grid cell: a fixed (kernel, scheme, tau, K, N, delta_hat).
struct GridCell {
  RunConfig config;
  std::string name;
};

std::vector<GridCell> enumerate_cells(const GridConfig& grid);

struct SeedResult {
  std::uint64_t seed{0};
  double learning_rate{0.0};
  std::string dir;
  FinalSummary final;
  std::string error;  ///< exception text when the run could not complete
};

struct CellResult {
  GridCell cell;
  double learning_rate{0.0};        ///< chosen learning rate
  std::vector<SeedResult> search;   ///< learning-rate search runs on the first seed
  std::vector<SeedResult> seeds;    ///< runs at the chosen learning rate, one per seed
  std::string status{"ok"};         ///< "ok", "partial" or "N/A"
  std::string error;
  double elbo_mean{0.0};
  double elbo_std{0.0};
  std::size_t seeds_ok{0};
};

/// Runs every cell. With several learning rates each cell first trains the first seed on every
/// rate, keeps the rate with the highest final bound and then trains the remaining seeds with it.
/// The cell bound is the mean over converged seeds and its spread their sample standard
/// deviation (the run's own window deviation for a single seed). Failures stay inside their
/// cell. Writes `<out>/summary.csv`.
std::vector<CellResult> run_grid(const GridConfig& grid, const RunOptions& options = {});

std::string summary_csv(const std::vector<CellResult>& cells);

}  // namespace dsmcs

#endif
