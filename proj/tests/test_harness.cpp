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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dsmcs/config.hpp"
#include "dsmcs/harness.hpp"
#include "dsmcs/io.hpp"

namespace dsmcs {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class ScratchDir {
 public:
  ScratchDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string{"dsmcs_"} + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() { fs::remove_all(path_); }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  [[nodiscard]] std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in{path};
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in{text};
  for (std::string line; std::getline(in, line);) {
    out.push_back(line);
  }
  return out;
}

RunConfig tiny_config() {
  RunConfig c;
  c.resampling = ResamplingScheme::kCat;
  c.steps = 2;
  c.particles = 3;
  c.hidden_width = 3;
  c.target.dim = 2;
  c.target.components = 2;
  c.epochs = 3;
  c.iterations = 1;
  c.batch = 2;
  return c;
}

// --- configuration ---------------------------------------------------------------------------

TEST(Config, RoundTripsThroughJson) {
  auto config = tiny_config();
  config.kernel = KernelKind::kHamiltonian;
  config.resampling = ResamplingScheme::kBernGst;
  config.tau = 0.3;
  config.target.mean_seed = 12;
  const auto j = to_json(config);
  EXPECT_EQ(to_json(parse_run_config(j)), j);
  EXPECT_EQ(j.at("K"), 2);
  EXPECT_EQ(j.at("N"), 3);
}

TEST(Config, EmptyObjectGivesDefaults) {
  const auto config = parse_run_config(json::object());
  EXPECT_EQ(to_json(config), to_json(RunConfig{}));
}

TEST(Config, InvalidValuesAreRejected) {
  EXPECT_THROW((void)parse_run_config(json{{"K", 0}}), ConfigError);
  EXPECT_THROW((void)parse_run_config(json{{"N", -3}}), ConfigError);
  EXPECT_THROW((void)parse_run_config(json{{"K", "eight"}}), ConfigError);
  EXPECT_THROW((void)parse_run_config(json{{"delta_hat", 0.0}}), ConfigError);
  EXPECT_THROW((void)parse_run_config(json{{"tau", -1.0}}), ConfigError);
  EXPECT_THROW((void)parse_run_config(json{{"rho_init", 1.0}}), ConfigError);
  EXPECT_THROW((void)parse_run_config(json{{"resampling", "systematic"}}), ConfigError);
  EXPECT_THROW((void)parse_run_config(json{{"kernel", "mala"}}), ConfigError);
  EXPECT_THROW((void)parse_run_config(json{{"particles", 4}}), ConfigError);
  EXPECT_THROW((void)parse_run_config(json{{"target", {{"dims", 3}}}}), ConfigError);
  EXPECT_THROW((void)load_run_config("/nonexistent/dsmcs/config.json"), ConfigError);
}

TEST(Config, MalformedFileIsAConfigError) {
  ScratchDir dir;
  const auto path = dir / "bad.json";
  write_file_atomic(path, "{\"K\": 4,");
  EXPECT_THROW((void)load_run_config(path), ConfigError);
}

TEST(Config, GridValidation) {
  EXPECT_THROW((void)parse_grid_config(json{{"seeds", json::array()}}), ConfigError);
  EXPECT_THROW((void)parse_grid_config(json{{"resampling", {"cat", "bogus"}}}), ConfigError);
  EXPECT_THROW((void)parse_grid_config(json{{"learning_rates", {0.01, -0.1}}}), ConfigError);
  EXPECT_THROW((void)parse_grid_config(json{{"K", 4}}), ConfigError);
  const auto grid = parse_grid_config(json{{"K", {2, 4}}, {"N", {8}}, {"out", "x"}});
  EXPECT_EQ(grid.steps, (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(grid.out, "x");
}

// --- numbers and files -----------------------------------------------------------------------

TEST(Io, DoublesRoundTripExactly) {
  for (const double x : {0.1, -12.74, 1.0 / 3.0, 6.02214076e23, 5e-324, 0.0}) {
    EXPECT_EQ(std::strtod(format_double(x).c_str(), nullptr), x);
  }
  EXPECT_EQ(format_double(std::nan("")), "nan");
  EXPECT_EQ(format_double(-INFINITY), "-inf");
}

TEST(Io, AtomicWriteReplacesContent) {
  ScratchDir dir;
  const auto path = dir / "f.txt";
  write_file_atomic(path, "one");
  write_file_atomic(path, "two");
  EXPECT_EQ(slurp(path), "two");
}

// --- records ---------------------------------------------------------------------------------

TEST(RunCsv, ZeroEpochsGiveHeaderOnly) {
  EXPECT_EQ(run_csv({}, 2, false), "epoch,elbo_mean,elbo_std,ess_1,ess_2,resample_rate_1,resample_rate_2,seconds\n");
}

TEST(RunCsv, NarrowRowsArePaddedAndSecondsAreOptional) {
  EpochRecord r;
  r.epoch = 1;
  r.elbo_mean = -3.5;
  r.elbo_std = 0.25;
  r.ess = {4.0, 2.5};
  r.resample_rate = {0.0, 1.0};
  r.seconds = 1.5;
  const auto text = lines(run_csv({r}, 3, false));
  ASSERT_EQ(text.size(), 2U);
  EXPECT_EQ(text[1], "1,-3.5,0.25,4,2.5,,0,1,,");
  EXPECT_EQ(lines(run_csv({r}, 2, true))[1], "1,-3.5,0.25,4,2.5,0,1,1.5");
}

TEST(FinalSummary, AveragesTheLastTenEpochs) {
  const auto config = tiny_config();
  auto state = init_train_state(config);
  for (std::size_t e = 1; e <= 12; ++e) {
    EpochRecord r;
    r.epoch = e;
    r.elbo_mean = e <= 2 ? -100.0 : static_cast<double>(e);
    r.ess = {3.0, 2.0};
    r.resample_rate = {0.0, 1.0};
    state.history.push_back(r);
  }
  const auto s = summarize_run(state, config);
  EXPECT_TRUE(s.ok());
  EXPECT_EQ(s.window, 10U);
  EXPECT_DOUBLE_EQ(s.elbo_mean, 7.5);
  // Sample standard deviation of 3..12.
  EXPECT_NEAR(s.elbo_std, std::sqrt(55.0 / 6.0), 1e-12);
  EXPECT_NEAR(s.elbo_se, s.elbo_std / std::sqrt(10.0), 1e-15);

  const auto back = final_from_json(to_json(s));
  EXPECT_EQ(back.status, "ok");
  EXPECT_DOUBLE_EQ(back.elbo_mean, s.elbo_mean);
  EXPECT_DOUBLE_EQ(back.elbo_se, s.elbo_se);
  EXPECT_EQ(back.ess, s.ess);
  EXPECT_EQ(back.kernel.step_sizes, s.kernel.step_sizes);
}

TEST(FinalSummary, DivergedOrEmptyRunsAreNotAvailable) {
  const auto config = tiny_config();
  auto state = init_train_state(config);
  EXPECT_EQ(summarize_run(state, config).status, "N/A");
  EpochRecord r;
  r.epoch = 1;
  r.elbo_mean = std::nan("");
  state.history.push_back(r);
  state.diverged = true;
  const auto s = summarize_run(state, config);
  EXPECT_EQ(s.status, "N/A");
  EXPECT_FALSE(s.reason.empty());
  const auto j = to_json(s);
  EXPECT_TRUE(j.at("elbo_mean").is_null());
  EXPECT_TRUE(std::isnan(final_from_json(j).elbo_mean));
}

// --- single runs -----------------------------------------------------------------------------

TEST(RunExperiment, WritesAllRecordsDeterministically) {
  ScratchDir dir;
  const auto config = tiny_config();
  const auto summary = run_experiment(config, dir / "a");
  (void)run_experiment(config, dir / "b");
  EXPECT_TRUE(summary.ok());
  EXPECT_EQ(summary.epochs, 3U);
  for (const auto* name : {"run.csv", "timing.csv", "config.json", "final.json", "checkpoint.json"}) {
    EXPECT_TRUE(fs::exists(dir / ("a/" + std::string{name}))) << name;
  }
  const auto csv = slurp(dir / "a/run.csv");
  EXPECT_EQ(csv, slurp(dir / "b/run.csv"));
  const auto rows = lines(csv);
  ASSERT_EQ(rows.size(), 4U);
  EXPECT_EQ(rows[0], "epoch,elbo_mean,elbo_std,ess_1,ess_2,resample_rate_1,resample_rate_2,seconds");
  EXPECT_EQ(rows[1].rfind("1,", 0), 0U);
  EXPECT_EQ(rows[1].back(), ',');
  EXPECT_EQ(lines(slurp(dir / "a/timing.csv")).size(), 4U);
  EXPECT_EQ(to_json(parse_run_config(json::parse(slurp(dir / "a/config.json")))), to_json(config));
  const auto final = final_from_json(json::parse(slurp(dir / "a/final.json")));
  EXPECT_DOUBLE_EQ(final.elbo_mean, summary.elbo_mean);
}

TEST(RunExperiment, ZeroEpochsWriteTheHeader) {
  ScratchDir dir;
  auto config = tiny_config();
  config.epochs = 0;
  const auto summary = run_experiment(config, dir / "run");
  EXPECT_EQ(summary.status, "N/A");
  EXPECT_EQ(lines(slurp(dir / "run/run.csv")).size(), 1U);
}

TEST(RunExperiment, ResumeContinuesAndChecksTheConfiguration) {
  ScratchDir dir;
  auto config = tiny_config();
  const auto straight = run_experiment(config, dir / "straight");

  auto partial = config;
  partial.epochs = 1;
  (void)run_experiment(partial, dir / "resumed");
  // A different epoch budget is a different configuration.
  RunOptions resume;
  resume.resume = true;
  EXPECT_THROW((void)run_experiment(config, dir / "resumed", resume), std::runtime_error);

  fs::remove(dir / "resumed/config.json");
  write_file_atomic(dir / "resumed/config.json", to_json(config).dump(2) + "\n");
  const auto resumed = run_experiment(config, dir / "resumed", resume);
  EXPECT_EQ(resumed.elbo_mean, straight.elbo_mean);
  EXPECT_EQ(slurp(dir / "resumed/run.csv"), slurp(dir / "straight/run.csv"));

  // A finished run is read back rather than retrained.
  std::size_t epochs_seen = 0;
  resume.progress = [&](const EpochRecord&, const RunConfig&) { ++epochs_seen; };
  const auto again = run_experiment(config, dir / "straight", resume);
  EXPECT_EQ(epochs_seen, 0U);
  EXPECT_EQ(again.elbo_mean, straight.elbo_mean);
}

// --- grids -----------------------------------------------------------------------------------

GridConfig tiny_grid(const std::string& out) {
  GridConfig g;
  g.base = tiny_config();
  g.base.epochs = 2;
  g.out = out;
  return g;
}

TEST(Grid, SingleCell) {
  ScratchDir dir;
  const auto grid = tiny_grid(dir / "grid");
  const auto cells = enumerate_cells(grid);
  ASSERT_EQ(cells.size(), 1U);
  const auto results = run_grid(grid);
  ASSERT_EQ(results.size(), 1U);
  EXPECT_EQ(results[0].status, "ok");
  EXPECT_EQ(lines(slurp(dir / "grid/summary.csv")).size(), 2U);
}

TEST(Grid, TwoByTwoGivesFourRows) {
  ScratchDir dir;
  auto grid = tiny_grid(dir / "grid");
  grid.resampling = {"none", "bern-cat"};
  grid.steps = {2, 3};
  const auto cells = enumerate_cells(grid);
  ASSERT_EQ(cells.size(), 4U);
  std::set<std::string> names;
  for (const auto& c : cells) {
    names.insert(c.name);
  }
  EXPECT_EQ(names.size(), 4U);
  (void)run_grid(grid);
  const auto rows = lines(slurp(dir / "grid/summary.csv"));
  ASSERT_EQ(rows.size(), 5U);
  EXPECT_EQ(rows[0],
            "cell,kernel,resampling,tau,K,N,delta_hat,learning_rate,seeds,seeds_ok,elbo_mean,elbo_std,status,error");
  // Every run of a grid shares the widest ESS layout.
  for (const auto& c : cells) {
    const auto run_rows = lines(slurp(dir / ("grid/" + c.name + "/lr" + format_double(c.config.learning_rate) +
                                             "_seed0/run.csv")));
    EXPECT_NE(run_rows.at(0).find("ess_3"), std::string::npos);
  }
}

TEST(Grid, LearningRateSearchThenSeeds) {
  ScratchDir dir;
  auto grid = tiny_grid(dir / "grid");
  grid.learning_rates = {0.01, 0.05};
  grid.seeds = {0, 1};
  const auto results = run_grid(grid);
  ASSERT_EQ(results.size(), 1U);
  const auto& cell = results[0];
  EXPECT_EQ(cell.search.size(), 2U);
  EXPECT_EQ(cell.seeds.size(), 2U);
  EXPECT_EQ(cell.seeds_ok, 2U);
  double best = -INFINITY;
  double best_lr = 0.0;
  for (const auto& s : cell.search) {
    if (s.final.elbo_mean > best) {
      best = s.final.elbo_mean;
      best_lr = s.learning_rate;
    }
  }
  EXPECT_EQ(cell.learning_rate, best_lr);
  const double mean = 0.5 * (cell.seeds[0].final.elbo_mean + cell.seeds[1].final.elbo_mean);
  EXPECT_NEAR(cell.elbo_mean, mean, 1e-12);
  EXPECT_NEAR(cell.elbo_std, std::abs(cell.seeds[0].final.elbo_mean - mean) * std::sqrt(2.0), 1e-12);
}

TEST(Grid, InvalidCellIsAConfigError) {
  ScratchDir dir;
  auto grid = tiny_grid(dir / "grid");
  grid.particles = {0};
  EXPECT_THROW((void)enumerate_cells(grid), ConfigError);
}

}  // namespace
}  // namespace dsmcs
