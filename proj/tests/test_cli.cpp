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
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
  const std::string command = std::string{DSMCS_CLI_PATH} + " " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string{"dsmcs_cli_"} + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& content) const {
    const auto path = (dir_ / name).string();
    std::ofstream{path} << content;
    return path;
  }
  [[nodiscard]] std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

constexpr const char* kTinyRun =
    R"({"K": 2, "N": 3, "hidden_width": 3, "epochs": 2, "iterations": 1, "batch": 2,
        "resampling": "bern-cat", "target": {"dim": 2, "components": 2}})";

TEST_F(Cli, InvalidConfigurationExitsWithTwo) {
  EXPECT_EQ(run_cli("run --config " + write("k0.json", R"({"K": 0})") + " --out " + path("o")), 2);
  EXPECT_EQ(run_cli("run --config " + write("unknown.json", R"({"steps": 4})") + " --out " + path("o")), 2);
  EXPECT_EQ(run_cli("run --config " + write("broken.json", "{") + " --out " + path("o")), 2);
  EXPECT_EQ(run_cli("run --config " + path("missing.json") + " --out " + path("o")), 2);
  EXPECT_EQ(run_cli("grid --config " + write("grid.json", R"({"N": [4, 0]})") + " --out " + path("g")), 2);
}

TEST_F(Cli, RunWritesItsDirectory) {
  const auto config = write("run.json", kTinyRun);
  ASSERT_EQ(run_cli("run --quiet --config " + config + " --out " + path("out")), 0);
  for (const auto* name : {"run.csv", "timing.csv", "config.json", "final.json", "checkpoint.json"}) {
    EXPECT_TRUE(fs::exists(path("out/") + name)) << name;
  }
}

TEST_F(Cli, ZeroEpochsExitsCleanly) {
  const auto config = write("zero.json", R"({"K": 2, "N": 3, "epochs": 0, "target": {"dim": 2}})");
  EXPECT_EQ(run_cli("run --quiet --config " + config + " --out " + path("out")), 0);
  std::ifstream in{path("out/run.csv")};
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto text = buffer.str();
  EXPECT_EQ(text.find("epoch,elbo_mean,elbo_std,ess_1,ess_2,"), 0U);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
}

TEST_F(Cli, VerifySuiteSucceeds) {
  EXPECT_EQ(run_cli("verify --suite theorem --report " + path("report.json")), 0);
  EXPECT_TRUE(fs::exists(path("report.json")));
}

TEST_F(Cli, UsageErrorsFail) {
  EXPECT_NE(run_cli(""), 0);
  EXPECT_NE(run_cli("verify --suite everything"), 0);
}

}  // namespace
