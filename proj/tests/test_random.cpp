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
#include <vector>

#include "dsmcs/random.hpp"

namespace dsmcs {
namespace {

TEST(Random, StreamsAreReproducibleAndDistinct) {
  CounterEngine a{StreamKey{5}.child({2, 3})};
  CounterEngine b{StreamKey{5}.child({2, 3})};
  CounterEngine c{StreamKey{5}.child({3, 2})};
  const auto xa = a.normals(16);
  EXPECT_EQ(xa, b.normals(16));
  EXPECT_NE(xa, c.normals(16));
}

TEST(Random, ChildStreamsDoNotDependOnConsumption) {
  StreamSource first{StreamKey{9}};
  first.begin_step(0);
  (void)first.normals(1000);
  first.begin_step(4);
  const auto after_use = first.normals(8);
  StreamSource fresh{StreamKey{9}};
  fresh.begin_step(4);
  EXPECT_EQ(after_use, fresh.normals(8));
}

TEST(Random, UniformAndNormalMoments) {
  CounterEngine engine{StreamKey{1}};
  const int n = 200000;
  double su = 0.0;
  double sn = 0.0;
  double sn2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = engine.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = engine.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(sn / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(sn2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
}

TEST(Random, CategoricalNeverPicksZeroMass) {
  CounterEngine engine{StreamKey{3}};
  const std::vector<double> probs{0.0, 0.5, 0.0, 0.5, 0.0};
  for (auto i : sample_categorical(probs, 10000, engine)) {
    EXPECT_TRUE(i == 1 || i == 3);
  }
  EXPECT_THROW((void)sample_categorical(std::vector<double>{0.0, 0.0}, 1, engine), std::invalid_argument);
  EXPECT_THROW((void)sample_categorical(std::vector<double>{}, 1, engine), std::invalid_argument);
}

TEST(Random, ReplayReproducesRecordedDraws) {
  StreamSource live{StreamKey{11}};
  RecordingSource recorder{live};
  recorder.begin_step(0);
  const auto z = recorder.normals(5);
  const auto idx = recorder.categorical(std::vector<double>{0.2, 0.3, 0.5}, 4);
  const bool b = recorder.bernoulli(0.5);

  ReplaySource replay{recorder.log()};
  replay.begin_step(0);
  EXPECT_EQ(replay.normals(5), z);
  // Frozen indices ignore the probabilities they are asked with.
  EXPECT_EQ(replay.categorical(std::vector<double>{1.0, 0.0, 0.0}, 4), idx);
  EXPECT_EQ(replay.bernoulli(0.0), b);
  EXPECT_THROW((void)replay.normals(5), std::logic_error);
}

}  // namespace
}  // namespace dsmcs
