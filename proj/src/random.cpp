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

#include "dsmcs/random.hpp"

#include <algorithm>
#include <stdexcept>

namespace dsmcs {

std::vector<std::size_t> sample_categorical(std::span<const double> probs, std::size_t count, CounterEngine& engine) {
  if (probs.empty()) {
    throw std::invalid_argument{"sample_categorical: empty probability vector"};
  }
  std::vector<double> cdf(probs.size());
  double running = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] < 0.0) {
      throw std::invalid_argument{"sample_categorical: negative probability"};
    }
    running += probs[i];
    cdf[i] = running;
  }
  if (!(running > 0.0)) {
    throw std::invalid_argument{"sample_categorical: probabilities sum to zero"};
  }
  std::vector<std::size_t> out(count);
  for (auto& index : out) {
    const double u = engine.uniform() * running;
    // First entry whose cumulative mass exceeds u; zero-probability entries are never chosen.
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    index = std::min(static_cast<std::size_t>(it - cdf.begin()), probs.size() - 1);
    while (probs[index] == 0.0 && index > 0) {
      --index;
    }
  }
  return out;
}

std::vector<double> RecordingSource::normals(std::size_t count) {
  auto draw = inner_.normals(count);
  log_.normals.push_back(draw);
  return draw;
}

std::vector<std::size_t> RecordingSource::categorical(std::span<const double> probs, std::size_t count) {
  auto draw = inner_.categorical(probs, count);
  log_.categoricals.push_back(draw);
  return draw;
}

bool RecordingSource::bernoulli(double p) {
  const bool draw = inner_.bernoulli(p);
  log_.bernoullis.push_back(draw);
  return draw;
}

void ReplaySource::begin_step(std::size_t step) {
  if (live_ != nullptr) {
    live_->begin_step(step);
  }
}

std::vector<double> ReplaySource::normals(std::size_t count) {
  if (next_normal_ >= log_.normals.size() || log_.normals[next_normal_].size() != count) {
    throw std::logic_error{"ReplaySource: normal draw sequence does not match the recording"};
  }
  return log_.normals[next_normal_++];
}

std::vector<std::size_t> ReplaySource::categorical(std::span<const double> probs, std::size_t count) {
  if (live_ != nullptr) {
    return live_->categorical(probs, count);
  }
  if (next_categorical_ >= log_.categoricals.size() || log_.categoricals[next_categorical_].size() != count) {
    throw std::logic_error{"ReplaySource: categorical draw sequence does not match the recording"};
  }
  return log_.categoricals[next_categorical_++];
}

bool ReplaySource::bernoulli(double p) {
  if (live_ != nullptr) {
    return live_->bernoulli(p);
  }
  if (next_bernoulli_ >= log_.bernoullis.size()) {
    throw std::logic_error{"ReplaySource: Bernoulli draw sequence does not match the recording"};
  }
  return log_.bernoullis[next_bernoulli_++];
}

}  // namespace dsmcs
