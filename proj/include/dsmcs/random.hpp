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

#ifndef DSMCS_RANDOM_HPP
#define DSMCS_RANDOM_HPP

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <boost/random/normal_distribution.hpp>

namespace dsmcs {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31U);
}

/// Identifies an independent random stream. Children are derived by hashing, so the stream for
/// (replicate 3, step 5) never depends on how many other streams were consumed.
class StreamKey {
 public:
  constexpr explicit StreamKey(std::uint64_t seed) noexcept : value_{mix64(seed ^ 0x5851f42d4c957f2dULL)} {}

  [[nodiscard]] constexpr StreamKey child(std::uint64_t tag) const noexcept {
    return StreamKey{Raw{}, mix64(value_ ^ mix64(tag + 0x632be59bd9b4e019ULL))};
  }
  [[nodiscard]] constexpr StreamKey child(std::initializer_list<std::uint64_t> tags) const noexcept {
    StreamKey key = *this;
    for (auto tag : tags) {
      key = key.child(tag);
    }
    return key;
  }
  [[nodiscard]] constexpr std::uint64_t value() const noexcept { return value_; }

 private:
  struct Raw {};
  constexpr StreamKey(Raw, std::uint64_t value) noexcept : value_{value} {}

  std::uint64_t value_;
};

/// Counter-based generator: output n of stream k is mix64(k + n * golden). Satisfies
/// UniformRandomBitGenerator so it plugs into <random> distributions.
class CounterEngine {
 public:
  using result_type = std::uint64_t;

  explicit CounterEngine(StreamKey key) noexcept : key_{key.value()} {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return mix64(key_ + 0x9e3779b97f4a7c15ULL * counter_++); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11U) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

  std::vector<double> normals(std::size_t count) {
    std::vector<double> out(count);
    for (auto& x : out) {
      x = normal();
    }
    return out;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_{0};
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

/// Draws `count` indices i.i.d. from the categorical distribution `probs` (need not be exactly
/// normalised) by inverse-CDF lookup of uniforms.
std::vector<std::size_t> sample_categorical(std::span<const double> probs, std::size_t count, CounterEngine& engine);

/// Source of every random quantity a sampler run consumes. Implementations can draw live from
/// counter-based streams, record the draws, or replay a previous record, which is what makes
/// finite-difference audits with frozen noise and frozen resampling indices possible.
class RandomSource {
 public:
  virtual ~RandomSource() = default;

  /// Called before the draws of transition `step` (0 = initialisation).
  virtual void begin_step(std::size_t step) = 0;
  virtual std::vector<double> normals(std::size_t count) = 0;
  virtual std::vector<std::size_t> categorical(std::span<const double> probs, std::size_t count) = 0;
  virtual bool bernoulli(double p) = 0;
};

/// Live draws; one counter stream per step, keyed by (replicate key, step).
class StreamSource final : public RandomSource {
 public:
  explicit StreamSource(StreamKey replicate) : replicate_{replicate}, engine_{replicate.child(0)} {}

  void begin_step(std::size_t step) override { engine_ = CounterEngine{replicate_.child(step)}; }
  std::vector<double> normals(std::size_t count) override { return engine_.normals(count); }
  std::vector<std::size_t> categorical(std::span<const double> probs, std::size_t count) override {
    return sample_categorical(probs, count, engine_);
  }
  bool bernoulli(double p) override { return engine_.uniform() < p; }

 private:
  StreamKey replicate_;
  CounterEngine engine_;
};

/// Everything a run drew, in call order.
struct DrawLog {
  std::vector<std::vector<double>> normals;
  std::vector<std::vector<std::size_t>> categoricals;
  std::vector<bool> bernoullis;
};

/// Forwards to another source and keeps a copy of each draw.
class RecordingSource final : public RandomSource {
 public:
  explicit RecordingSource(RandomSource& inner) : inner_{inner} {}

  void begin_step(std::size_t step) override { inner_.begin_step(step); }
  std::vector<double> normals(std::size_t count) override;
  std::vector<std::size_t> categorical(std::span<const double> probs, std::size_t count) override;
  bool bernoulli(double p) override;

  [[nodiscard]] const DrawLog& log() const noexcept { return log_; }

 private:
  RandomSource& inner_;
  DrawLog log_;
};

/// Replays a DrawLog. Normals are always replayed; discrete draws are replayed unless
/// `live_discrete` is given, in which case categorical and Bernoulli draws come from it.
class ReplaySource final : public RandomSource {
 public:
  explicit ReplaySource(DrawLog log, RandomSource* live_discrete = nullptr)
      : log_{std::move(log)}, live_{live_discrete} {}

  void begin_step(std::size_t step) override;
  std::vector<double> normals(std::size_t count) override;
  std::vector<std::size_t> categorical(std::span<const double> probs, std::size_t count) override;
  bool bernoulli(double p) override;

 private:
  DrawLog log_;
  RandomSource* live_;
  std::size_t next_normal_{0};
  std::size_t next_categorical_{0};
  std::size_t next_bernoulli_{0};
};

}  // namespace dsmcs

#endif
