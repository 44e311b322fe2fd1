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

#ifndef DSMCS_TARGETS_HPP
#define DSMCS_TARGETS_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dsmcs/autodiff.hpp"
#include "dsmcs/random.hpp"

namespace dsmcs {

/// Normalised isotropic Gaussian mixture. All densities take a block of points, one per row, and
/// return one value per row.
class GaussianMixtureTarget {
 public:
  struct Evaluation {
    ad::Var log_density;  ///< rows x 1
    ad::Var score;        ///< rows x dim, gradient of the log-density
  };

  /// `means` is components x dim in row-major order. Empty `weights` means uniform.
  GaussianMixtureTarget(std::size_t dim, std::vector<double> means, double component_variance,
                        std::vector<double> weights = {});

  /// Means drawn elementwise i.i.d. from N(center, 1) using a dedicated stream of `mean_seed`.
  static GaussianMixtureTarget with_random_means(std::size_t dim, std::size_t components, std::uint64_t mean_seed,
                                                 double component_variance, double center = 3.0);

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t components() const noexcept { return weights_.size(); }
  [[nodiscard]] const std::vector<double>& means() const noexcept { return means_; }
  [[nodiscard]] const std::vector<double>& weights() const noexcept { return weights_; }
  [[nodiscard]] double component_variance() const noexcept { return variance_; }

  [[nodiscard]] ad::Var log_density(ad::Var x) const { return evaluate(x).log_density; }
  /// Log-density and score together; they share the responsibilities computation.
  [[nodiscard]] Evaluation evaluate(ad::Var x) const;

 private:
  std::size_t dim_;
  std::vector<double> means_;
  std::vector<double> means_t_;  // dim x components
  double variance_;
  std::vector<double> weights_;
  std::vector<double> log_weights_;
};

/// Diagonal Gaussian initial density N(mean, variance I).
class GaussianInitial {
 public:
  GaussianInitial(std::vector<double> mean, double variance);

  [[nodiscard]] std::size_t dim() const noexcept { return mean_.size(); }
  [[nodiscard]] const std::vector<double>& mean() const noexcept { return mean_; }
  [[nodiscard]] double variance() const noexcept { return variance_; }

  [[nodiscard]] ad::Var log_density(ad::Var x) const;
  [[nodiscard]] ad::Var score(ad::Var x) const;
  /// mean + sqrt(variance) * noise, one row per particle; `noise` holds count * dim standard normals.
  [[nodiscard]] ad::Var sample(ad::Tape& tape, std::span<const double> noise) const;
  [[nodiscard]] std::vector<double> sample(std::size_t count, CounterEngine& engine) const;

 private:
  std::vector<double> mean_;
  double variance_;
};

/// Annealing exponents beta_0 = 0 < beta_1 < ... < beta_K = 1 as scalars on a tape.
class AnnealPath {
 public:
  AnnealPath() = default;

  /// beta_k = sum_{j <= k} softmax(raw)_j for 0 < k < K, with both endpoints pinned to exact
  /// constants. `raw` is K x 1.
  static AnnealPath build(ad::Var raw);

  [[nodiscard]] std::size_t steps() const noexcept { return betas_.size() - 1; }
  [[nodiscard]] ad::Var beta(std::size_t k) const { return betas_.at(k); }
  [[nodiscard]] std::vector<double> values() const;

 private:
  explicit AnnealPath(std::vector<ad::Var> betas) : betas_{std::move(betas)} {}

  std::vector<ad::Var> betas_;
};

/// Per-point quantities from which any intermediate density is assembled.
struct DensityTerms {
  ad::Var points;
  ad::Var log_initial;
  ad::Var score_initial;
  ad::Var log_target;
  ad::Var score_target;
};

/// log gamma_k = (1 - beta_k) log q + beta_k log p, interpolating between initial q and target p.
class AnnealedDensity {
 public:
  AnnealedDensity(const GaussianInitial& initial, const GaussianMixtureTarget& target, AnnealPath path)
      : initial_{&initial}, target_{&target}, path_{std::move(path)} {}

  [[nodiscard]] DensityTerms terms(ad::Var x) const;
  [[nodiscard]] ad::Var log_density(const DensityTerms& terms, std::size_t k) const;
  [[nodiscard]] ad::Var score(const DensityTerms& terms, std::size_t k) const;
  [[nodiscard]] ad::Var log_density(ad::Var x, std::size_t k) const { return log_density(terms(x), k); }

  [[nodiscard]] const AnnealPath& path() const noexcept { return path_; }
  [[nodiscard]] const GaussianInitial& initial() const noexcept { return *initial_; }
  [[nodiscard]] const GaussianMixtureTarget& target() const noexcept { return *target_; }

 private:
  const GaussianInitial* initial_;
  const GaussianMixtureTarget* target_;
  AnnealPath path_;
};

}  // namespace dsmcs

#endif
