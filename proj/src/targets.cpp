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

#include "dsmcs/targets.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace dsmcs {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace

GaussianMixtureTarget::GaussianMixtureTarget(std::size_t dim, std::vector<double> means, double component_variance,
                                             std::vector<double> weights)
    : dim_{dim}, means_{std::move(means)}, variance_{component_variance}, weights_{std::move(weights)} {
  if (dim_ == 0 || means_.empty() || means_.size() % dim_ != 0) {
    throw std::invalid_argument{"GaussianMixtureTarget: means must be a non-empty components x dim block"};
  }
  if (!(variance_ > 0.0)) {
    throw std::invalid_argument{"GaussianMixtureTarget: component variance must be positive"};
  }
  const auto m = means_.size() / dim_;
  if (weights_.empty()) {
    weights_.assign(m, 1.0 / static_cast<double>(m));
  }
  if (weights_.size() != m) {
    throw std::invalid_argument{"GaussianMixtureTarget: one weight per component required"};
  }
  const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument{"GaussianMixtureTarget: weights must sum to one"};
  }
  means_t_.resize(means_.size());
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t j = 0; j < dim_; ++j) {
      means_t_[j * m + c] = means_[c * dim_ + j];
    }
  }
  log_weights_.reserve(m);
  for (double w : weights_) {
    if (!(w > 0.0)) {
      throw std::invalid_argument{"GaussianMixtureTarget: weights must be positive"};
    }
    log_weights_.push_back(std::log(w));
  }
}

GaussianMixtureTarget GaussianMixtureTarget::with_random_means(std::size_t dim, std::size_t components,
                                                               std::uint64_t mean_seed, double component_variance,
                                                               double center) {
  CounterEngine engine{StreamKey{mean_seed}.child(0x6d65616e73ULL)};
  std::vector<double> means(dim * components);
  for (auto& x : means) {
    x = center + engine.normal();
  }
  return GaussianMixtureTarget{dim, std::move(means), component_variance};
}

GaussianMixtureTarget::Evaluation GaussianMixtureTarget::evaluate(ad::Var x) const {
  if (x.cols() != dim_) {
    throw std::invalid_argument{"GaussianMixtureTarget: point dimension mismatch"};
  }
  auto& tape = x.tape();
  const auto rows = x.rows();
  const auto n = dim_;
  const auto m = components();
  const double inv_var = 1.0 / variance_;
  const double norm = -0.5 * static_cast<double>(n) * (kLog2Pi + std::log(variance_));
  const auto xv = x.value();

  // Responsibilities r_im = softmax_m(log w_m + log N(x_i | mu_m, s^2 I)), shared by both nodes.
  auto resp = std::make_shared<std::vector<double>>(rows * m);
  std::vector<double> log_density(rows);
  std::vector<double> score(rows * n);
  std::vector<double> joint(m);
  const double* mt = means_t_.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xi = &xv[i * n];
    std::fill(joint.begin(), joint.end(), 0.0);
    // Component index innermost: independent accumulators vectorise without reassociation.
    for (std::size_t j = 0; j < n; ++j) {
      const double xj = xi[j];
      const double* row = &mt[j * m];
      for (std::size_t c = 0; c < m; ++c) {
        const double d = xj - row[c];
        joint[c] += d * d;
      }
    }
    for (std::size_t c = 0; c < m; ++c) {
      joint[c] = log_weights_[c] + norm - 0.5 * inv_var * joint[c];
    }
    const double hi = *std::max_element(joint.begin(), joint.end());
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      total += std::exp(joint[c] - hi);
    }
    const double lse = hi + std::log(total);
    log_density[i] = lse;
    double* ri = &(*resp)[i * m];
    double* si = &score[i * n];
    for (std::size_t j = 0; j < n; ++j) {
      si[j] = -xi[j];
    }
    for (std::size_t c = 0; c < m; ++c) {
      ri[c] = std::exp(joint[c] - lse);
      const double* mu = &means_[c * n];
      for (std::size_t j = 0; j < n; ++j) {
        si[j] += ri[c] * mu[j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      si[j] *= inv_var;
    }
  }

  const auto* means = &means_;
  auto score_node = tape.record(
      "mixture_score", {rows, n}, std::move(score), {x},
      [x, resp, means, mt, rows, n, m, inv_var](ad::BackwardContext& ctx) {
        // d/dx of (sum_m r_m mu_m - x) / s^2 contracted with G:
        //   -G / s^2 + sum_m r_m (a_m - sum_j r_j a_j) mu_m / s^4, with a_m = G . mu_m.
        const auto g = ctx.grad_out();
        auto gx = ctx.grad(x);
        if (gx.empty()) {
          return;
        }
        std::vector<double> a(m);
        for (std::size_t i = 0; i < rows; ++i) {
          const double* gi = &g[i * n];
          const double* ri = &(*resp)[i * m];
          std::fill(a.begin(), a.end(), 0.0);
          for (std::size_t j = 0; j < n; ++j) {
            const double gj = gi[j];
            const double* row = &mt[j * m];
            for (std::size_t c = 0; c < m; ++c) {
              a[c] += gj * row[c];
            }
          }
          double mean_a = 0.0;
          for (std::size_t c = 0; c < m; ++c) {
            mean_a += ri[c] * a[c];
          }
          double* out = &gx[i * n];
          for (std::size_t j = 0; j < n; ++j) {
            out[j] -= inv_var * gi[j];
          }
          for (std::size_t c = 0; c < m; ++c) {
            const double coeff = ri[c] * (a[c] - mean_a) * inv_var * inv_var;
            if (coeff == 0.0) {
              continue;
            }
            const double* mu = &(*means)[c * n];
            for (std::size_t j = 0; j < n; ++j) {
              out[j] += coeff * mu[j];
            }
          }
        }
      });
  auto log_node = tape.record("mixture_log_density", {rows, 1}, std::move(log_density), {x},
                              [x, score_node, rows, n](ad::BackwardContext& ctx) {
                                const auto h = ctx.grad_out();
                                auto gx = ctx.grad(x);
                                if (gx.empty()) {
                                  return;
                                }
                                const auto s = score_node.value();
                                for (std::size_t i = 0; i < rows; ++i) {
                                  for (std::size_t j = 0; j < n; ++j) {
                                    gx[i * n + j] += h[i] * s[i * n + j];
                                  }
                                }
                              });
  return {log_node, score_node};
}

GaussianInitial::GaussianInitial(std::vector<double> mean, double variance)
    : mean_{std::move(mean)}, variance_{variance} {
  if (mean_.empty()) {
    throw std::invalid_argument{"GaussianInitial: dimension must be positive"};
  }
  if (!(variance_ > 0.0)) {
    throw std::invalid_argument{"GaussianInitial: variance must be positive"};
  }
}

ad::Var GaussianInitial::log_density(ad::Var x) const {
  auto& tape = x.tape();
  return ad::gaussian_log_density(x, tape.constant({1, dim()}, mean_), tape.constant(variance_));
}

ad::Var GaussianInitial::score(ad::Var x) const {
  if (x.cols() != dim()) {
    throw std::invalid_argument{"GaussianInitial: point dimension mismatch"};
  }
  const auto rows = x.rows();
  const auto n = dim();
  const double inv_var = 1.0 / variance_;
  const auto xv = x.value();
  std::vector<double> out(rows * n);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = (mean_[j] - xv[i * n + j]) * inv_var;
    }
  }
  return x.tape().record("initial_score", x.shape(), std::move(out), {x}, [x, inv_var](ad::BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    auto gx = ctx.grad(x);
    for (std::size_t k = 0; k < gx.size(); ++k) {
      gx[k] -= inv_var * g[k];
    }
  });
}

ad::Var GaussianInitial::sample(ad::Tape& tape, std::span<const double> noise) const {
  if (noise.size() % dim() != 0) {
    throw std::invalid_argument{"GaussianInitial::sample: noise is not a whole number of rows"};
  }
  const auto rows = noise.size() / dim();
  const double scale = std::sqrt(variance_);
  std::vector<double> points(noise.size());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < dim(); ++j) {
      points[i * dim() + j] = mean_[j] + scale * noise[i * dim() + j];
    }
  }
  return tape.constant({rows, dim()}, std::move(points));
}

std::vector<double> GaussianInitial::sample(std::size_t count, CounterEngine& engine) const {
  ad::Tape tape;
  const auto points = sample(tape, engine.normals(count * dim())).value();
  return {points.begin(), points.end()};
}

AnnealPath AnnealPath::build(ad::Var raw) {
  auto& tape = raw.tape();
  const auto steps = raw.size();
  if (steps == 0) {
    throw std::invalid_argument{"AnnealPath: at least one annealing step required"};
  }
  std::vector<ad::Var> betas;
  betas.reserve(steps + 1);
  betas.push_back(tape.constant(0.0));
  if (steps > 1) {
    auto increments = ad::softmax(raw);
    auto partial = ad::cumsum(increments);
    for (std::size_t k = 1; k < steps; ++k) {
      betas.push_back(ad::element(partial, k - 1));
    }
  }
  betas.push_back(tape.constant(1.0));
  return AnnealPath{std::move(betas)};
}

std::vector<double> AnnealPath::values() const {
  std::vector<double> out;
  out.reserve(betas_.size());
  for (const auto& b : betas_) {
    out.push_back(b.scalar());
  }
  return out;
}

DensityTerms AnnealedDensity::terms(ad::Var x) const {
  auto target = target_->evaluate(x);
  return {x, initial_->log_density(x), initial_->score(x), target.log_density, target.score};
}

ad::Var AnnealedDensity::log_density(const DensityTerms& terms, std::size_t k) const {
  return ad::lerp(terms.log_initial, terms.log_target, path_.beta(k));
}

ad::Var AnnealedDensity::score(const DensityTerms& terms, std::size_t k) const {
  return ad::lerp(terms.score_initial, terms.score_target, path_.beta(k));
}

}  // namespace dsmcs
