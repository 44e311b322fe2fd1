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

#ifndef DSMCS_AUTODIFF_HPP
#define DSMCS_AUTODIFF_HPP

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

/**
 * \file
 * \brief Define-by-run reverse-mode automatic differentiation over dense row-major matrices.
 *
 * Every value lives on a Tape as a node holding a rows x cols block of doubles. Nodes are
 * appended in evaluation order, so the node list is already topologically sorted and the
 * backward pass is a single reverse sweep. Constants are ordinary nodes that do not require
 * gradients; nothing upstream of them is ever visited.
 */

namespace dsmcs::ad {

using NodeId = std::uint32_t;

struct Shape {
  std::size_t rows{1};
  std::size_t cols{1};

  [[nodiscard]] constexpr std::size_t size() const noexcept { return rows * cols; }
  [[nodiscard]] constexpr bool is_scalar() const noexcept { return rows == 1 && cols == 1; }
  friend constexpr bool operator==(Shape, Shape) = default;
};

/// Raised when a primitive is evaluated outside its domain (log of a non-positive value, ...).
class DomainError : public std::domain_error {
 public:
  DomainError(std::string_view op, NodeId node, const std::string& detail);

  [[nodiscard]] const std::string& op() const noexcept { return op_; }
  [[nodiscard]] NodeId node() const noexcept { return node_; }

 private:
  std::string op_;
  NodeId node_;
};

class Tape;
class BackwardContext;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
class Var {
 public:
  Var() = default;

  [[nodiscard]] Tape& tape() const;
  [[nodiscard]] NodeId id() const noexcept { return id_; }
  [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }
  [[nodiscard]] Shape shape() const;
  [[nodiscard]] std::size_t rows() const { return shape().rows; }
  [[nodiscard]] std::size_t cols() const { return shape().cols; }
  [[nodiscard]] std::size_t size() const { return shape().size(); }
  [[nodiscard]] std::span<const double> value() const;
  [[nodiscard]] double scalar() const;
  [[nodiscard]] double at(std::size_t row, std::size_t col = 0) const;
  [[nodiscard]] bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, NodeId id) : tape_{tape}, id_{id} {}

  Tape* tape_{nullptr};
  NodeId id_{0};
};

/// Adjoints produced by a backward sweep, indexed by node.
class Gradients {
 public:
  /// Gradient of the root with respect to `v`; all zeros when nothing flowed into it.
  [[nodiscard]] std::vector<double> of(Var v) const;
  /// True when some nonzero adjoint reached `v`'s node.
  [[nodiscard]] bool reached(Var v) const;

 private:
  friend class Tape;
  std::vector<std::vector<double>> adjoints_;
  std::vector<Shape> shapes_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  /// Leaf that gradients are taken with respect to.
  Var variable(Shape shape, std::vector<double> value);
  Var variable(double value) { return variable({1, 1}, {value}); }
  /// Leaf that never receives gradients.
  Var constant(Shape shape, std::vector<double> value);
  Var constant(double value) { return constant({1, 1}, {value}); }
  Var filled(Shape shape, double value) { return constant(shape, std::vector<double>(shape.size(), value)); }

  /// Appends a primitive. `backward` is only stored (and later run) when some input requires
  /// gradients.
  Var record(std::string_view op, Shape shape, std::vector<double> value, std::initializer_list<Var> inputs,
             BackwardFn backward);

  /// Reverse sweep from a scalar root. Deterministic given the tape contents.
  [[nodiscard]] Gradients backward(Var root) const;

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
  [[nodiscard]] NodeId next_id() const noexcept { return static_cast<NodeId>(nodes_.size()); }
  [[nodiscard]] std::string_view op_name(NodeId id) const { return nodes_.at(id).op; }

 private:
  friend class Var;
  friend class BackwardContext;

  struct Node {
    std::string_view op;
    Shape shape;
    std::vector<double> value;
    bool requires_grad{false};
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
};

/// View handed to a primitive's backward rule.
class BackwardContext {
 public:
  /// Adjoint of the node being processed.
  [[nodiscard]] std::span<const double> grad_out() const noexcept { return grad_out_; }
  /// Mutable adjoint buffer of an input, zero-initialised on first use. Empty if the input does
  /// not require gradients, in which case the rule should skip that input.
  [[nodiscard]] std::span<double> grad(Var input);
  [[nodiscard]] bool wants(Var input) const { return input.requires_grad(); }
  [[nodiscard]] std::span<const double> out_value() const;

 private:
  friend class Tape;
  BackwardContext(const Tape& tape, std::vector<std::vector<double>>& adjoints, NodeId self)
      : tape_{tape}, adjoints_{adjoints}, self_{self} {}

  const Tape& tape_;
  std::vector<std::vector<double>>& adjoints_;
  NodeId self_;
  std::span<const double> grad_out_;
};

// Elementwise arithmetic. Binary operations broadcast along any dimension of extent 1.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add(Var a, double b);
Var mul(Var a, double b);
Var add(double a, Var b);
Var sub(double a, Var b);
Var mul(double a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator+(Var a, double b) { return add(a, b); }
inline Var operator+(double a, Var b) { return add(a, b); }
inline Var operator-(Var a, double b) { return add(a, -b); }
inline Var operator-(double a, Var b) { return sub(a, b); }
inline Var operator*(Var a, double b) { return mul(a, b); }
inline Var operator*(double a, Var b) { return mul(a, b); }

Var neg(Var x);
inline Var operator-(Var x) { return neg(x); }
Var exp(Var x);
Var log(Var x);
Var sqrt(Var x);
Var square(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var relu(Var x);

/// Sum of all entries, 1x1.
Var sum(Var x);
/// Sum over columns, rows x 1.
Var row_sum(Var x);
Var mean(Var x);
/// Inner product of two equally shaped blocks, 1x1.
Var dot(Var a, Var b);

/// Overflow-safe log(sum(exp(x))) over all entries, 1x1.
Var logsumexp(Var x);
/// Overflow-safe logsumexp of each row, rows x 1.
Var row_logsumexp(Var x);
/// Softmax over all entries.
Var softmax(Var x);
/// Softmax of each row independently.
Var row_softmax(Var x);
/// Running sum over entries in row-major order.
Var cumsum(Var x);

/// (1 - t) a + t b for equally shaped a, b and a 1x1 weight t.
Var lerp(Var a, Var b, Var t);
/// y + alpha x for equally shaped x, y and a 1x1 alpha.
Var axpy(Var alpha, Var x, Var y);

Var matmul(Var a, Var b);
/// x W + b with b broadcast over rows.
Var affine(Var x, Var weight, Var bias);
Var transpose(Var x);

/// Rows of `x` selected by `indices` (repeats allowed).
Var gather_rows(Var x, std::span<const std::size_t> indices);
/// Single entry of `x` in row-major order, 1x1.
Var element(Var x, std::size_t index);

/// Forward identity, backward zero.
Var stop_gradient(Var x);
/// Forward and backward identity; gives a distinct node to read adjoints from.
Var identity(Var x);

/// Row-wise log N(x_i | mean_i, variance I). `mean` broadcasts against `x`; `variance` is 1x1.
Var gaussian_log_density(Var x, Var mean, Var variance);
/// Matrix of squared Euclidean distances between rows of `x` (r x n) and rows of `centers` (m x n).
Var pairwise_sq_dist(Var x, Var centers);

/// Central finite-difference audit of tape gradients.
///
/// Evaluates `f` on a fresh tape at `x`, backpropagates, and compares every coordinate with
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps). Returns max_i |fd_i - g_i| / (|g_i| + 1e-8).
using ScalarFn = std::function<Var(Tape&, Var)>;
double finite_difference_check(const ScalarFn& f, std::span<const double> x, double eps);

}  // namespace dsmcs::ad

#endif
