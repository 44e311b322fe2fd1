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

#include "dsmcs/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace dsmcs::ad {

DomainError::DomainError(std::string_view op, NodeId node, const std::string& detail)
    : std::domain_error{[&] {
        std::ostringstream os;
        os << "domain error in primitive '" << op << "' (node " << node << "): " << detail;
        return os.str();
      }()},
      op_{op},
      node_{node} {}

Tape& Var::tape() const {
  if (tape_ == nullptr) {
    throw std::logic_error{"Var is not attached to a tape"};
  }
  return *tape_;
}

Shape Var::shape() const { return tape().nodes_[id_].shape; }

std::span<const double> Var::value() const { return tape().nodes_[id_].value; }

double Var::scalar() const {
  const auto& node = tape().nodes_[id_];
  if (!node.shape.is_scalar()) {
    throw std::logic_error{"Var::scalar called on a non-scalar node"};
  }
  return node.value[0];
}

double Var::at(std::size_t row, std::size_t col) const {
  const auto& node = tape().nodes_[id_];
  return node.value.at(row * node.shape.cols + col);
}

bool Var::requires_grad() const { return tape().nodes_[id_].requires_grad; }

std::vector<double> Gradients::of(Var v) const {
  const auto id = v.id();
  if (id < adjoints_.size() && !adjoints_[id].empty()) {
    return adjoints_[id];
  }
  return std::vector<double>(v.size(), 0.0);
}

bool Gradients::reached(Var v) const {
  const auto id = v.id();
  if (id >= adjoints_.size()) {
    return false;
  }
  return std::any_of(adjoints_[id].begin(), adjoints_[id].end(), [](double g) { return g != 0.0; });
}

Var Tape::variable(Shape shape, std::vector<double> value) {
  if (value.size() != shape.size()) {
    throw std::invalid_argument{"variable: value size does not match shape"};
  }
  nodes_.push_back(Node{"variable", shape, std::move(value), true, {}});
  return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
}

Var Tape::constant(Shape shape, std::vector<double> value) {
  if (value.size() != shape.size()) {
    throw std::invalid_argument{"constant: value size does not match shape"};
  }
  nodes_.push_back(Node{"constant", shape, std::move(value), false, {}});
  return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
}

Var Tape::record(std::string_view op, Shape shape, std::vector<double> value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  bool requires_grad = false;
  for (const auto& input : inputs) {
    if (input.tape_ != this) {
      throw std::invalid_argument{"record: inputs belong to a different tape"};
    }
    requires_grad = requires_grad || nodes_[input.id_].requires_grad;
  }
  nodes_.push_back(Node{op, shape, std::move(value), requires_grad, requires_grad ? std::move(backward) : BackwardFn{}});
  return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
}

Gradients Tape::backward(Var root) const {
  if (root.tape_ != this) {
    throw std::invalid_argument{"backward: root belongs to a different tape"};
  }
  if (!nodes_[root.id_].shape.is_scalar()) {
    throw std::invalid_argument{"backward: root must be scalar"};
  }
  Gradients result;
  result.adjoints_.resize(root.id_ + 1);
  result.shapes_.reserve(root.id_ + 1);
  for (NodeId i = 0; i <= root.id_; ++i) {
    result.shapes_.push_back(nodes_[i].shape);
  }
  result.adjoints_[root.id_] = {1.0};
  for (NodeId i = root.id_ + 1; i-- > 0;) {
    const auto& node = nodes_[i];
    if (!node.backward || result.adjoints_[i].empty()) {
      continue;
    }
    BackwardContext ctx{*this, result.adjoints_, i};
    ctx.grad_out_ = result.adjoints_[i];
    node.backward(ctx);
  }
  return result;
}

std::span<double> BackwardContext::grad(Var input) {
  const auto& node = tape_.nodes_[input.id()];
  if (!node.requires_grad) {
    return {};
  }
  auto& buffer = adjoints_[input.id()];
  if (buffer.empty()) {
    buffer.assign(node.shape.size(), 0.0);
  }
  return buffer;
}

std::span<const double> BackwardContext::out_value() const { return tape_.nodes_[self_].value; }

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Tape& common_tape(Var a, Var b) {
  auto& tape = a.tape();
  if (&tape != &b.tape()) {
    throw std::invalid_argument{"operands belong to different tapes"};
  }
  return tape;
}

// Index map for a broadcast operand: entry (i, j) of the output reads entry
// (i * row_step, j * col_step) of the operand.
struct Broadcast {
  std::size_t row_step;
  std::size_t col_step;
  std::size_t cols;

  [[nodiscard]] std::size_t index(std::size_t i, std::size_t j) const noexcept {
    return i * row_step * cols + j * col_step;
  }
};

Shape broadcast_shape(std::string_view op, Shape a, Shape b) {
  auto dim = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) {
      return x;
    }
    if (x == 1) {
      return y;
    }
    std::ostringstream os;
    os << op << ": incompatible shapes " << a.rows << "x" << a.cols << " and " << b.rows << "x" << b.cols;
    throw std::invalid_argument{os.str()};
  };
  return {dim(a.rows, b.rows), dim(a.cols, b.cols)};
}

Broadcast broadcast_of(Shape operand) {
  return {operand.rows == 1 ? 0U : 1U, operand.cols == 1 ? 0U : 1U, operand.cols};
}

// Generic binary elementwise primitive. `fwd(a, b)` computes the value, `da(a, b, out)` and
// `db(a, b, out)` the local partials.
template <class Fwd, class Da, class Db>
Var binary(std::string_view op, Var a, Var b, Fwd fwd, Da da, Db db) {
  auto& tape = common_tape(a, b);
  const auto sa = a.shape();
  const auto sb = b.shape();
  const auto shape = broadcast_shape(op, sa, sb);
  const auto ba = broadcast_of(sa);
  const auto bb = broadcast_of(sb);
  const auto va = a.value();
  const auto vb = b.value();
  std::vector<double> out(shape.size());
  if (sa == shape && sb == shape) {
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k] = fwd(va[k], vb[k]);
    }
  } else if (sa == shape && sb.size() == 1) {
    const double y = vb[0];
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k] = fwd(va[k], y);
    }
  } else if (sb == shape && sa.size() == 1) {
    const double x = va[0];
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k] = fwd(x, vb[k]);
    }
  } else {
    for (std::size_t i = 0; i < shape.rows; ++i) {
      for (std::size_t j = 0; j < shape.cols; ++j) {
        out[i * shape.cols + j] = fwd(va[ba.index(i, j)], vb[bb.index(i, j)]);
      }
    }
  }
  return tape.record(op, shape, std::move(out), {a, b}, [=](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    const auto o = ctx.out_value();
    const auto xa = a.value();
    const auto xb = b.value();
    auto ga = ctx.grad(a);
    auto gb = ctx.grad(b);
    const auto n = g.size();
    if (sa == shape && (sb == shape || sb.size() == 1)) {
      const bool scalar_b = sb.size() == 1;
      if (!ga.empty()) {
        for (std::size_t k = 0; k < n; ++k) {
          ga[k] += g[k] * da(xa[k], xb[scalar_b ? 0 : k], o[k]);
        }
      }
      if (!gb.empty()) {
        if (scalar_b) {
          double acc = 0.0;
          for (std::size_t k = 0; k < n; ++k) {
            acc += g[k] * db(xa[k], xb[0], o[k]);
          }
          gb[0] += acc;
        } else {
          for (std::size_t k = 0; k < n; ++k) {
            gb[k] += g[k] * db(xa[k], xb[k], o[k]);
          }
        }
      }
      return;
    }
    if (sb == shape && sa.size() == 1) {
      if (!gb.empty()) {
        for (std::size_t k = 0; k < n; ++k) {
          gb[k] += g[k] * db(xa[0], xb[k], o[k]);
        }
      }
      if (!ga.empty()) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          acc += g[k] * da(xa[0], xb[k], o[k]);
        }
        ga[0] += acc;
      }
      return;
    }
    for (std::size_t i = 0; i < shape.rows; ++i) {
      for (std::size_t j = 0; j < shape.cols; ++j) {
        const auto k = i * shape.cols + j;
        const auto ia = ba.index(i, j);
        const auto ib = bb.index(i, j);
        if (!ga.empty()) {
          ga[ia] += g[k] * da(xa[ia], xb[ib], o[k]);
        }
        if (!gb.empty()) {
          gb[ib] += g[k] * db(xa[ia], xb[ib], o[k]);
        }
      }
    }
  });
}

// Generic unary elementwise primitive; `dx(x, out)` is the local derivative.
template <class Fwd, class Dx>
Var unary(std::string_view op, Var x, Fwd fwd, Dx dx) {
  auto& tape = x.tape();
  const auto vx = x.value();
  std::vector<double> out(vx.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = fwd(vx[k]);
  }
  return tape.record(op, x.shape(), std::move(out), {x}, [=](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    const auto o = ctx.out_value();
    const auto xv = x.value();
    auto gx = ctx.grad(x);
    for (std::size_t k = 0; k < gx.size(); ++k) {
      gx[k] += g[k] * dx(xv[k], o[k]);
    }
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logsumexp_span(std::span<const double> xs) {
  const double hi = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(hi)) {
    return hi;
  }
  double acc = 0.0;
  for (double x : xs) {
    acc += std::exp(x - hi);
  }
  return hi + std::log(acc);
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
  const auto vb = b.value();
  if (std::any_of(vb.begin(), vb.end(), [](double y) { return y == 0.0; })) {
    throw DomainError{"div", a.tape().next_id(), "division by zero"};
  }
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Var add(Var a, double b) { return add(a, a.tape().constant(b)); }
Var mul(Var a, double b) { return mul(a, a.tape().constant(b)); }
Var add(double a, Var b) { return add(b.tape().constant(a), b); }
Var sub(double a, Var b) { return sub(b.tape().constant(a), b); }
Var mul(double a, Var b) { return mul(b.tape().constant(a), b); }

Var neg(Var x) {
  return unary(
      "neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Var exp(Var x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double o) { return o; });
}

Var log(Var x) {
  const auto vx = x.value();
  if (std::any_of(vx.begin(), vx.end(), [](double v) { return !(v > 0.0); })) {
    throw DomainError{"log", x.tape().next_id(), "argument must be positive"};
  }
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var sqrt(Var x) {
  const auto vx = x.value();
  if (std::any_of(vx.begin(), vx.end(), [](double v) { return !(v >= 0.0); })) {
    throw DomainError{"sqrt", x.tape().next_id(), "argument must be non-negative"};
  }
  return unary(
      "sqrt", x, [](double v) { return std::sqrt(v); }, [](double, double o) { return 0.5 / o; });
}

Var square(Var x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var tanh(Var x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); }, [](double, double o) { return 1.0 - o * o; });
}

Var sigmoid(Var x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double o) { return o * (1.0 - o); });
}

Var relu(Var x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sum(Var x) {
  const auto vx = x.value();
  double total = 0.0;
  for (double v : vx) {
    total += v;
  }
  return x.tape().record("sum", {1, 1}, {total}, {x}, [x](BackwardContext& ctx) {
    const double g = ctx.grad_out()[0];
    for (auto& gx : ctx.grad(x)) {
      gx += g;
    }
  });
}

Var row_sum(Var x) {
  const auto shape = x.shape();
  const auto vx = x.value();
  std::vector<double> out(shape.rows, 0.0);
  for (std::size_t i = 0; i < shape.rows; ++i) {
    for (std::size_t j = 0; j < shape.cols; ++j) {
      out[i] += vx[i * shape.cols + j];
    }
  }
  return x.tape().record("row_sum", {shape.rows, 1}, std::move(out), {x}, [x, shape](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    auto gx = ctx.grad(x);
    for (std::size_t i = 0; i < shape.rows; ++i) {
      for (std::size_t j = 0; j < shape.cols; ++j) {
        gx[i * shape.cols + j] += g[i];
      }
    }
  });
}

Var mean(Var x) { return mul(sum(x), 1.0 / static_cast<double>(x.size())); }

Var dot(Var a, Var b) {
  auto& tape = common_tape(a, b);
  if (a.shape() != b.shape()) {
    throw std::invalid_argument{"dot: shape mismatch"};
  }
  const auto va = a.value();
  const auto vb = b.value();
  double total = 0.0;
  for (std::size_t k = 0; k < va.size(); ++k) {
    total += va[k] * vb[k];
  }
  return tape.record("dot", {1, 1}, {total}, {a, b}, [a, b](BackwardContext& ctx) {
    const double g = ctx.grad_out()[0];
    const auto xa = a.value();
    const auto xb = b.value();
    auto ga = ctx.grad(a);
    auto gb = ctx.grad(b);
    for (std::size_t k = 0; k < ga.size(); ++k) {
      ga[k] += g * xb[k];
    }
    for (std::size_t k = 0; k < gb.size(); ++k) {
      gb[k] += g * xa[k];
    }
  });
}

Var logsumexp(Var x) {
  const double out = logsumexp_span(x.value());
  return x.tape().record("logsumexp", {1, 1}, {out}, {x}, [x](BackwardContext& ctx) {
    const double g = ctx.grad_out()[0];
    const double lse = ctx.out_value()[0];
    const auto vx = x.value();
    auto gx = ctx.grad(x);
    for (std::size_t k = 0; k < gx.size(); ++k) {
      gx[k] += g * std::exp(vx[k] - lse);
    }
  });
}

Var row_logsumexp(Var x) {
  const auto shape = x.shape();
  const auto vx = x.value();
  std::vector<double> out(shape.rows);
  for (std::size_t i = 0; i < shape.rows; ++i) {
    out[i] = logsumexp_span(vx.subspan(i * shape.cols, shape.cols));
  }
  return x.tape().record("row_logsumexp", {shape.rows, 1}, std::move(out), {x}, [x, shape](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    const auto lse = ctx.out_value();
    const auto vx = x.value();
    auto gx = ctx.grad(x);
    for (std::size_t i = 0; i < shape.rows; ++i) {
      for (std::size_t j = 0; j < shape.cols; ++j) {
        const auto k = i * shape.cols + j;
        gx[k] += g[i] * std::exp(vx[k] - lse[i]);
      }
    }
  });
}

namespace {

void softmax_rows(std::span<const double> in, std::span<double> out, Shape shape) {
  for (std::size_t i = 0; i < shape.rows; ++i) {
    const auto row = in.subspan(i * shape.cols, shape.cols);
    const double hi = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t j = 0; j < shape.cols; ++j) {
      const double e = std::exp(row[j] - hi);
      out[i * shape.cols + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < shape.cols; ++j) {
      out[i * shape.cols + j] /= total;
    }
  }
}

Var softmax_impl(std::string_view op, Var x, Shape blocks) {
  const auto shape = x.shape();
  std::vector<double> out(shape.size());
  softmax_rows(x.value(), out, blocks);
  return x.tape().record(op, shape, std::move(out), {x}, [x, blocks](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    const auto s = ctx.out_value();
    auto gx = ctx.grad(x);
    for (std::size_t i = 0; i < blocks.rows; ++i) {
      const auto base = i * blocks.cols;
      double inner = 0.0;
      for (std::size_t j = 0; j < blocks.cols; ++j) {
        inner += g[base + j] * s[base + j];
      }
      for (std::size_t j = 0; j < blocks.cols; ++j) {
        gx[base + j] += s[base + j] * (g[base + j] - inner);
      }
    }
  });
}

}  // namespace

Var softmax(Var x) { return softmax_impl("softmax", x, {1, x.size()}); }

Var row_softmax(Var x) { return softmax_impl("row_softmax", x, x.shape()); }

Var cumsum(Var x) {
  const auto vx = x.value();
  std::vector<double> out(vx.size());
  double running = 0.0;
  for (std::size_t k = 0; k < vx.size(); ++k) {
    running += vx[k];
    out[k] = running;
  }
  return x.tape().record("cumsum", x.shape(), std::move(out), {x}, [x](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    auto gx = ctx.grad(x);
    double running = 0.0;
    for (std::size_t k = gx.size(); k-- > 0;) {
      running += g[k];
      gx[k] += running;
    }
  });
}

Var lerp(Var a, Var b, Var t) {
  auto& tape = common_tape(a, b);
  const auto shape = a.shape();
  if (b.shape() != shape || t.size() != 1) {
    throw std::invalid_argument{"lerp: operands must share a shape and the weight must be 1x1"};
  }
  const auto va = a.value();
  const auto vb = b.value();
  const double w = t.scalar();
  std::vector<double> out(shape.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = (1.0 - w) * va[k] + w * vb[k];
  }
  return tape.record("lerp", shape, std::move(out), {a, b, t}, [a, b, t](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    const double w = t.scalar();
    if (auto ga = ctx.grad(a); !ga.empty()) {
      for (std::size_t k = 0; k < g.size(); ++k) {
        ga[k] += (1.0 - w) * g[k];
      }
    }
    if (auto gb = ctx.grad(b); !gb.empty()) {
      for (std::size_t k = 0; k < g.size(); ++k) {
        gb[k] += w * g[k];
      }
    }
    if (auto gt = ctx.grad(t); !gt.empty()) {
      const auto va = a.value();
      const auto vb = b.value();
      double acc = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        acc += g[k] * (vb[k] - va[k]);
      }
      gt[0] += acc;
    }
  });
}

Var axpy(Var alpha, Var x, Var y) {
  auto& tape = common_tape(x, y);
  const auto shape = x.shape();
  if (y.shape() != shape || alpha.size() != 1) {
    throw std::invalid_argument{"axpy: operands must share a shape and the scale must be 1x1"};
  }
  const auto vx = x.value();
  const auto vy = y.value();
  const double s = alpha.scalar();
  std::vector<double> out(shape.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = vy[k] + s * vx[k];
  }
  return tape.record("axpy", shape, std::move(out), {alpha, x, y}, [alpha, x, y](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    const double s = alpha.scalar();
    if (auto gx = ctx.grad(x); !gx.empty()) {
      for (std::size_t k = 0; k < g.size(); ++k) {
        gx[k] += s * g[k];
      }
    }
    if (auto gy = ctx.grad(y); !gy.empty()) {
      for (std::size_t k = 0; k < g.size(); ++k) {
        gy[k] += g[k];
      }
    }
    if (auto ga = ctx.grad(alpha); !ga.empty()) {
      const auto vx = x.value();
      double acc = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        acc += g[k] * vx[k];
      }
      ga[0] += acc;
    }
  });
}

Var matmul(Var a, Var b) {
  auto& tape = common_tape(a, b);
  const auto sa = a.shape();
  const auto sb = b.shape();
  if (sa.cols != sb.rows) {
    throw std::invalid_argument{"matmul: inner dimensions differ"};
  }
  const auto n = sa.rows;
  const auto m = sa.cols;
  const auto p = sb.cols;
  const auto va = a.value();
  const auto vb = b.value();
  std::vector<double> out(n * p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      const double aik = va[i * m + k];
      if (aik == 0.0) {
        continue;
      }
      const double* brow = &vb[k * p];
      double* orow = &out[i * p];
      for (std::size_t j = 0; j < p; ++j) {
        orow[j] += aik * brow[j];
      }
    }
  }
  return tape.record("matmul", {n, p}, std::move(out), {a, b}, [=](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    const auto xa = a.value();
    const auto xb = b.value();
    auto ga = ctx.grad(a);
    auto gb = ctx.grad(b);
    if (!ga.empty()) {
      // dA = G B^T, accumulated row by row of B^T so the inner loop is contiguous.
      std::vector<double> bt(m * p);
      for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t j = 0; j < p; ++j) {
          bt[j * m + k] = xb[k * p + j];
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        double* gai = &ga[i * m];
        for (std::size_t j = 0; j < p; ++j) {
          const double gij = g[i * p + j];
          if (gij == 0.0) {
            continue;
          }
          const double* btj = &bt[j * m];
          for (std::size_t k = 0; k < m; ++k) {
            gai[k] += gij * btj[k];
          }
        }
      }
    }
    if (!gb.empty()) {
      // dB = A^T G
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < m; ++k) {
          const double aik = xa[i * m + k];
          if (aik == 0.0) {
            continue;
          }
          for (std::size_t j = 0; j < p; ++j) {
            gb[k * p + j] += aik * g[i * p + j];
          }
        }
      }
    }
  });
}

Var affine(Var x, Var weight, Var bias) { return add(matmul(x, weight), bias); }

Var transpose(Var x) {
  const auto shape = x.shape();
  const auto vx = x.value();
  std::vector<double> out(shape.size());
  for (std::size_t i = 0; i < shape.rows; ++i) {
    for (std::size_t j = 0; j < shape.cols; ++j) {
      out[j * shape.rows + i] = vx[i * shape.cols + j];
    }
  }
  return x.tape().record("transpose", {shape.cols, shape.rows}, std::move(out), {x}, [x, shape](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    auto gx = ctx.grad(x);
    for (std::size_t i = 0; i < shape.rows; ++i) {
      for (std::size_t j = 0; j < shape.cols; ++j) {
        gx[i * shape.cols + j] += g[j * shape.rows + i];
      }
    }
  });
}

Var gather_rows(Var x, std::span<const std::size_t> indices) {
  const auto shape = x.shape();
  const auto vx = x.value();
  std::vector<double> out(indices.size() * shape.cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= shape.rows) {
      throw DomainError{"gather_rows", x.tape().next_id(), "row index out of range"};
    }
    std::copy_n(vx.begin() + static_cast<std::ptrdiff_t>(indices[r] * shape.cols), shape.cols,
                out.begin() + static_cast<std::ptrdiff_t>(r * shape.cols));
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return x.tape().record("gather_rows", {indices.size(), shape.cols}, std::move(out), {x},
                         [x, shape, idx = std::move(idx)](BackwardContext& ctx) {
                           const auto g = ctx.grad_out();
                           auto gx = ctx.grad(x);
                           for (std::size_t r = 0; r < idx.size(); ++r) {
                             for (std::size_t j = 0; j < shape.cols; ++j) {
                               gx[idx[r] * shape.cols + j] += g[r * shape.cols + j];
                             }
                           }
                         });
}

Var element(Var x, std::size_t index) {
  if (index >= x.size()) {
    throw DomainError{"element", x.tape().next_id(), "index out of range"};
  }
  return x.tape().record("element", {1, 1}, {x.value()[index]}, {x}, [x, index](BackwardContext& ctx) {
    ctx.grad(x)[index] += ctx.grad_out()[0];
  });
}

Var stop_gradient(Var x) {
  const auto vx = x.value();
  return x.tape().constant(x.shape(), std::vector<double>(vx.begin(), vx.end()));
}

Var identity(Var x) {
  const auto vx = x.value();
  return x.tape().record("identity", x.shape(), std::vector<double>(vx.begin(), vx.end()), {x},
                         [x](BackwardContext& ctx) {
                           const auto g = ctx.grad_out();
                           auto gx = ctx.grad(x);
                           for (std::size_t k = 0; k < gx.size(); ++k) {
                             gx[k] += g[k];
                           }
                         });
}

Var gaussian_log_density(Var x, Var mean, Var variance) {
  auto& tape = common_tape(x, mean);
  if (&tape != &variance.tape()) {
    throw std::invalid_argument{"gaussian_log_density: operands belong to different tapes"};
  }
  if (!variance.shape().is_scalar()) {
    throw std::invalid_argument{"gaussian_log_density: variance must be 1x1"};
  }
  const double var = variance.scalar();
  if (!(var > 0.0)) {
    throw DomainError{"gaussian_log_density", tape.next_id(), "variance must be positive"};
  }
  const auto shape = x.shape();
  if (broadcast_shape("gaussian_log_density", shape, mean.shape()) != shape) {
    throw std::invalid_argument{"gaussian_log_density: mean does not broadcast to x"};
  }
  const auto bm = broadcast_of(mean.shape());
  const auto vx = x.value();
  const auto vm = mean.value();
  const double norm = -0.5 * static_cast<double>(shape.cols) * (kLog2Pi + std::log(var));
  std::vector<double> out(shape.rows);
  for (std::size_t i = 0; i < shape.rows; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < shape.cols; ++j) {
      const double d = vx[i * shape.cols + j] - vm[bm.index(i, j)];
      sq += d * d;
    }
    out[i] = norm - 0.5 * sq / var;
  }
  return tape.record(
      "gaussian_log_density", {shape.rows, 1}, std::move(out), {x, mean, variance}, [=](BackwardContext& ctx) {
        const auto g = ctx.grad_out();
        const auto xv = x.value();
        const auto mv = mean.value();
        auto gx = ctx.grad(x);
        auto gm = ctx.grad(mean);
        auto gv = ctx.grad(variance);
        double dvar = 0.0;
        const auto cols = shape.cols;
        const bool row_mean = mean.cols() == cols;
        for (std::size_t i = 0; i < shape.rows; ++i) {
          if (g[i] == 0.0) {
            continue;
          }
          const double scale = -g[i] / var;
          double sq = 0.0;
          if (row_mean) {
            const double* xi = &xv[i * cols];
            const double* mi = &mv[bm.index(i, 0)];
            double* gxi = gx.empty() ? nullptr : &gx[i * cols];
            double* gmi = gm.empty() ? nullptr : &gm[bm.index(i, 0)];
            for (std::size_t j = 0; j < cols; ++j) {
              const double d = xi[j] - mi[j];
              sq += d * d;
            }
            if (gxi != nullptr) {
              for (std::size_t j = 0; j < cols; ++j) {
                gxi[j] += scale * (xi[j] - mi[j]);
              }
            }
            if (gmi != nullptr) {
              for (std::size_t j = 0; j < cols; ++j) {
                gmi[j] -= scale * (xi[j] - mi[j]);
              }
            }
          } else {
            for (std::size_t j = 0; j < cols; ++j) {
              const auto k = i * cols + j;
              const double d = xv[k] - mv[bm.index(i, j)];
              sq += d * d;
              if (!gx.empty()) {
                gx[k] += scale * d;
              }
              if (!gm.empty()) {
                gm[bm.index(i, j)] -= scale * d;
              }
            }
          }
          dvar += g[i] * (0.5 * sq / (var * var) - 0.5 * static_cast<double>(cols) / var);
        }
        if (!gv.empty()) {
          gv[0] += dvar;
        }
      });
}

Var pairwise_sq_dist(Var x, Var centers) {
  auto& tape = common_tape(x, centers);
  const auto sx = x.shape();
  const auto sc = centers.shape();
  if (sx.cols != sc.cols) {
    throw std::invalid_argument{"pairwise_sq_dist: dimension mismatch"};
  }
  const auto n = sx.cols;
  const auto vx = x.value();
  const auto vc = centers.value();
  std::vector<double> out(sx.rows * sc.rows);
  for (std::size_t i = 0; i < sx.rows; ++i) {
    const double* xi = &vx[i * n];
    for (std::size_t m = 0; m < sc.rows; ++m) {
      const double* cm = &vc[m * n];
      double sq = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = xi[j] - cm[j];
        sq += d * d;
      }
      out[i * sc.rows + m] = sq;
    }
  }
  return tape.record("pairwise_sq_dist", {sx.rows, sc.rows}, std::move(out), {x, centers}, [=](BackwardContext& ctx) {
    const auto g = ctx.grad_out();
    const auto xv = x.value();
    const auto cv = centers.value();
    auto gx = ctx.grad(x);
    auto gc = ctx.grad(centers);
    for (std::size_t i = 0; i < sx.rows; ++i) {
      for (std::size_t m = 0; m < sc.rows; ++m) {
        const double gim = 2.0 * g[i * sc.rows + m];
        if (gim == 0.0) {
          continue;
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double d = xv[i * n + j] - cv[m * n + j];
          if (!gx.empty()) {
            gx[i * n + j] += gim * d;
          }
          if (!gc.empty()) {
            gc[m * n + j] -= gim * d;
          }
        }
      }
    }
  });
}

double finite_difference_check(const ScalarFn& f, std::span<const double> x, double eps) {
  const Shape shape{x.size(), 1};
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> analytic;
  {
    Tape tape;
    auto v = tape.variable(shape, point);
    auto out = f(tape, v);
    analytic = tape.backward(out).of(v);
  }
  auto evaluate = [&](const std::vector<double>& at) {
    Tape tape;
    return f(tape, tape.constant(shape, at)).scalar();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    auto plus = point;
    auto minus = point;
    plus[i] += eps;
    minus[i] -= eps;
    const double numeric = (evaluate(plus) - evaluate(minus)) / (2.0 * eps);
    worst = std::max(worst, std::abs(numeric - analytic[i]) / (std::abs(analytic[i]) + 1e-8));
  }
  return worst;
}

}  // namespace dsmcs::ad
