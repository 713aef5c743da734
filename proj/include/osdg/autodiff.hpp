// Copyright 2026 The OSDG Scheduler Authors.
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

// Define-by-run reverse-mode differentiation over dense double tensors.
//
// A Graph is a tape: nodes are appended in evaluation order, so every node's
// inputs carry smaller ids and a single reverse sweep visits each node once.
// Parameters live outside the graph; binding one creates a leaf node whose
// gradient is accumulated into the Parameter when backward() runs.

#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "osdg/common.hpp"
#include "osdg/tensor.hpp"

namespace osdg {

struct Parameter {
  std::string name;
  Tensor value;
  std::optional<std::vector<double>> grad;

  void zero_grad() { grad.emplace(value.size(), 0.0); }
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  std::size_t id() const { return id_; }
  Graph& graph() const { return *graph_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t size() const { return value().size(); }
  std::span<const double> grad() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value) { return push(std::move(value), {}, {}, false, nullptr); }

  /// A leaf whose gradient is tracked but not tied to a Parameter.
  Var leaf(Tensor value) { return push(std::move(value), {}, {}, true, nullptr); }

  Var param(Parameter& p) {
    if (no_grad_) return constant(p.value);
    return push(p.value, {}, {}, true, &p);
  }

  /// Frozen parameters always bind as constants.
  Var param(const Parameter& p) { return constant(p.value); }

  /// Appends an operation result. `fn` runs during backward with the node id.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
    bool needs = false;
    for (std::size_t in : inputs) {
      if (in >= nodes_.size()) throw ParameterError("Graph::record: input from another graph");
      needs = needs || nodes_[in].requires_grad;
    }
    if (!needs) return push(std::move(value), std::move(inputs), {}, false, nullptr);
    return push(std::move(value), std::move(inputs), std::move(fn), true, nullptr);
  }

  /// While set, parameters bind as constants and no backward closures are kept.
  void set_no_grad(bool on) { no_grad_ = on; }

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  /// Gradient of the last backward() target with respect to node `id`.
  std::span<const double> grad(std::size_t id) const {
    const auto& node = nodes_[id];
    if (node.grad.empty()) {
      zero_scratch_.assign(node.value.size(), 0.0);
      return zero_scratch_;
    }
    return node.grad;
  }

  /// Mutable gradient buffer, allocated as zeros on first use.
  std::vector<double>& grad_buffer(std::size_t id) {
    auto& node = nodes_[id];
    if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
    return node.grad;
  }

  /// Populates gradients of every tracked node reachable from `loss` and
  /// accumulates them into bound Parameters. Parameters bound in this graph
  /// but unreachable receive zero-filled gradients.
  void backward(Var loss) {
    if (&loss.graph() != this) throw ParameterError("backward: loss from another graph");
    if (loss.size() != 1) {
      throw DimensionError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    for (auto& node : nodes_) node.grad.clear();
    if (!nodes_[loss.id()].requires_grad) {
      flush_parameters();
      return;
    }
    grad_buffer(loss.id())[0] = 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      auto& node = nodes_[id];
      if (node.backward && !node.grad.empty()) node.backward(*this, id);
    }
    flush_parameters();
  }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::vector<double> grad;
  };

  Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn, bool requires_grad,
           Parameter* param) {
    Node node;
    node.value = std::move(value);
    node.inputs = std::move(inputs);
    node.backward = std::move(fn);
    node.requires_grad = requires_grad;
    node.param = param;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  void flush_parameters() {
    for (auto& node : nodes_) {
      if (node.param == nullptr) continue;
      auto& target = node.param->grad;
      if (!target || target->size() != node.value.size()) {
        target.emplace(node.value.size(), 0.0);
      }
      if (node.grad.empty()) continue;
      for (std::size_t i = 0; i < node.grad.size(); ++i) (*target)[i] += node.grad[i];
    }
  }

  std::deque<Node> nodes_;  // stable references: Var::value() stays valid as the graph grows
  bool no_grad_ = false;
  mutable std::vector<double> zero_scratch_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }
inline std::span<const double> Var::grad() const { return graph_->grad(id_); }

/// p <- p - lr * grad, then zero the gradient.
inline void sgd_step(std::span<Parameter* const> params, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw ParameterError(str_cat("sgd_step: learning rate must be finite and >= 0, got ", lr));
  }
  for (Parameter* p : params) {
    if (!p->grad || p->grad->size() != p->value.size()) {
      throw ParameterError("sgd_step: parameter '" + p->name + "' has no gradient");
    }
  }
  for (Parameter* p : params) {
    auto& g = *p->grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      p->value.data[i] -= lr * g[i];
      g[i] = 0.0;
    }
  }
}

namespace detail {

inline void check_same_graph(const Var& a, const Var& b, const char* op) {
  if (&a.graph() != &b.graph()) throw ParameterError(str_cat(op, ": operands from different graphs"));
}

// Maps each flat index of `to` onto the flat index of `from`, where `from`
// broadcasts into `to` (right-aligned, size-1 dimensions expand).
inline std::vector<std::size_t> broadcast_index(const Shape& from, const Shape& to) {
  const std::size_t n = numel(to);
  const std::size_t rank = to.size();
  const std::size_t offset = rank - from.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t k = from.size(); k-- > 0;) {
    if (from[k] != 1) stride[k + offset] = s;
    s *= from[k];
  }
  std::vector<std::size_t> idx(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t cur = 0;
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = cur;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      cur += stride[d];
      if (counter[d] < to[d]) break;
      cur -= stride[d] * to[d];
      counter[d] = 0;
    }
  }
  return idx;
}

inline bool broadcasts_into(const Shape& from, const Shape& to) {
  if (from.size() > to.size()) {
    // Leading size-1 dimensions of `from` are harmless.
    for (std::size_t k = 0; k < from.size() - to.size(); ++k) {
      if (from[k] != 1) return false;
    }
    Shape trimmed(from.end() - static_cast<std::ptrdiff_t>(to.size()), from.end());
    return broadcasts_into(trimmed, to);
  }
  const std::size_t offset = to.size() - from.size();
  for (std::size_t k = 0; k < from.size(); ++k) {
    if (from[k] != 1 && from[k] != to[k + offset]) return false;
  }
  return true;
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> ia;  // empty means identity
  std::vector<std::size_t> ib;
};

inline BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    return plan;
  }
  if (numel(a) >= numel(b) && broadcasts_into(b, a)) {
    plan.out = a;
    plan.ib = broadcast_index(b.size() > a.size() ? Shape(b.end() - a.size(), b.end()) : b, a);
    return plan;
  }
  if (broadcasts_into(a, b)) {
    plan.out = b;
    plan.ia = broadcast_index(a.size() > b.size() ? Shape(a.end() - b.size(), a.end()) : a, b);
    return plan;
  }
  throw DimensionError(str_cat(op, ": shapes ", shape_str(a), " and ", shape_str(b),
                               " are not broadcast-compatible"));
}

template <typename Fwd, typename DA, typename DB>
Var binary_op(Var a, Var b, const char* name, Fwd fwd, DA da, DB db) {
  check_same_graph(a, b, name);
  Graph& g = a.graph();
  BroadcastPlan plan = plan_broadcast(a.shape(), b.shape(), name);
  const auto& av = a.value().data;
  const auto& bv = b.value().data;
  const std::size_t n = numel(plan.out);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ia = plan.ia.empty() ? i : plan.ia[i];
    const std::size_t ib = plan.ib.empty() ? i : plan.ib[i];
    out[i] = fwd(av[ia], bv[ib]);
  }
  const std::size_t a_id = a.id(), b_id = b.id();
  return g.record(Tensor(plan.out, std::move(out)), {a_id, b_id},
                  [a_id, b_id, ia = std::move(plan.ia), ib = std::move(plan.ib), da, db](
                      Graph& graph, std::size_t self) {
                    const auto& gout = graph.grad(self);
                    const auto& x = graph.value(a_id).data;
                    const auto& y = graph.value(b_id).data;
                    const std::size_t count = gout.size();
                    if (graph.requires_grad(a_id)) {
                      auto& ga = graph.grad_buffer(a_id);
                      for (std::size_t i = 0; i < count; ++i) {
                        const std::size_t xa = ia.empty() ? i : ia[i];
                        const std::size_t yb = ib.empty() ? i : ib[i];
                        ga[xa] += gout[i] * da(x[xa], y[yb]);
                      }
                    }
                    if (graph.requires_grad(b_id)) {
                      auto& gb = graph.grad_buffer(b_id);
                      for (std::size_t i = 0; i < count; ++i) {
                        const std::size_t xa = ia.empty() ? i : ia[i];
                        const std::size_t yb = ib.empty() ? i : ib[i];
                        gb[yb] += gout[i] * db(x[xa], y[yb]);
                      }
                    }
                  });
}

// `deriv(x, y)` receives the input and the forward output.
template <typename Fwd, typename Deriv>
Var unary_op(Var a, Fwd fwd, Deriv deriv) {
  Graph& g = a.graph();
  const auto& av = a.value().data;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const std::size_t a_id = a.id();
  return g.record(Tensor(a.shape(), std::move(out)), {a_id},
                  [a_id, deriv](Graph& graph, std::size_t self) {
                    const auto& gout = graph.grad(self);
                    const auto& x = graph.value(a_id).data;
                    const auto& y = graph.value(self).data;
                    auto& ga = graph.grad_buffer(a_id);
                    for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * deriv(x[i], y[i]);
                  });
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Splits a shape around `axis` into (outer, extent, inner) loop bounds.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
  Shape reduced;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis, bool keepdim, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(str_cat(op, ": axis ", axis, " invalid for shape ", shape_str(shape)));
  }
  AxisSplit s;
  for (std::size_t k = 0; k < axis; ++k) s.outer *= shape[k];
  s.extent = shape[axis];
  for (std::size_t k = axis + 1; k < shape.size(); ++k) s.inner *= shape[k];
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (k != axis) s.reduced.push_back(shape[k]);
    else if (keepdim) s.reduced.push_back(1);
  }
  if (s.reduced.empty()) s.reduced.push_back(1);
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(Var a, Var b) {
  return detail::binary_op(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(Var a, Var b) {
  return detail::binary_op(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(Var a, Var b) {
  return detail::binary_op(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Var scale(Var a, double factor) {
  return detail::unary_op(
      a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

inline Var add_scalar(Var a, double c) {
  return detail::unary_op(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Var exp(Var a) {
  return detail::unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
  const auto& v = a.value().data;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0)) {
      throw DomainError(str_cat("log: non-positive input ", v[i], " at index ", i));
    }
  }
  return detail::unary_op(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var softplus(Var a) {
  return detail::unary_op(
      a, detail::stable_softplus, [](double x, double) { return detail::stable_sigmoid(x); });
}

inline Var sigmoid(Var a) {
  return detail::unary_op(
      a, detail::stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

inline Var relu(Var a) {
  return detail::unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var square(Var a) {
  return detail::unary_op(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------------------
// Structural

inline Var reshape(Var a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError(str_cat("reshape: ", shape_str(a.shape()), " -> ", shape_str(shape)));
  }
  const std::size_t a_id = a.id();
  return a.graph().record(Tensor(std::move(shape), a.value().data), {a_id},
                          [a_id](Graph& graph, std::size_t self) {
                            const auto& gout = graph.grad(self);
                            auto& ga = graph.grad_buffer(a_id);
                            for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
                          });
}

/// Copy of the value with no path back to `a`.
inline Var detach(Var a) { return a.graph().constant(a.value()); }

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(Var a, Var b) {
  detail::check_same_graph(a, b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  }
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  const auto& av = a.value().data;
  const auto& bv = b.value().data;
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  const std::size_t a_id = a.id(), b_id = b.id();
  return a.graph().record(
      Tensor({m, n}, std::move(out)), {a_id, b_id}, [a_id, b_id, m, k, n](Graph& graph, std::size_t self) {
        const auto& gout = graph.grad(self);
        const auto& av = graph.value(a_id).data;
        const auto& bv = graph.value(b_id).data;
        if (graph.requires_grad(a_id)) {
          auto& ga = graph.grad_buffer(a_id);
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = gout.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double* brow = bv.data() + p * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[i * k + p] += acc;
            }
          }
        }
        if (graph.requires_grad(b_id)) {
          auto& gb = graph.grad_buffer(b_id);
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = gout.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = av[i * k + p];
              if (aip == 0.0) continue;
              double* gbrow = gb.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
            }
          }
        }
      });
}

/// G[i,j] = exp(-|A_i - B_j|^2 / (2 bandwidth^2)).
inline Var gaussian_gram(Var a, Var b, double bandwidth) {
  detail::check_same_graph(a, b, "gaussian_gram");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw ParameterError(str_cat("gaussian_gram: bandwidth must be positive, got ", bandwidth));
  }
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[1]) {
    throw DimensionError("gaussian_gram: incompatible shapes " + shape_str(sa) + " and " +
                         shape_str(sb));
  }
  const std::size_t n = sa[0], m = sb[0], p = sa[1];
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  const auto& av = a.value().data;
  const auto& bv = b.value().data;
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < p; ++k) {
        const double diff = av[i * p + k] - bv[j * p + k];
        d2 += diff * diff;
      }
      out[i * m + j] = std::exp(-d2 * inv);
    }
  }
  const std::size_t a_id = a.id(), b_id = b.id();
  return a.graph().record(
      Tensor({n, m}, std::move(out)), {a_id, b_id},
      [a_id, b_id, n, m, p, inv](Graph& graph, std::size_t self) {
        const auto& gout = graph.grad(self);
        const auto& gram = graph.value(self).data;
        const auto& av = graph.value(a_id).data;
        const auto& bv = graph.value(b_id).data;
        const bool need_a = graph.requires_grad(a_id);
        const bool need_b = graph.requires_grad(b_id);
        std::vector<double>* ga = need_a ? &graph.grad_buffer(a_id) : nullptr;
        std::vector<double>* gb = need_b ? &graph.grad_buffer(b_id) : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            // d G_ij / d A_i = -2 inv G_ij (A_i - B_j)
            const double w = -2.0 * inv * gout[i * m + j] * gram[i * m + j];
            if (w == 0.0) continue;
            for (std::size_t k = 0; k < p; ++k) {
              const double diff = av[i * p + k] - bv[j * p + k];
              if (ga) (*ga)[i * p + k] += w * diff;
              if (gb) (*gb)[j * p + k] -= w * diff;
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(Var a) {
  const auto& v = a.value().data;
  double total = 0.0;
  for (double x : v) total += x;
  const std::size_t a_id = a.id();
  return a.graph().record(Tensor::scalar(total), {a_id}, [a_id](Graph& graph, std::size_t self) {
    const double g = graph.grad(self)[0];
    auto& ga = graph.grad_buffer(a_id);
    for (double& x : ga) x += g;
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

inline Var sum(Var a, std::size_t axis, bool keepdim = false) {
  const auto s = detail::split_axis(a.shape(), axis, keepdim, "sum");
  const auto& v = a.value().data;
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.extent; ++k)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += v[(o * s.extent + k) * s.inner + i];
  const std::size_t a_id = a.id();
  return a.graph().record(Tensor(s.reduced, std::move(out)), {a_id},
                          [a_id, s](Graph& graph, std::size_t self) {
                            const auto& gout = graph.grad(self);
                            auto& ga = graph.grad_buffer(a_id);
                            for (std::size_t o = 0; o < s.outer; ++o)
                              for (std::size_t k = 0; k < s.extent; ++k)
                                for (std::size_t i = 0; i < s.inner; ++i)
                                  ga[(o * s.extent + k) * s.inner + i] += gout[o * s.inner + i];
                          });
}

inline Var mean(Var a, std::size_t axis, bool keepdim = false) {
  if (axis >= a.shape().size()) {
    throw DimensionError(str_cat("mean: axis ", axis, " invalid for shape ", shape_str(a.shape())));
  }
  return scale(sum(a, axis, keepdim), 1.0 / static_cast<double>(a.shape()[axis]));
}

struct MaxResult {
  Var values;
  std::vector<std::size_t> argmax;  // position along the reduced axis; first wins ties
};

inline MaxResult max_over_axis(Var a, std::size_t axis, bool keepdim = false) {
  const auto s = detail::split_axis(a.shape(), axis, keepdim, "max_over_axis");
  const auto& v = a.value().data;
  std::vector<double> out(s.outer * s.inner);
  std::vector<std::size_t> arg(s.outer * s.inner, 0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      double best = v[o * s.extent * s.inner + i];
      std::size_t best_k = 0;
      for (std::size_t k = 1; k < s.extent; ++k) {
        const double x = v[(o * s.extent + k) * s.inner + i];
        if (x > best) {
          best = x;
          best_k = k;
        }
      }
      out[o * s.inner + i] = best;
      arg[o * s.inner + i] = best_k;
    }
  }
  const std::size_t a_id = a.id();
  Var values = a.graph().record(Tensor(s.reduced, std::move(out)), {a_id},
                                [a_id, s, arg](Graph& graph, std::size_t self) {
                                  const auto& gout = graph.grad(self);
                                  auto& ga = graph.grad_buffer(a_id);
                                  for (std::size_t o = 0; o < s.outer; ++o)
                                    for (std::size_t i = 0; i < s.inner; ++i) {
                                      const std::size_t r = o * s.inner + i;
                                      ga[(o * s.extent + arg[r]) * s.inner + i] += gout[r];
                                    }
                                });
  return {values, std::move(arg)};
}

inline Var softmax(Var a, std::size_t axis) {
  const auto s = detail::split_axis(a.shape(), axis, true, "softmax");
  const auto& v = a.value().data;
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t k) { return (o * s.extent + k) * s.inner + i; };
      double mx = v[at(0)];
      for (std::size_t k = 1; k < s.extent; ++k) mx = std::max(mx, v[at(k)]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        out[at(k)] = std::exp(v[at(k)] - mx);
        z += out[at(k)];
      }
      for (std::size_t k = 0; k < s.extent; ++k) out[at(k)] /= z;
    }
  }
  const std::size_t a_id = a.id();
  return a.graph().record(Tensor(a.shape(), std::move(out)), {a_id},
                          [a_id, s](Graph& graph, std::size_t self) {
                            const auto& gout = graph.grad(self);
                            const auto& y = graph.value(self).data;
                            auto& ga = graph.grad_buffer(a_id);
                            for (std::size_t o = 0; o < s.outer; ++o)
                              for (std::size_t i = 0; i < s.inner; ++i) {
                                auto at = [&](std::size_t k) { return (o * s.extent + k) * s.inner + i; };
                                double dot = 0.0;
                                for (std::size_t k = 0; k < s.extent; ++k) dot += gout[at(k)] * y[at(k)];
                                for (std::size_t k = 0; k < s.extent; ++k)
                                  ga[at(k)] += y[at(k)] * (gout[at(k)] - dot);
                              }
                          });
}

inline Var logsumexp(Var a, std::size_t axis, bool keepdim = false) {
  const auto s = detail::split_axis(a.shape(), axis, keepdim, "logsumexp");
  const auto& v = a.value().data;
  std::vector<double> out(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t k) { return (o * s.extent + k) * s.inner + i; };
      double mx = v[at(0)];
      for (std::size_t k = 1; k < s.extent; ++k) mx = std::max(mx, v[at(k)]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) z += std::exp(v[at(k)] - mx);
      out[o * s.inner + i] = mx + std::log(z);
    }
  }
  const std::size_t a_id = a.id();
  return a.graph().record(Tensor(s.reduced, std::move(out)), {a_id},
                          [a_id, s](Graph& graph, std::size_t self) {
                            const auto& gout = graph.grad(self);
                            const auto& y = graph.value(self).data;
                            const auto& x = graph.value(a_id).data;
                            auto& ga = graph.grad_buffer(a_id);
                            for (std::size_t o = 0; o < s.outer; ++o)
                              for (std::size_t i = 0; i < s.inner; ++i) {
                                const std::size_t r = o * s.inner + i;
                                for (std::size_t k = 0; k < s.extent; ++k) {
                                  const std::size_t at = (o * s.extent + k) * s.inner + i;
                                  ga[at] += gout[r] * std::exp(x[at] - y[r]);
                                }
                              }
                          });
}

}  // namespace osdg
