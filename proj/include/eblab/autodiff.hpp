#pragma once

// Tape-based reverse-mode differentiation over dense Tensors.
//
// A Graph owns every value produced while evaluating an expression. Nodes are
// appended in evaluation order, so the tape is topologically sorted by
// construction and backward() is a single reverse sweep. Leaves created with
// requires_grad accumulate d(loss)/d(leaf) across backward() calls until
// zero_grad().

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eblab/rng.hpp"
#include "eblab/tensor.hpp"

namespace eblab {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the Graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Receives the adjoint of a node's output and adds the contribution to each
/// input's adjoint. Entries of `in_grads` are null for inputs that do not
/// require gradients.
using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> in_grads)>;

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = false) {
    require_finite(value, "leaf");
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    node.is_leaf = true;
    node.op = "leaf";
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends the result of a primitive. The output requires a gradient iff
  /// any input does; backward is dropped otherwise.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op) {
    if (!value.all_finite()) throw NonFiniteError(std::string(op) + ": non-finite output");
    Node node;
    node.value = std::move(value);
    node.op = op;
    for (const Var& in : inputs) {
      if (in.graph_ != this) throw std::invalid_argument(std::string(op) + ": input from another graph");
      node.inputs.push_back(in.id_);
      node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  /// Accumulates d(loss)/d(leaf) into every leaf with requires_grad set.
  void backward(Var loss) {
    if (loss.graph_ != this) throw std::invalid_argument("backward: loss belongs to another graph");
    const Node& root = nodes_[loss.id_];
    if (root.value.size() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + shape_string(root.value.shape()));
    }
    if (!root.requires_grad) throw std::invalid_argument("backward: loss is detached from every trainable leaf");

    std::vector<Tensor> adjoint(loss.id_ + 1);
    adjoint[loss.id_] = Tensor(root.value.shape(), 1.0);
    std::vector<Tensor*> in_grads;
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (adjoint[i].empty() || !node.requires_grad) continue;
      if (node.is_leaf) {
        if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
        auto g = node.grad.values();
        auto a = adjoint[i].values();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += a[k];
        continue;
      }
      in_grads.assign(node.inputs.size(), nullptr);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const std::size_t in = node.inputs[k];
        if (!nodes_[in].requires_grad) continue;
        if (adjoint[in].empty()) adjoint[in] = Tensor(nodes_[in].value.shape(), 0.0);
        in_grads[k] = &adjoint[in];
      }
      node.backward(adjoint[i], in_grads);
      adjoint[i] = Tensor();
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        if (in_grads[k] && !in_grads[k]->all_finite()) {
          throw NonFiniteError(std::string(node.op) + ": non-finite gradient");
        }
      }
    }
  }

  bool has_grad(Var v) const { return !nodes_.at(v.id_).grad.empty(); }

  /// Accumulated gradient of a leaf; zeros if backward never reached it.
  Tensor grad(Var v) const {
    const Node& node = nodes_.at(v.id_);
    if (!node.is_leaf || !node.requires_grad) {
      throw std::invalid_argument("grad: node is not a trainable leaf");
    }
    return node.grad.empty() ? Tensor(node.value.shape(), 0.0) : node.grad;
  }

  void zero_grad() {
    for (Node& node : nodes_) node.grad = Tensor();
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    const char* op = "";
    bool requires_grad = false;
    bool is_leaf = false;
  };

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }
inline bool Var::requires_grad() const { return graph_->requires_grad(id_); }

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using MatMap = Eigen::Map<RowMatrix>;

inline ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline MatMap as_matrix(Tensor& t) {
  return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

inline void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2, got " + shape_string(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

/// Elementwise unary op with derivative expressed through input x and output y.
template <typename F, typename DF>
Var unary(Var x, const char* op, F f, DF df) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t xid = x.id();
  const std::size_t oid = g.size();
  return g.record(std::move(out), {x},
                  [&g, xid, oid, df](const Tensor& dy, std::span<Tensor* const> dx) {
                    const Tensor& xv = g.value(xid);
                    const Tensor& yv = g.value(oid);
                    Tensor& d = *dx[0];
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * df(xv[i], yv[i]);
                  },
                  op);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

/// [n,k] x [k,m] -> [n,m]
inline Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_rank2(av, "matmul");
  detail::require_rank2(bv, "matmul");
  if (av.shape()[1] != bv.shape()[0]) {
    throw ShapeError("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  Tensor out({av.shape()[0], bv.shape()[1]});
  detail::as_matrix(out).noalias() = detail::as_matrix(av) * detail::as_matrix(bv);
  Graph& g = *a.graph();
  const std::size_t aid = a.id(), bid = b.id();
  return g.record(std::move(out), {a, b},
                  [&g, aid, bid](const Tensor& dy, std::span<Tensor* const> d) {
                    auto dym = detail::as_matrix(dy);
                    if (d[0]) detail::as_matrix(*d[0]).noalias() += dym * detail::as_matrix(g.value(bid)).transpose();
                    if (d[1]) detail::as_matrix(*d[1]).noalias() += detail::as_matrix(g.value(aid)).transpose() * dym;
                  },
                  "matmul");
}

/// Adds a per-column bias of shape [m] (or [1,m]) to every row of X [n,m].
inline Var add_bias(Var x, Var b) {
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  detail::require_rank2(xv, "add_bias");
  const std::size_t n = xv.rows(), m = xv.cols();
  if (bv.size() != m) throw ShapeError("add_bias: bias " + shape_string(bv.shape()) + " for " + shape_string(xv.shape()));
  Tensor out = xv;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] += bv[c];
  return x.graph()->record(std::move(out), {x, b},
                           [n, m](const Tensor& dy, std::span<Tensor* const> d) {
                             if (d[0])
                               for (std::size_t i = 0; i < dy.size(); ++i) (*d[0])[i] += dy[i];
                             if (d[1])
                               for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t c = 0; c < m; ++c) (*d[1])[c] += dy[r * m + c];
                           },
                           "add_bias");
}

inline Var add(Var a, Var b) {
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.graph()->record(std::move(out), {a, b},
                           [](const Tensor& dy, std::span<Tensor* const> d) {
                             for (Tensor* t : d)
                               if (t)
                                 for (std::size_t i = 0; i < dy.size(); ++i) (*t)[i] += dy[i];
                           },
                           "add");
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.graph()->record(std::move(out), {a, b},
                           [](const Tensor& dy, std::span<Tensor* const> d) {
                             if (d[0])
                               for (std::size_t i = 0; i < dy.size(); ++i) (*d[0])[i] += dy[i];
                             if (d[1])
                               for (std::size_t i = 0; i < dy.size(); ++i) (*d[1])[i] -= dy[i];
                           },
                           "sub");
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Graph& g = *a.graph();
  const std::size_t aid = a.id(), bid = b.id();
  return g.record(std::move(out), {a, b},
                  [&g, aid, bid](const Tensor& dy, std::span<Tensor* const> d) {
                    const Tensor& av = g.value(aid);
                    const Tensor& bv = g.value(bid);
                    if (d[0])
                      for (std::size_t i = 0; i < dy.size(); ++i) (*d[0])[i] += dy[i] * bv[i];
                    if (d[1])
                      for (std::size_t i = 0; i < dy.size(); ++i) (*d[1])[i] += dy[i] * av[i];
                  },
                  "mul");
}

inline Var scale(Var x, double c) {
  return detail::unary(x, "scale", [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Var add_scalar(Var x, double c) {
  return detail::unary(x, "add_scalar", [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

/// max(0, x); the subgradient at 0 is 0.
inline Var relu(Var x) {
  return detail::unary(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
                       [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var tanh(Var x) {
  return detail::unary(x, "tanh", [](double v) { return std::tanh(v); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(Var x) {
  return detail::unary(
      x, "sigmoid",
      [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var log(Var x) {
  return detail::unary(x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Var square(Var x) {
  return detail::unary(x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

/// Clips to [lo, hi]; gradient passes only strictly inside the interval.
inline Var clamp(Var x, double lo, double hi) {
  return detail::unary(x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
                       [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

/// Inverted dropout: at training time each entry is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate). Identity otherwise.
inline Var dropout(Var x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  const Tensor& xv = x.value();
  Tensor mask(xv.shape());
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return x.graph()->record(std::move(out), {x},
                           [mask = std::move(mask)](const Tensor& dy, std::span<Tensor* const> d) {
                             for (std::size_t i = 0; i < dy.size(); ++i) (*d[0])[i] += dy[i] * mask[i];
                           },
                           "dropout");
}

/// Per-feature running statistics for batch normalization.
struct BatchNormStats {
  Tensor mean;
  Tensor var;
};

struct BatchNormOptions {
  bool training = true;
  double eps = 1e-5;
  double momentum = 0.9;  ///< running = momentum * running + (1 - momentum) * batch
  BatchNormStats* running = nullptr;  ///< updated in training mode when set
};

/// Normalizes each column of X [n,m] then applies the optional scale `gamma`
/// and the shift `beta` (both [m]). Training mode uses biased batch
/// statistics; inference mode uses `running`.
inline Var batchnorm(Var x, Var beta, std::optional<Var> gamma, const BatchNormOptions& opt) {
  const Tensor& xv = x.value();
  detail::require_rank2(xv, "batchnorm");
  if (!(opt.eps > 0.0)) throw std::invalid_argument("batchnorm: eps must be positive");
  const std::size_t n = xv.rows(), m = xv.cols();
  if (beta.value().size() != m) throw ShapeError("batchnorm: beta size");
  if (gamma && gamma->value().size() != m) throw ShapeError("batchnorm: gamma size");

  std::vector<double> mean(m, 0.0), inv_std(m, 0.0);
  if (opt.training) {
    std::vector<double> var(m, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) mean[c] += xv[r * m + c];
    for (auto& v : mean) v /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) {
        const double d = xv[r * m + c] - mean[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < m; ++c) {
      var[c] /= static_cast<double>(n);
      inv_std[c] = 1.0 / std::sqrt(var[c] + opt.eps);
    }
    if (opt.running) {
      auto& rs = *opt.running;
      if (rs.mean.size() != m) {
        rs.mean = Tensor({m}, 0.0);
        rs.var = Tensor({m}, 1.0);
      }
      for (std::size_t c = 0; c < m; ++c) {
        rs.mean[c] = opt.momentum * rs.mean[c] + (1.0 - opt.momentum) * mean[c];
        rs.var[c] = opt.momentum * rs.var[c] + (1.0 - opt.momentum) * var[c];
      }
    }
  } else {
    if (!opt.running || opt.running->mean.size() != m) {
      throw std::invalid_argument("batchnorm: inference mode needs running statistics");
    }
    for (std::size_t c = 0; c < m; ++c) {
      mean[c] = opt.running->mean[c];
      inv_std[c] = 1.0 / std::sqrt(opt.running->var[c] + opt.eps);
    }
  }

  Tensor xhat(xv.shape());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) xhat[r * m + c] = (xv[r * m + c] - mean[c]) * inv_std[c];

  const Tensor& bv = beta.value();
  Tensor gv = gamma ? gamma->value() : Tensor({m}, 1.0);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = gv[c] * xhat[r * m + c] + bv[c];

  std::vector<Var> inputs{x, beta};
  if (gamma) inputs.push_back(*gamma);
  const bool training = opt.training;
  return x.graph()->record(
      std::move(out), std::move(inputs),
      [n, m, training, inv_std = std::move(inv_std), xhat = std::move(xhat), gv = std::move(gv)](
          const Tensor& dy, std::span<Tensor* const> d) {
        if (d[1])
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) (*d[1])[c] += dy[r * m + c];
        if (d.size() > 2 && d[2])
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) (*d[2])[c] += dy[r * m + c] * xhat[r * m + c];
        if (!d[0]) return;
        Tensor& dx = *d[0];
        if (!training) {
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) dx[r * m + c] += dy[r * m + c] * gv[c] * inv_std[c];
          return;
        }
        // dx = inv_std / n * (n*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
        const double nn = static_cast<double>(n);
        std::vector<double> sum_d(m, 0.0), sum_dx(m, 0.0);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < m; ++c) {
            const double dh = dy[r * m + c] * gv[c];
            sum_d[c] += dh;
            sum_dx[c] += dh * xhat[r * m + c];
          }
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < m; ++c) {
            const double dh = dy[r * m + c] * gv[c];
            dx[r * m + c] += inv_std[c] / nn * (nn * dh - sum_d[c] - xhat[r * m + c] * sum_dx[c]);
          }
      },
      "batchnorm");
}

/// Row sums of squares of X [n,d] -> [n].
inline Var squared_l2_rowwise(Var x) {
  const Tensor& xv = x.value();
  detail::require_rank2(xv, "squared_l2_rowwise");
  const std::size_t n = xv.rows(), m = xv.cols();
  Tensor out({n});
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += xv[r * m + c] * xv[r * m + c];
    out[r] = s;
  }
  Graph& g = *x.graph();
  const std::size_t xid = x.id();
  return g.record(std::move(out), {x},
                  [&g, xid, n, m](const Tensor& dy, std::span<Tensor* const> d) {
                    const Tensor& xv = g.value(xid);
                    for (std::size_t r = 0; r < n; ++r)
                      for (std::size_t c = 0; c < m; ++c) (*d[0])[r * m + c] += 2.0 * dy[r] * xv[r * m + c];
                  },
                  "squared_l2_rowwise");
}

/// Row Euclidean norms of X [n,d] -> [n]. Zero rows get a zero subgradient.
inline Var euclidean_norm_rowwise(Var x) {
  const Tensor& xv = x.value();
  detail::require_rank2(xv, "euclidean_norm_rowwise");
  const std::size_t n = xv.rows(), m = xv.cols();
  Tensor out({n});
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += xv[r * m + c] * xv[r * m + c];
    out[r] = std::sqrt(s);
  }
  Graph& g = *x.graph();
  const std::size_t xid = x.id(), oid = g.size();
  return g.record(std::move(out), {x},
                  [&g, xid, oid, n, m](const Tensor& dy, std::span<Tensor* const> d) {
                    const Tensor& xv = g.value(xid);
                    const Tensor& norm = g.value(oid);
                    for (std::size_t r = 0; r < n; ++r) {
                      if (norm[r] == 0.0) continue;
                      const double k = dy[r] / norm[r];
                      for (std::size_t c = 0; c < m; ++c) (*d[0])[r * m + c] += k * xv[r * m + c];
                    }
                  },
                  "euclidean_norm_rowwise");
}

inline Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.graph()->record(Tensor::scalar(s), {x},
                           [](const Tensor& dy, std::span<Tensor* const> d) {
                             for (std::size_t i = 0; i < d[0]->size(); ++i) (*d[0])[i] += dy[0];
                           },
                           "sum");
}

inline Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.graph()->record(Tensor::scalar(s / n), {x},
                           [n](const Tensor& dy, std::span<Tensor* const> d) {
                             for (std::size_t i = 0; i < d[0]->size(); ++i) (*d[0])[i] += dy[0] / n;
                           },
                           "mean");
}

/// Stacks tensors along the leading axis; trailing extents must agree.
inline Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape trailing(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<double> values;
  std::vector<std::size_t> sizes;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    if (Shape(v.shape().begin() + 1, v.shape().end()) != trailing) throw ShapeError("concat: trailing shape mismatch");
    rows += v.rows();
    values.insert(values.end(), v.values().begin(), v.values().end());
    sizes.push_back(v.size());
  }
  Shape shape{rows};
  shape.insert(shape.end(), trailing.begin(), trailing.end());
  return parts[0].graph()->record(Tensor(std::move(shape), std::move(values)),
                                  std::vector<Var>(parts.begin(), parts.end()),
                                  [sizes = std::move(sizes)](const Tensor& dy, std::span<Tensor* const> d) {
                                    std::size_t offset = 0;
                                    for (std::size_t k = 0; k < d.size(); ++k) {
                                      if (d[k])
                                        for (std::size_t i = 0; i < sizes[k]; ++i) (*d[k])[i] += dy[offset + i];
                                      offset += sizes[k];
                                    }
                                  },
                                  "concat");
}

inline Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

inline Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.graph()->record(std::move(out), {x},
                           [](const Tensor& dy, std::span<Tensor* const> d) {
                             for (std::size_t i = 0; i < dy.size(); ++i) (*d[0])[i] += dy[i];
                           },
                           "reshape");
}

/// Row-wise log-softmax of X [n,c].
inline Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  detail::require_rank2(xv, "log_softmax");
  const std::size_t n = xv.rows(), m = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < n; ++r) {
    double mx = xv[r * m];
    for (std::size_t c = 1; c < m; ++c) mx = std::max(mx, xv[r * m + c]);
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += std::exp(xv[r * m + c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = xv[r * m + c] - lse;
  }
  Graph& g = *x.graph();
  const std::size_t oid = g.size();
  return g.record(std::move(out), {x},
                  [&g, oid, n, m](const Tensor& dy, std::span<Tensor* const> d) {
                    const Tensor& y = g.value(oid);
                    for (std::size_t r = 0; r < n; ++r) {
                      double s = 0.0;
                      for (std::size_t c = 0; c < m; ++c) s += dy[r * m + c];
                      for (std::size_t c = 0; c < m; ++c)
                        (*d[0])[r * m + c] += dy[r * m + c] - std::exp(y[r * m + c]) * s;
                    }
                  },
                  "log_softmax");
}

// ---------------------------------------------------------------------------
// Finite-difference verification
// ---------------------------------------------------------------------------

/// Builds a scalar loss from parameter leaves. Must be deterministic.
using ScalarFunction = std::function<Var(Graph&, std::span<const Var>)>;

struct GradCheckOptions {
  double h = 1e-6;
  /// Entries whose forward and backward one-sided differences disagree by
  /// more than this are treated as sitting on a kink and skipped. Zero
  /// disables kink detection.
  double kink_tol = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// Max over parameter entries of |autodiff - central difference| /
/// max(1, |central difference|).
inline GradCheckResult grad_check(const ScalarFunction& f, std::vector<Tensor> params,
                                  const GradCheckOptions& opt = {}) {
  if (!(opt.h > 0.0)) throw std::invalid_argument("grad_check: h must be positive");

  auto evaluate = [&](const std::vector<Tensor>& ps) {
    Graph g;
    std::vector<Var> vars;
    for (const Tensor& p : ps) vars.push_back(g.constant(p));
    const double v = f(g, vars).value().item();
    if (!std::isfinite(v)) throw NonFiniteError("grad_check: non-finite loss");
    return v;
  };

  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(g.leaf(p, true));
    Var loss = f(g, vars);
    g.backward(loss);
    for (const Var& v : vars) analytic.push_back(g.grad(v));
  }

  const double f0 = opt.kink_tol > 0.0 ? evaluate(params) : 0.0;
  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double orig = params[p][i];
      params[p][i] = orig + opt.h;
      const double fp = evaluate(params);
      params[p][i] = orig - opt.h;
      const double fm = evaluate(params);
      params[p][i] = orig;
      if (opt.kink_tol > 0.0) {
        const double fwd = (fp - f0) / opt.h;
        const double bwd = (f0 - fm) / opt.h;
        if (std::abs(fwd - bwd) > opt.kink_tol * std::max(1.0, std::abs(fwd) + std::abs(bwd))) {
          ++result.skipped;
          continue;
        }
      }
      const double central = (fp - fm) / (2.0 * opt.h);
      const double err = std::abs(analytic[p][i] - central) / std::max(1.0, std::abs(central));
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace eblab
