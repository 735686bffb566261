// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Graph is a tape of nodes built in topological order. Each operation
// appends a node holding its value and, when recording, a closure that pushes
// the node's gradient into its inputs. Gradients are allocated lazily, so a
// node that the loss never reaches keeps an empty gradient and is skipped
// during the backward sweep; parameters reached only through such nodes get
// exactly zero gradient.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "chvt/errors.hpp"

namespace chvt::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool frozen = false;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Matrix v) {
    nodes_.push_back(Node{std::move(v), {}, nullptr, false, {}, nullptr});
    return {this, nodes_.size() - 1};
  }

  /// Leaf node aliasing a parameter's value. When `sink` is non-null and the
  /// graph records, the backward sweep accumulates into `sink->grad`.
  Var parameter(const Parameter& p, Parameter* sink) {
    const bool rg = record_ && sink != nullptr && !sink->frozen;
    nodes_.push_back(Node{{}, {}, &p.value, rg, {}, rg ? sink : nullptr});
    return {this, nodes_.size() - 1};
  }

  const Matrix& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Appends an operation node. `backward` runs only if some input requires
  /// a gradient and the graph is recording.
  Var emit(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
    bool rg = false;
    if (record_) {
      for (const Var& v : inputs) rg = rg || nodes_[v.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, nullptr, rg, rg ? std::move(backward) : BackwardFn{}, nullptr});
    return {this, nodes_.size() - 1};
  }
  Var emit(Matrix value, const std::vector<Var>& inputs, BackwardFn backward) {
    bool rg = false;
    if (record_) {
      for (const Var& v : inputs) rg = rg || nodes_[v.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, nullptr, rg, rg ? std::move(backward) : BackwardFn{}, nullptr});
    return {this, nodes_.size() - 1};
  }

  template <class Expr>
  void accumulate(std::size_t id, const Expr& delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  /// Backpropagates from a 1x1 root. Leaves parameter gradients accumulated
  /// in their sinks; the caller owns zeroing them between steps.
  void backward(const Var& root, double seed = 1.0) {
    require(root.graph() == this, "backward: root belongs to another graph");
    require(value(root.id()).size() == 1, "backward: root must be a scalar");
    if (!record_) throw ContractError("backward on a non-recording graph");
    if (!nodes_[root.id()].requires_grad) return;
    nodes_[root.id()].grad = Matrix::Constant(1, 1, seed);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.sink != nullptr) {
        if (n.sink->grad.size() == 0) n.sink->zero_grad();
        n.sink->grad += n.grad;
      } else if (n.backward) {
        n.backward(*this, i);
      }
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    const Matrix* external;
    bool requires_grad;
    BackwardFn backward;
    Parameter* sink;
  };
  std::deque<Node> nodes_;
  bool record_;
};

inline const Matrix& Var::value() const { return graph_->value(id_); }

namespace detail {
inline Graph& same_graph(const Var& a, const Var& b) {
  require(a.graph() == b.graph(), "operands belong to different graphs");
  return *a.graph();
}
inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
  }
}
}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  Graph& g = detail::same_graph(a, b);
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  const std::size_t ia = a.id(), ib = b.id();
  return g.emit(a.value() * b.value(), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Matrix& gy = g.grad(self);
    if (g.requires_grad(ia)) g.accumulate(ia, gy * g.value(ib).transpose());
    if (g.requires_grad(ib)) g.accumulate(ib, g.value(ia).transpose() * gy);
  });
}

/// a * b^T
inline Var matmul_nt(const Var& a, const Var& b) {
  Graph& g = detail::same_graph(a, b);
  require(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  const std::size_t ia = a.id(), ib = b.id();
  return g.emit(a.value() * b.value().transpose(), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Matrix& gy = g.grad(self);
    if (g.requires_grad(ia)) g.accumulate(ia, gy * g.value(ib));
    if (g.requires_grad(ib)) g.accumulate(ib, gy.transpose() * g.value(ia));
  });
}

inline Var transpose(const Var& a) {
  Graph& g = *a.graph();
  const std::size_t ia = a.id();
  return g.emit(a.value().transpose(), {a},
                [ia](Graph& g, std::size_t self) { g.accumulate(ia, g.grad(self).transpose()); });
}

inline Var add(const Var& a, const Var& b) {
  Graph& g = detail::same_graph(a, b);
  detail::require_same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return g.emit(a.value() + b.value(), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    g.accumulate(ia, g.grad(self));
    g.accumulate(ib, g.grad(self));
  });
}

inline Var sub(const Var& a, const Var& b) {
  Graph& g = detail::same_graph(a, b);
  detail::require_same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return g.emit(a.value() - b.value(), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    g.accumulate(ia, g.grad(self));
    g.accumulate(ib, -g.grad(self));
  });
}

inline Var hadamard(const Var& a, const Var& b) {
  Graph& g = detail::same_graph(a, b);
  detail::require_same_shape(a, b, "hadamard");
  const std::size_t ia = a.id(), ib = b.id();
  return g.emit(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Matrix& gy = g.grad(self);
    if (g.requires_grad(ia)) g.accumulate(ia, gy.cwiseProduct(g.value(ib)));
    if (g.requires_grad(ib)) g.accumulate(ib, gy.cwiseProduct(g.value(ia)));
  });
}

/// Adds a 1 x c row to every row of a.
inline Var add_row(const Var& a, const Var& row) {
  Graph& g = detail::same_graph(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: row must be 1 x cols(a)");
  const std::size_t ia = a.id(), ir = row.id();
  Matrix y = a.value().rowwise() + row.value().row(0);
  return g.emit(std::move(y), {a, row}, [ia, ir](Graph& g, std::size_t self) {
    g.accumulate(ia, g.grad(self));
    if (g.requires_grad(ir)) g.accumulate(ir, g.grad(self).colwise().sum());
  });
}

inline Var scale(const Var& a, double s) {
  Graph& g = *a.graph();
  const std::size_t ia = a.id();
  return g.emit(a.value() * s, {a}, [ia, s](Graph& g, std::size_t self) { g.accumulate(ia, g.grad(self) * s); });
}

/// Multiplies `a` by a 1x1 node.
inline Var scale_by(const Var& a, const Var& s) {
  Graph& g = detail::same_graph(a, s);
  require(s.rows() == 1 && s.cols() == 1, "scale_by: factor must be 1x1");
  const std::size_t ia = a.id(), is = s.id();
  return g.emit(a.value() * s.scalar(), {a, s}, [ia, is](Graph& g, std::size_t self) {
    const Matrix& gy = g.grad(self);
    if (g.requires_grad(ia)) g.accumulate(ia, gy * g.value(is)(0, 0));
    if (g.requires_grad(is)) g.accumulate(is, Matrix::Constant(1, 1, gy.cwiseProduct(g.value(ia)).sum()));
  });
}

inline Var add_scalar(const Var& a, double s) {
  Graph& g = *a.graph();
  const std::size_t ia = a.id();
  return g.emit((a.value().array() + s).matrix(), {a}, [ia](Graph& g, std::size_t self) { g.accumulate(ia, g.grad(self)); });
}

inline Var tanh(const Var& a) {
  Graph& g = *a.graph();
  const std::size_t ia = a.id();
  return g.emit(a.value().array().tanh().matrix(), {a}, [ia](Graph& g, std::size_t self) {
    const Matrix& y = g.value(self);
    g.accumulate(ia, g.grad(self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

inline Var exp(const Var& a) {
  Graph& g = *a.graph();
  const std::size_t ia = a.id();
  return g.emit(a.value().array().exp().matrix(), {a}, [ia](Graph& g, std::size_t self) {
    g.accumulate(ia, g.grad(self).cwiseProduct(g.value(self)));
  });
}

inline Var relu(const Var& a) {
  Graph& g = *a.graph();
  const std::size_t ia = a.id();
  return g.emit(a.value().cwiseMax(0.0), {a}, [ia](Graph& g, std::size_t self) {
    const Matrix& x = g.value(ia);
    g.accumulate(ia, g.grad(self).cwiseProduct((x.array() > 0.0).cast<double>().matrix()));
  });
}

/// tanh approximation of GELU.
inline Var gelu(const Var& a) {
  Graph& g = *a.graph();
  const std::size_t ia = a.id();
  static constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const Eigen::ArrayXXd x = a.value().array();
  Matrix y = (0.5 * x * (1.0 + (c * (x + 0.044715 * x.cube())).tanh())).matrix();
  return g.emit(std::move(y), {a}, [ia](Graph& g, std::size_t self) {
    const Eigen::ArrayXXd x = g.value(ia).array();
    const Eigen::ArrayXXd t = (c * (x + 0.044715 * x.cube())).tanh();
    const Eigen::ArrayXXd dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t.square()) * c * (1.0 + 3.0 * 0.044715 * x.square());
    g.accumulate(ia, (g.grad(self).array() * dy).matrix());
  });
}

inline Var sum(const Var& a) {
  Graph& g = *a.graph();
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return g.emit(Matrix::Constant(1, 1, a.value().sum()), {a}, [ia, r, c](Graph& g, std::size_t self) {
    g.accumulate(ia, Matrix::Constant(r, c, g.grad(self)(0, 0)));
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// max(a, 0) for a 1x1 node; derivative 1 where a > 0, else 0.
inline Var clamp_min_zero(const Var& a) { return relu(a); }

/// Row-wise layer normalisation with learned gain and bias (both 1 x c).
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  Graph& g = *x.graph();
  const Eigen::Index n = x.rows(), c = x.cols();
  require(gamma.cols() == c && beta.cols() == c, "layer_norm: gain/bias width mismatch");
  Matrix xhat(n, c);
  Vector inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.value().row(i).mean();
    const double var = (x.value().row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
  }
  Matrix y = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return g.emit(std::move(y), {x, gamma, beta},
                [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
                  const Matrix& gy = g.grad(self);
                  if (g.requires_grad(ig)) g.accumulate(ig, gy.cwiseProduct(xhat).colwise().sum());
                  if (g.requires_grad(ib)) g.accumulate(ib, gy.colwise().sum());
                  if (g.requires_grad(ix)) {
                    const Eigen::Index c = gy.cols();
                    Matrix gxhat = gy.array().rowwise() * g.value(ig).row(0).array();
                    Matrix gx(gy.rows(), c);
                    for (Eigen::Index i = 0; i < gy.rows(); ++i) {
                      const double m1 = gxhat.row(i).mean();
                      const double m2 = gxhat.row(i).cwiseProduct(xhat.row(i)).mean();
                      gx.row(i) = inv_std(i) * (gxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                    }
                    g.accumulate(ix, gx);
                  }
                });
}

/// Row-wise softmax. With `causal`, entry (i, j) for j > i is excluded.
inline Var softmax_rows(const Var& x, bool causal = false) {
  Graph& g = *x.graph();
  const Eigen::Index n = x.rows(), c = x.cols();
  Matrix y = Matrix::Zero(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index width = causal ? std::min<Eigen::Index>(i + 1, c) : c;
    const auto row = x.value().row(i).head(width);
    const double m = row.maxCoeff();
    y.row(i).head(width) = (row.array() - m).exp();
    y.row(i).head(width) /= y.row(i).head(width).sum();
  }
  const std::size_t ix = x.id();
  return g.emit(std::move(y), {x}, [ix](Graph& g, std::size_t self) {
    const Matrix& y = g.value(self);
    const Matrix& gy = g.grad(self);
    const Vector dots = gy.cwiseProduct(y).rowwise().sum();
    g.accumulate(ix, (y.array() * (gy.colwise() - dots).array()).matrix());
  });
}

inline Var log_softmax_rows(const Var& x) {
  Graph& g = *x.graph();
  const Eigen::Index n = x.rows();
  Matrix y(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = x.value().row(i).maxCoeff();
    const double lse = m + std::log((x.value().row(i).array() - m).exp().sum());
    y.row(i) = x.value().row(i).array() - lse;
  }
  const std::size_t ix = x.id();
  return g.emit(std::move(y), {x}, [ix](Graph& g, std::size_t self) {
    const Matrix& gy = g.grad(self);
    const Matrix p = g.value(self).array().exp().matrix();
    const Vector s = gy.rowwise().sum();
    g.accumulate(ix, gy - (p.array().colwise() * s.array()).matrix());
  });
}

/// Column vector y(i) = x(i, index[i]).
inline Var pick(const Var& x, std::span<const int> index) {
  Graph& g = *x.graph();
  require(static_cast<Eigen::Index>(index.size()) == x.rows(), "pick: one index per row required");
  Matrix y(x.rows(), 1);
  std::vector<int> idx(index.begin(), index.end());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    require(idx[i] >= 0 && idx[i] < x.cols(), "pick: index out of range");
    y(i, 0) = x.value()(i, idx[i]);
  }
  const std::size_t ix = x.id();
  const Eigen::Index r = x.rows(), c = x.cols();
  return g.emit(std::move(y), {x}, [ix, r, c, idx = std::move(idx)](Graph& g, std::size_t self) {
    Matrix gx = Matrix::Zero(r, c);
    for (Eigen::Index i = 0; i < r; ++i) gx(i, idx[i]) = g.grad(self)(i, 0);
    g.accumulate(ix, gx);
  });
}

/// Gathers rows of `table` by id.
inline Var embedding(const Var& table, std::span<const int> ids) {
  Graph& g = *table.graph();
  Matrix y(static_cast<Eigen::Index>(ids.size()), table.cols());
  std::vector<int> idx(ids.begin(), ids.end());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < table.rows(), "embedding: id " + std::to_string(idx[i]) + " out of range");
    y.row(static_cast<Eigen::Index>(i)) = table.value().row(idx[i]);
  }
  const std::size_t it = table.id();
  const Eigen::Index r = table.rows(), c = table.cols();
  return g.emit(std::move(y), {table}, [it, r, c, idx = std::move(idx)](Graph& g, std::size_t self) {
    Matrix gt = Matrix::Zero(r, c);
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.grad(self).row(static_cast<Eigen::Index>(i));
    g.accumulate(it, gt);
  });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  Graph& g = *a.graph();
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: range out of bounds");
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return g.emit(a.value().middleRows(start, count), {a}, [ia, r, c, start, count](Graph& g, std::size_t self) {
    Matrix ga = Matrix::Zero(r, c);
    ga.middleRows(start, count) = g.grad(self);
    g.accumulate(ia, ga);
  });
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  Graph& g = *a.graph();
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: range out of bounds");
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return g.emit(a.value().middleCols(start, count), {a}, [ia, r, c, start, count](Graph& g, std::size_t self) {
    Matrix ga = Matrix::Zero(r, c);
    ga.middleCols(start, count) = g.grad(self);
    g.accumulate(ia, ga);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  Graph& g = *parts.front().graph();
  const Eigen::Index r = parts.front().rows();
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    require(p.rows() == r, "concat_cols: row mismatch");
    c += p.cols();
  }
  Matrix y(r, c);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    y.middleCols(off, p.cols()) = p.value();
    spans.emplace_back(p.id(), p.cols());
    off += p.cols();
  }
  return g.emit(std::move(y), parts, [spans = std::move(spans)](Graph& g, std::size_t self) {
    Eigen::Index off = 0;
    for (const auto& [id, w] : spans) {
      if (g.requires_grad(id)) g.accumulate(id, g.grad(self).middleCols(off, w));
      off += w;
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no parts");
  Graph& g = *parts.front().graph();
  const Eigen::Index c = parts.front().cols();
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    require(p.cols() == c, "concat_rows: column mismatch");
    r += p.rows();
  }
  Matrix y(r, c);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    y.middleRows(off, p.rows()) = p.value();
    spans.emplace_back(p.id(), p.rows());
    off += p.rows();
  }
  return g.emit(std::move(y), parts, [spans = std::move(spans)](Graph& g, std::size_t self) {
    Eigen::Index off = 0;
    for (const auto& [id, h] : spans) {
      if (g.requires_grad(id)) g.accumulate(id, g.grad(self).middleRows(off, h));
      off += h;
    }
  });
}

/// Inverted dropout; identity when p == 0.
inline Var dropout(const Var& a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  Graph& g = *a.graph();
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  const std::size_t ia = a.id();
  Matrix y = a.value().cwiseProduct(mask);
  return g.emit(std::move(y), {a}, [ia, mask = std::move(mask)](Graph& g, std::size_t self) {
    g.accumulate(ia, g.grad(self).cwiseProduct(mask));
  });
}

/// KL(N(mu_q, e^lv_q) || N(mu_p, e^lv_p)) summed over all entries; 1x1.
inline Var gaussian_kl(const Var& mu_q, const Var& lv_q, const Var& mu_p, const Var& lv_p) {
  detail::require_same_shape(mu_q, lv_q, "gaussian_kl");
  detail::require_same_shape(mu_q, mu_p, "gaussian_kl");
  detail::require_same_shape(mu_q, lv_p, "gaussian_kl");
  Graph& g = *mu_q.graph();
  const auto dmu = (mu_q.value() - mu_p.value()).array();
  const auto var_q = lv_q.value().array().exp();
  const auto inv_var_p = (-lv_p.value().array()).exp();
  const double kl = 0.5 * (lv_p.value().array() - lv_q.value().array() + (var_q + dmu.square()) * inv_var_p - 1.0).sum();
  const std::size_t a = mu_q.id(), b = lv_q.id(), c = mu_p.id(), d = lv_p.id();
  return g.emit(Matrix::Constant(1, 1, kl), {mu_q, lv_q, mu_p, lv_p}, [a, b, c, d](Graph& g, std::size_t self) {
    const double gy = g.grad(self)(0, 0);
    const auto dmu = (g.value(a) - g.value(c)).array();
    const auto var_q = g.value(b).array().exp();
    const auto inv_var_p = (-g.value(d).array()).exp();
    if (g.requires_grad(a)) g.accumulate(a, (gy * dmu * inv_var_p).matrix());
    if (g.requires_grad(c)) g.accumulate(c, (-gy * dmu * inv_var_p).matrix());
    if (g.requires_grad(b)) g.accumulate(b, (gy * 0.5 * (var_q * inv_var_p - 1.0)).matrix());
    if (g.requires_grad(d)) g.accumulate(d, (gy * 0.5 * (1.0 - (var_q + dmu.square()) * inv_var_p)).matrix());
  });
}

}  // namespace chvt::ad
