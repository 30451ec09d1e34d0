// Copyright 2026 The tdsep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every feature map is a (time x channels) matrix. Graph nodes hold their
// forward value, a lazily allocated gradient and a closure that pushes the
// gradient to the parents. Parameters are leaf nodes that outlive the graph.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tdsep/error.hpp"

namespace tdsep {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;
using Index = Eigen::Index;

namespace detail {
inline bool& grad_mode() {
  static thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// Disables graph construction in the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Matrix<T> value;
  Matrix<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
  Node& parent(std::size_t i) { return *parents[i]; }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Matrix<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }
  static Var parameter(Matrix<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix<T>& value() const { return node_->value; }
  Matrix<T>& mutable_value() { return node_->value; }
  /// Gradient after backward(); empty when nothing flowed into this node.
  const Matrix<T>& grad() const { return node_->grad; }
  Matrix<T>& mutable_grad() { return node_->grad; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  T scalar() const { return node_->value(0, 0); }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
Var<T> make_op(Matrix<T> value, std::initializer_list<Var<T>> parents,
               std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (grad_mode()) {
    for (const auto& p : parents) n->requires_grad |= p.requires_grad();
  }
  if (n->requires_grad) {
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Var<T>(std::move(n));
}

template <typename T>
Var<T> make_op(Matrix<T> value, const std::vector<Var<T>>& parents,
               std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (grad_mode()) {
    for (const auto& p : parents) n->requires_grad |= p.requires_grad();
  }
  if (n->requires_grad) {
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Var<T>(std::move(n));
}

template <typename T, typename Derived>
void push(Node<T>& parent, const Eigen::MatrixBase<Derived>& g) {
  if (parent.requires_grad) parent.accumulate(g);
}

}  // namespace detail

/// Back-propagates from a scalar (1x1) root into every reachable node.
template <typename T>
void backward(const Var<T>& root) {
  detail::require_shape(root.rows() == 1 && root.cols() == 1,
                        "backward() needs a scalar root");
  if (!root.requires_grad()) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  // Iterative post-order DFS; recursion depth would track network depth.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->accumulate(Matrix<T>::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
  // Interior gradients are no longer needed once propagated.
  for (Node<T>* n : order) {
    if (n->backward) {
      n->grad.resize(0, 0);
    }
  }
}

// ---------------------------------------------------------------------------
// Element-wise arithmetic

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) {
  detail::require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return detail::make_op<T>(a.value() + b.value(), {a, b}, [](Node<T>& n) {
    detail::push(n.parent(0), n.grad);
    detail::push(n.parent(1), n.grad);
  });
}

template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) {
  detail::require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  return detail::make_op<T>(a.value() - b.value(), {a, b}, [](Node<T>& n) {
    detail::push(n.parent(0), n.grad);
    detail::push(n.parent(1), -n.grad);
  });
}

/// Hadamard product.
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) {
  detail::require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  return detail::make_op<T>(a.value().cwiseProduct(b.value()), {a, b}, [](Node<T>& n) {
    detail::push(n.parent(0), n.grad.cwiseProduct(n.parent(1).value));
    detail::push(n.parent(1), n.grad.cwiseProduct(n.parent(0).value));
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  return detail::make_op<T>(a.value() * factor, {a}, [factor](Node<T>& n) {
    detail::push(n.parent(0), n.grad * factor);
  });
}

/// 1 - a
template <typename T>
Var<T> one_minus(const Var<T>& a) {
  return detail::make_op<T>((T(1) - a.value().array()).matrix(), {a}, [](Node<T>& n) {
    detail::push(n.parent(0), -n.grad);
  });
}

/// Arithmetic mean of equally shaped operands.
template <typename T>
Var<T> mean_of(const std::vector<Var<T>>& xs) {
  detail::require_shape(!xs.empty(), "mean_of: empty operand list");
  Matrix<T> acc = xs.front().value();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    detail::require_shape(xs[i].rows() == acc.rows() && xs[i].cols() == acc.cols(),
                          "mean_of: shape mismatch");
    acc += xs[i].value();
  }
  const T inv = T(1) / static_cast<T>(xs.size());
  acc *= inv;
  return detail::make_op<T>(std::move(acc), xs, [inv](Node<T>& n) {
    for (auto& p : n.parents) detail::push(*p, n.grad * inv);
  });
}

/// Sum of every element, as a 1x1 result.
template <typename T>
Var<T> sum_all(const Var<T>& a) {
  Matrix<T> v(1, 1);
  v(0, 0) = a.value().sum();
  return detail::make_op<T>(std::move(v), {a}, [](Node<T>& n) {
    const auto& p = n.parent(0).value;
    detail::push(n.parent(0), Matrix<T>::Constant(p.rows(), p.cols(), n.grad(0, 0)));
  });
}

/// x scaled by the single entry w(0, index); w is a 1xB row.
template <typename T>
Var<T> scale_by_entry(const Var<T>& x, const Var<T>& w, Index index) {
  detail::require_shape(w.rows() == 1 && index >= 0 && index < w.cols(),
                        "scale_by_entry: index out of range");
  return detail::make_op<T>(x.value() * w.value()(0, index), {x, w}, [index](Node<T>& n) {
    detail::push(n.parent(0), n.grad * n.parent(1).value(0, index));
    if (n.parent(1).requires_grad) {
      Matrix<T> g = Matrix<T>::Zero(1, n.parent(1).value.cols());
      g(0, index) = n.grad.cwiseProduct(n.parent(0).value).sum();
      n.parent(1).accumulate(g);
    }
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities

template <typename T>
T logistic(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Matrix<T> y = a.value().unaryExpr([](T z) { return logistic(z); });
  return detail::make_op<T>(std::move(y), {a}, [](Node<T>& n) {
    detail::push(n.parent(0),
                 n.grad.cwiseProduct(n.value.cwiseProduct((T(1) - n.value.array()).matrix())));
  });
}

/// PReLU with one learned slope per channel (column); slope is 1xC.
template <typename T>
Var<T> prelu(const Var<T>& x, const Var<T>& slope) {
  detail::require_shape(slope.rows() == 1 && slope.cols() == x.cols(), "prelu: slope shape");
  const Matrix<T>& xv = x.value();
  Matrix<T> y(xv.rows(), xv.cols());
  for (Index c = 0; c < xv.cols(); ++c) {
    const T a = slope.value()(0, c);
    for (Index t = 0; t < xv.rows(); ++t) {
      const T v = xv(t, c);
      y(t, c) = v > T(0) ? v : a * v;
    }
  }
  return detail::make_op<T>(std::move(y), {x, slope}, [](Node<T>& n) {
    const Matrix<T>& xv = n.parent(0).value;
    const Matrix<T>& av = n.parent(1).value;
    const bool want_x = n.parent(0).requires_grad;
    Matrix<T> gx(want_x ? xv.rows() : 0, want_x ? xv.cols() : 0);
    Matrix<T> ga = Matrix<T>::Zero(1, xv.cols());
    for (Index c = 0; c < xv.cols(); ++c) {
      const T a = av(0, c);
      T acc = 0;
      for (Index t = 0; t < xv.rows(); ++t) {
        const T v = xv(t, c);
        const T g = n.grad(t, c);
        if (v > T(0)) {
          if (want_x) gx(t, c) = g;
        } else {
          if (want_x) gx(t, c) = a * g;
          acc += v * g;
        }
      }
      ga(0, c) = acc;
    }
    if (want_x) n.parent(0).accumulate(gx);
    detail::push(n.parent(1), ga);
  });
}

/// Softmax across `groups` equally sized column blocks, independently for
/// every (row, column-within-block) position.
template <typename T>
Var<T> softmax_groups(const Var<T>& logits, Index groups) {
  detail::require_shape(groups >= 1 && logits.cols() % groups == 0,
                        "softmax_groups: columns not divisible by groups");
  const Index width = logits.cols() / groups;
  const Matrix<T>& z = logits.value();
  Matrix<T> y(z.rows(), z.cols());
  for (Index c = 0; c < width; ++c) {
    for (Index t = 0; t < z.rows(); ++t) {
      T top = z(t, c);
      for (Index g = 1; g < groups; ++g) top = std::max(top, z(t, g * width + c));
      T total = 0;
      for (Index g = 0; g < groups; ++g) {
        const T e = std::exp(z(t, g * width + c) - top);
        y(t, g * width + c) = e;
        total += e;
      }
      for (Index g = 0; g < groups; ++g) y(t, g * width + c) /= total;
    }
  }
  return detail::make_op<T>(std::move(y), {logits}, [groups, width](Node<T>& n) {
    Matrix<T> gz(n.value.rows(), n.value.cols());
    for (Index c = 0; c < width; ++c) {
      for (Index t = 0; t < n.value.rows(); ++t) {
        T dot = 0;
        for (Index g = 0; g < groups; ++g) dot += n.grad(t, g * width + c) * n.value(t, g * width + c);
        for (Index g = 0; g < groups; ++g) {
          const Index k = g * width + c;
          gz(t, k) = n.value(t, k) * (n.grad(t, k) - dot);
        }
      }
    }
    detail::push(n.parent(0), gz);
  });
}

// ---------------------------------------------------------------------------
// Linear maps

/// Pointwise (1x1) convolution: x (T x Cin) * w (Cin x Cout) + bias (1 x Cout).
/// Pass an undefined bias for a bias-free map.
template <typename T>
Var<T> affine(const Var<T>& x, const Var<T>& w, const Var<T>& bias = Var<T>()) {
  detail::require_shape(x.cols() == w.rows(), "affine: inner dimension mismatch");
  Matrix<T> y = x.value() * w.value();
  if (bias.defined()) {
    detail::require_shape(bias.rows() == 1 && bias.cols() == w.cols(), "affine: bias shape");
    y.rowwise() += bias.value().row(0);
    return detail::make_op<T>(std::move(y), {x, w, bias}, [](Node<T>& n) {
      detail::push(n.parent(0), n.grad * n.parent(1).value.transpose());
      detail::push(n.parent(1), n.parent(0).value.transpose() * n.grad);
      detail::push(n.parent(2), n.grad.colwise().sum());
    });
  }
  return detail::make_op<T>(std::move(y), {x, w}, [](Node<T>& n) {
    detail::push(n.parent(0), n.grad * n.parent(1).value.transpose());
    detail::push(n.parent(1), n.parent(0).value.transpose() * n.grad);
  });
}

// ---------------------------------------------------------------------------
// Structural ops

template <typename T>
Var<T> slice_cols(const Var<T>& x, Index start, Index count) {
  detail::require_shape(start >= 0 && count >= 0 && start + count <= x.cols(), "slice_cols: range");
  return detail::make_op<T>(x.value().middleCols(start, count), {x}, [start, count](Node<T>& n) {
    if (!n.parent(0).requires_grad) return;
    Matrix<T> g = Matrix<T>::Zero(n.parent(0).value.rows(), n.parent(0).value.cols());
    g.middleCols(start, count) = n.grad;
    n.parent(0).accumulate(g);
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& x, Index start, Index count) {
  detail::require_shape(start >= 0 && count >= 0 && start + count <= x.rows(), "slice_rows: range");
  return detail::make_op<T>(x.value().middleRows(start, count), {x}, [start, count](Node<T>& n) {
    if (!n.parent(0).requires_grad) return;
    Matrix<T> g = Matrix<T>::Zero(n.parent(0).value.rows(), n.parent(0).value.cols());
    g.middleRows(start, count) = n.grad;
    n.parent(0).accumulate(g);
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  detail::require_shape(!parts.empty(), "concat_rows: nothing to concatenate");
  Index rows = 0;
  for (const auto& p : parts) {
    detail::require_shape(p.cols() == parts.front().cols(), "concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix<T> y(rows, parts.front().cols());
  Index at = 0;
  for (const auto& p : parts) {
    y.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return detail::make_op<T>(std::move(y), parts, [](Node<T>& n) {
    Index at = 0;
    for (auto& p : n.parents) {
      const Index r = p->value.rows();
      detail::push(*p, n.grad.middleRows(at, r));
      at += r;
    }
  });
}

/// Max over time for each channel: (T x C) -> (1 x C).
template <typename T>
Var<T> max_pool_time(const Var<T>& x) {
  detail::require_shape(x.rows() >= 1, "max_pool_time: empty input");
  std::vector<Index> where(static_cast<std::size_t>(x.cols()));
  Matrix<T> y(1, x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    Index arg = 0;
    y(0, c) = x.value().col(c).maxCoeff(&arg);
    where[static_cast<std::size_t>(c)] = arg;
  }
  return detail::make_op<T>(std::move(y), {x}, [where](Node<T>& n) {
    Matrix<T> g = Matrix<T>::Zero(n.parent(0).value.rows(), n.parent(0).value.cols());
    for (Index c = 0; c < g.cols(); ++c) g(where[static_cast<std::size_t>(c)], c) = n.grad(0, c);
    detail::push(n.parent(0), g);
  });
}

/// Splits a 1-column signal into overlapping rows: out(t, l) = x(t*stride + l).
template <typename T>
Var<T> frame_signal(const Var<T>& x, Index frame_len, Index stride) {
  detail::require_shape(x.cols() == 1, "frame_signal: expects a single-column signal");
  detail::require_shape(frame_len >= 1 && stride >= 1, "frame_signal: bad framing");
  detail::require_shape(x.rows() >= frame_len, "frame_signal: signal shorter than one frame");
  const Index frames = (x.rows() - frame_len) / stride + 1;
  Matrix<T> y(frames, frame_len);
  for (Index l = 0; l < frame_len; ++l)
    for (Index t = 0; t < frames; ++t) y(t, l) = x.value()(t * stride + l, 0);
  return detail::make_op<T>(std::move(y), {x}, [frame_len, stride](Node<T>& n) {
    Matrix<T> g = Matrix<T>::Zero(n.parent(0).value.rows(), 1);
    for (Index l = 0; l < frame_len; ++l)
      for (Index t = 0; t < n.grad.rows(); ++t) g(t * stride + l, 0) += n.grad(t, l);
    detail::push(n.parent(0), g);
  });
}

/// Inverse of frame_signal's layout: sums rows back at the given stride.
/// Output length is (T - 1) * stride + frame_len.
template <typename T>
Var<T> overlap_add(const Var<T>& frames, Index stride) {
  detail::require_shape(frames.rows() >= 1 && stride >= 1, "overlap_add: bad input");
  const Index frame_len = frames.cols();
  const Index len = (frames.rows() - 1) * stride + frame_len;
  Matrix<T> y = Matrix<T>::Zero(len, 1);
  for (Index l = 0; l < frame_len; ++l)
    for (Index t = 0; t < frames.rows(); ++t) y(t * stride + l, 0) += frames.value()(t, l);
  return detail::make_op<T>(std::move(y), {frames}, [stride, frame_len](Node<T>& n) {
    const Index rows = n.parent(0).value.rows();
    Matrix<T> g(rows, frame_len);
    for (Index l = 0; l < frame_len; ++l)
      for (Index t = 0; t < rows; ++t) g(t, l) = n.grad(t * stride + l, 0);
    detail::push(n.parent(0), g);
  });
}

}  // namespace tdsep
