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

// Differentiable convolution and normalization primitives on (time x channel)
// feature maps.

#include <cmath>

#include "tdsep/autograd.hpp"

namespace tdsep {

/// Epsilon added to the variance before the square root in every normalizer.
inline constexpr double kNormEpsilon = 1e-8;

/// Left zero-padding for a length-preserving dilated convolution. The total
/// padding (K-1)*d is split symmetrically; odd totals put the extra sample on
/// the right.
inline Index same_padding_left(Index kernel, Index dilation) { return (kernel - 1) * dilation / 2; }

/// Per-channel dilated convolution with zero padding that keeps the length:
///   y(p, c) = sum_t kernel(t, c) * x(p + pad_right - t*d, c)
/// i.e. the full convolution sum over s + d*t = p shifted by pad_right, so the
/// input window spans [p - pad_left, p + pad_right]. kernel is (K x C).
template <typename T>
Var<T> depthwise_conv(const Var<T>& x, const Var<T>& kernel, Index dilation) {
  detail::require_shape(kernel.cols() == x.cols(), "depthwise_conv: channel mismatch");
  detail::require_shape(kernel.rows() >= 1 && dilation >= 1, "depthwise_conv: bad kernel");
  const Index taps = kernel.rows();
  const Index steps = x.rows();
  const Index pad = same_padding_left(taps, dilation);
  const Matrix<T>& xv = x.value();
  const Matrix<T>& kv = kernel.value();
  Matrix<T> y = Matrix<T>::Zero(steps, x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    for (Index k = 0; k < taps; ++k) {
      const Index shift = k * dilation - pad;
      const Index lo = std::max<Index>(0, -shift);
      const Index hi = std::min<Index>(steps, steps - shift);
      if (hi <= lo) continue;
      y.col(c).segment(lo, hi - lo) += kv(taps - 1 - k, c) * xv.col(c).segment(lo + shift, hi - lo);
    }
  }
  return detail::make_op<T>(std::move(y), {x, kernel}, [dilation, pad](Node<T>& n) {
    const Matrix<T>& xv = n.parent(0).value;
    const Matrix<T>& kv = n.parent(1).value;
    const Index taps = kv.rows();
    const Index steps = xv.rows();
    const bool want_x = n.parent(0).requires_grad;
    const bool want_k = n.parent(1).requires_grad;
    Matrix<T> gx = want_x ? Matrix<T>::Zero(steps, xv.cols()) : Matrix<T>();
    Matrix<T> gk = want_k ? Matrix<T>::Zero(taps, kv.cols()) : Matrix<T>();
    for (Index c = 0; c < xv.cols(); ++c) {
      for (Index k = 0; k < taps; ++k) {
        const Index shift = k * dilation - pad;
        const Index lo = std::max<Index>(0, -shift);
        const Index hi = std::min<Index>(steps, steps - shift);
        if (hi <= lo) continue;
        const auto g = n.grad.col(c).segment(lo, hi - lo);
        if (want_x) gx.col(c).segment(lo + shift, hi - lo) += kv(taps - 1 - k, c) * g;
        if (want_k) gk(taps - 1 - k, c) += g.dot(xv.col(c).segment(lo + shift, hi - lo));
      }
    }
    if (want_x) n.parent(0).accumulate(gx);
    if (want_k) n.parent(1).accumulate(gk);
  });
}

/// Dense dilated convolution with length-preserving zero padding.
/// weight stacks the K per-tap (Cin x Cout) matrices vertically: (K*Cin x Cout).
template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, Index kernel,
              Index dilation) {
  const Index cin = x.cols();
  detail::require_shape(kernel >= 1 && dilation >= 1, "conv1d: bad kernel");
  detail::require_shape(weight.rows() == kernel * cin, "conv1d: weight shape");
  detail::require_shape(bias.rows() == 1 && bias.cols() == weight.cols(), "conv1d: bias shape");
  const Index steps = x.rows();
  const Index pad = same_padding_left(kernel, dilation);
  Matrix<T> y(steps, weight.cols());
  y.rowwise() = bias.value().row(0);
  for (Index k = 0; k < kernel; ++k) {
    const Index shift = k * dilation - pad;
    const Index lo = std::max<Index>(0, -shift);
    const Index hi = std::min<Index>(steps, steps - shift);
    if (hi <= lo) continue;
    y.middleRows(lo, hi - lo).noalias() +=
        x.value().middleRows(lo + shift, hi - lo) * weight.value().middleRows(k * cin, cin);
  }
  return detail::make_op<T>(std::move(y), {x, weight, bias}, [kernel, dilation, pad, cin](Node<T>& n) {
    const Matrix<T>& xv = n.parent(0).value;
    const Matrix<T>& wv = n.parent(1).value;
    const Index steps = xv.rows();
    const bool want_x = n.parent(0).requires_grad;
    const bool want_w = n.parent(1).requires_grad;
    Matrix<T> gx = want_x ? Matrix<T>::Zero(steps, cin) : Matrix<T>();
    Matrix<T> gw = want_w ? Matrix<T>::Zero(wv.rows(), wv.cols()) : Matrix<T>();
    for (Index k = 0; k < kernel; ++k) {
      const Index shift = k * dilation - pad;
      const Index lo = std::max<Index>(0, -shift);
      const Index hi = std::min<Index>(steps, steps - shift);
      if (hi <= lo) continue;
      const auto g = n.grad.middleRows(lo, hi - lo);
      if (want_x)
        gx.middleRows(lo + shift, hi - lo).noalias() += g * wv.middleRows(k * cin, cin).transpose();
      if (want_w)
        gw.middleRows(k * cin, cin).noalias() += xv.middleRows(lo + shift, hi - lo).transpose() * g;
    }
    if (want_x) n.parent(0).accumulate(gx);
    if (want_w) n.parent(1).accumulate(gw);
    detail::push(n.parent(2), n.grad.colwise().sum());
  });
}

/// Global normalization: standardize with one mean/variance over all time
/// steps and channels jointly, then apply per-channel gain and bias (1 x C).
///
/// With `detach_stats` the mean and deviation are treated as constants in the
/// backward pass, which exposes the purely local receptive field of a stack.
template <typename T>
Var<T> global_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias,
                   bool detach_stats = false) {
  detail::require_shape(x.value().size() >= 2, "global_norm: needs at least two values");
  detail::require_shape(gain.cols() == x.cols() && bias.cols() == x.cols(),
                        "global_norm: gain/bias shape");
  const T count = static_cast<T>(x.value().size());
  const T mean = x.value().sum() / count;
  Matrix<T> centered = (x.value().array() - mean).matrix();
  const T var = centered.squaredNorm() / count;
  const T inv_std = T(1) / std::sqrt(var + static_cast<T>(kNormEpsilon));
  Matrix<T> normed = centered * inv_std;
  Matrix<T> y = normed * gain.value().row(0).asDiagonal();
  y.rowwise() += bias.value().row(0);
  return detail::make_op<T>(
      std::move(y), {x, gain, bias},
      [normed = std::move(normed), inv_std, detach_stats](Node<T>& n) {
        if (n.parent(0).requires_grad) {
          Matrix<T> g = n.grad * n.parent(1).value.row(0).asDiagonal();
          if (detach_stats) {
            n.parent(0).accumulate(g * inv_std);
          } else {
            const T count = static_cast<T>(g.size());
            const T g_mean = g.sum() / count;
            const T gy_mean = g.cwiseProduct(normed).sum() / count;
            n.parent(0).accumulate(((g.array() - g_mean) - normed.array() * gy_mean).matrix() * inv_std);
          }
        }
        detail::push(n.parent(1), n.grad.cwiseProduct(normed).colwise().sum());
        detail::push(n.parent(2), n.grad.colwise().sum());
      });
}

/// Per-frame layer normalization over channels with per-channel gain and bias.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias) {
  detail::require_shape(x.cols() >= 1, "layer_norm: no channels");
  detail::require_shape(gain.cols() == x.cols() && bias.cols() == x.cols(),
                        "layer_norm: gain/bias shape");
  const Index channels = x.cols();
  const T inv_c = T(1) / static_cast<T>(channels);
  Eigen::Matrix<T, Eigen::Dynamic, 1> mean = x.value().rowwise().sum() * inv_c;
  Matrix<T> normed = x.value().colwise() - mean;
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std =
      (normed.rowwise().squaredNorm() * inv_c).unaryExpr([](T v) {
        return T(1) / std::sqrt(v + static_cast<T>(kNormEpsilon));
      });
  normed = inv_std.asDiagonal() * normed;
  Matrix<T> y = normed * gain.value().row(0).asDiagonal();
  y.rowwise() += bias.value().row(0);
  return detail::make_op<T>(
      std::move(y), {x, gain, bias},
      [normed = std::move(normed), inv_std = std::move(inv_std), inv_c](Node<T>& n) {
        if (n.parent(0).requires_grad) {
          Matrix<T> g = n.grad * n.parent(1).value.row(0).asDiagonal();
          Eigen::Matrix<T, Eigen::Dynamic, 1> g_mean = g.rowwise().sum() * inv_c;
          Eigen::Matrix<T, Eigen::Dynamic, 1> gy_mean =
              g.cwiseProduct(normed).rowwise().sum() * inv_c;
          Matrix<T> gx = g.colwise() - g_mean;
          gx -= gy_mean.asDiagonal() * normed;
          n.parent(0).accumulate(inv_std.asDiagonal() * gx);
        }
        detail::push(n.parent(1), n.grad.cwiseProduct(normed).colwise().sum());
        detail::push(n.parent(2), n.grad.colwise().sum());
      });
}

}  // namespace tdsep
