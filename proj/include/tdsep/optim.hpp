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

#include <cmath>
#include <map>
#include <string>

#include "tdsep/params.hpp"

namespace tdsep {

struct OptimizerConfig {
  std::string method = "adam";
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment gradient descent with global gradient-norm clipping.
template <typename T>
class Adam {
 public:
  explicit Adam(OptimizerConfig cfg) : cfg_(std::move(cfg)) {
    detail::require_config(cfg_.method == "adam", "optimizer: only 'adam' is available");
    detail::require_config(cfg_.learning_rate > 0.0 && cfg_.clip_norm > 0.0,
                           "optimizer: learning rate and clip norm must be positive");
  }

  /// Global L2 norm of all gradients (missing gradients count as zero).
  static double grad_norm(const ParamStore<T>& store) {
    double total = 0.0;
    for (const auto& [name, v] : store.entries()) {
      if (v.grad().size() != 0) total += static_cast<double>(v.grad().squaredNorm());
    }
    return std::sqrt(total);
  }

  /// Clips, updates every parameter and returns the pre-clip gradient norm.
  double step(ParamStore<T>& store) {
    const double norm = grad_norm(store);
    if (!std::isfinite(norm)) throw NumericError("optimizer: non-finite gradient norm");
    const T clip = norm > cfg_.clip_norm ? static_cast<T>(cfg_.clip_norm / norm) : T(1);
    ++steps_;
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T corr1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_)));
    const T corr2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_)));
    const T lr = static_cast<T>(cfg_.learning_rate);
    const T eps = static_cast<T>(cfg_.epsilon);
    for (auto& [name, v] : store.entries()) {
      auto& st = state_[name];
      Matrix<T>& value = v.mutable_value();
      if (st.m.size() == 0) {
        st.m = Matrix<T>::Zero(value.rows(), value.cols());
        st.v = Matrix<T>::Zero(value.rows(), value.cols());
      }
      if (v.grad().size() == 0) {
        st.m *= b1;
        st.v *= b2;
      } else {
        const Matrix<T> g = v.grad() * clip;
        st.m = b1 * st.m + (T(1) - b1) * g;
        st.v = b2 * st.v + (T(1) - b2) * g.cwiseProduct(g);
      }
      value.array() -= lr * (st.m.array() / corr1) / ((st.v.array() / corr2).sqrt() + eps);
    }
    return norm;
  }

  struct Moments {
    Matrix<T> m;
    Matrix<T> v;
  };

  long long steps() const { return steps_; }
  const std::map<std::string, Moments>& state() const { return state_; }
  void restore(long long steps, std::map<std::string, Moments> state) {
    steps_ = steps;
    state_ = std::move(state);
  }

 private:
  OptimizerConfig cfg_;
  long long steps_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace tdsep
