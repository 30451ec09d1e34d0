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
#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tdsep/autograd.hpp"
#include "tdsep/random.hpp"

namespace tdsep {

/// Ordered registry of learnable tensors keyed by module path
/// (e.g. "sep.tcn0.block1.a.conv.w"). Insertion order is the serialization
/// order.
template <typename T>
class ParamStore {
 public:
  Var<T> create(const std::string& name, Matrix<T> init) {
    if (index_.count(name) != 0) throw ConfigError("duplicate parameter name: " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, Var<T>::parameter(std::move(init)));
    return entries_.back().second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Var<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].second;
  }
  const Var<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].second;
  }

  const std::vector<std::pair<std::string, Var<T>>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Var<T>>>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t total = 0;
    for (const auto& [name, v] : entries_) total += static_cast<std::size_t>(v.value().size());
    return total;
  }

  void zero_grad() {
    for (auto& [name, v] : entries_) v.zero_grad();
  }

  /// Applies `fn(name, value)` to every parameter whose name starts with prefix.
  template <typename Fn>
  void for_each_with_prefix(const std::string& prefix, Fn&& fn) {
    for (auto& [name, v] : entries_) {
      if (name.compare(0, prefix.size(), prefix) == 0) fn(name, v.mutable_value());
    }
  }

  /// Copies every value under `from_prefix` onto the parameter with the same
  /// suffix under `to_prefix`.
  void copy_prefix(const std::string& from_prefix, const std::string& to_prefix) {
    for (auto& [name, v] : entries_) {
      if (name.compare(0, from_prefix.size(), from_prefix) != 0) continue;
      at(to_prefix + name.substr(from_prefix.size())).mutable_value() = v.value();
    }
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
template <typename T>
Matrix<T> fan_in_uniform(Index rows, Index cols, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(1, fan_in)));
  Matrix<T> m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = static_cast<T>(uniform(rng, -bound, bound));
  return m;
}

}  // namespace tdsep
