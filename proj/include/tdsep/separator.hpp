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

// Mask-estimating separators. All variants share the same head and tail:
//   layer norm -> 1x1 conv (N->B) -> [variant core] -> 1x1 conv (B->S*N)
//   -> softmax across the S source slots.
// The cores:
//   porta  num_tcns gated TCNs in series
//   sh     as porta, but each TCN outputs the mean of its per-block taps and
//          the separator uses the mean of all TCN outputs (no extra weights)
//   pa     as porta with parallel-branch blocks
//   su     as porta with highway (difference-gated) blocks
//   py     pyramid of branches of different TCN depths, each with its own
//          output conv; logits are mixed with per-utterance weights from a
//          small "weightor" network before the softmax

#include <optional>
#include <string>
#include <vector>

#include "tdsep/tcn.hpp"

namespace tdsep {

enum class Variant { kPorta, kPy, kSh, kPa, kSu };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kPorta: return "porta";
    case Variant::kPy: return "py";
    case Variant::kSh: return "sh";
    case Variant::kPa: return "pa";
    case Variant::kSu: return "su";
  }
  return "porta";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "porta") return Variant::kPorta;
  if (s == "py") return Variant::kPy;
  if (s == "sh") return Variant::kSh;
  if (s == "pa") return Variant::kPa;
  if (s == "su") return Variant::kSu;
  throw ConfigError("unknown separator variant '" + s + "' (expected porta, py, sh, pa or su)");
}

inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::kPorta, Variant::kPy, Variant::kSh, Variant::kPa, Variant::kSu};
  return v;
}

struct WeightorConfig {
  Index hidden_channels = 64;
  Index kernel = 3;
};

struct SeparatorConfig {
  Variant variant = Variant::kPorta;
  Index num_sources = 2;
  Index num_tcns = 4;
  Index bottleneck_channels = 128;
  Index hidden_channels = 128;
  Index kernel = 3;
  std::vector<Index> dilations{1, 2, 4, 4};
  std::vector<Index> py_branch_depths{3, 4, 5};
  WeightorConfig weightor;

  BlockKind block_kind() const {
    switch (variant) {
      case Variant::kPa: return BlockKind::kParallel;
      case Variant::kSu: return BlockKind::kHighway;
      default: return BlockKind::kGated;
    }
  }

  TcnConfig tcn() const {
    TcnConfig t;
    t.dilations = dilations;
    t.block.in_channels = bottleneck_channels;
    t.block.hidden_channels = hidden_channels;
    t.block.kernel = kernel;
    t.block.kind = block_kind();
    return t;
  }

  void validate() const {
    detail::require_config(num_sources >= 2, "separator: num_sources must be >= 2");
    detail::require_config(num_tcns >= 1, "separator: num_tcns must be >= 1");
    detail::require_config(!py_branch_depths.empty(), "separator: py_branch_depths must not be empty");
    for (Index d : py_branch_depths) detail::require_config(d >= 1, "separator: branch depths must be >= 1");
    detail::require_config(weightor.hidden_channels >= 1 && weightor.kernel >= 1,
                           "separator: weightor layers must be non-empty");
    tcn().validate();
  }
};

template <typename T>
struct SeparatorOutput {
  Var<T> masks;           // frames x (S*N), softmax over the S column blocks
  Var<T> branch_weights;  // 1 x branches, pyramid variant only
};

/// Per-utterance convex weights over pyramid branches:
/// Conv1d -> PReLU -> LayerNorm -> 3 x 1x1 conv -> max pool over time -> softmax.
template <typename T>
class Weightor {
 public:
  Weightor(const WeightorConfig& cfg, Index in_channels, Index branches, ParamStore<T>& store,
           const std::string& p, Rng& rng)
      : kernel_(cfg.kernel), branches_(branches) {
    const Index h = cfg.hidden_channels;
    conv_w_ = store.create(p + ".conv.w", fan_in_uniform<T>(cfg.kernel * in_channels, h, cfg.kernel * in_channels, rng));
    conv_b_ = store.create(p + ".conv.b", fan_in_uniform<T>(1, h, cfg.kernel * in_channels, rng));
    slope_ = store.create(p + ".prelu", Matrix<T>::Constant(1, h, T(0.25)));
    gain_ = store.create(p + ".ln.gain", Matrix<T>::Ones(1, h));
    shift_ = store.create(p + ".ln.bias", Matrix<T>::Zero(1, h));
    const Index outs[3] = {h, h, branches};
    for (int i = 0; i < 3; ++i) {
      const std::string q = p + ".fc" + std::to_string(i);
      fc_w_.push_back(store.create(q + ".w", fan_in_uniform<T>(h, outs[i], h, rng)));
      fc_b_.push_back(store.create(q + ".b", fan_in_uniform<T>(1, outs[i], h, rng)));
      if (i < 2) fc_slope_.push_back(store.create(q + ".prelu", Matrix<T>::Constant(1, outs[i], T(0.25))));
    }
  }

  Var<T> operator()(const Var<T>& rep) const {
    Var<T> h = layer_norm(prelu(conv1d(rep, conv_w_, conv_b_, kernel_, 1), slope_), gain_, shift_);
    h = prelu(affine(h, fc_w_[0], fc_b_[0]), fc_slope_[0]);
    h = prelu(affine(h, fc_w_[1], fc_b_[1]), fc_slope_[1]);
    h = affine(h, fc_w_[2], fc_b_[2]);
    return softmax_groups(max_pool_time(h), branches_);
  }

 private:
  Index kernel_;
  Index branches_;
  Var<T> conv_w_, conv_b_, slope_, gain_, shift_;
  std::vector<Var<T>> fc_w_, fc_b_, fc_slope_;
};

template <typename T>
class Separator {
 public:
  Separator(const SeparatorConfig& cfg, Index num_basis, ParamStore<T>& store, Rng& rng,
            const std::string& prefix = "sep")
      : cfg_(cfg), num_basis_(num_basis) {
    cfg_.validate();
    detail::require_config(num_basis >= 1, "separator: num_basis must be >= 1");
    const Index n = num_basis;
    const Index b = cfg_.bottleneck_channels;
    const Index out = cfg_.num_sources * n;
    ln_gain_ = store.create(prefix + ".ln.gain", Matrix<T>::Ones(1, n));
    ln_bias_ = store.create(prefix + ".ln.bias", Matrix<T>::Zero(1, n));
    in_w_ = store.create(prefix + ".in.w", fan_in_uniform<T>(n, b, n, rng));
    in_b_ = store.create(prefix + ".in.b", fan_in_uniform<T>(1, b, n, rng));
    const TcnConfig tcn = cfg_.tcn();
    if (cfg_.variant == Variant::kPy) {
      for (std::size_t br = 0; br < cfg_.py_branch_depths.size(); ++br) {
        const std::string bp = prefix + ".branch" + std::to_string(br);
        std::vector<Tcn<T>> stack;
        for (Index i = 0; i < cfg_.py_branch_depths[br]; ++i)
          stack.emplace_back(tcn, store, bp + ".tcn" + std::to_string(i), rng);
        branches_.push_back(std::move(stack));
        out_w_.push_back(store.create(bp + ".out.w", fan_in_uniform<T>(b, out, b, rng)));
        out_b_.push_back(store.create(bp + ".out.b", fan_in_uniform<T>(1, out, b, rng)));
      }
      weightor_.emplace(cfg_.weightor, n, static_cast<Index>(branches_.size()), store, prefix + ".weightor", rng);
    } else {
      std::vector<Tcn<T>> stack;
      for (Index i = 0; i < cfg_.num_tcns; ++i)
        stack.emplace_back(tcn, store, prefix + ".tcn" + std::to_string(i), rng);
      branches_.push_back(std::move(stack));
      out_w_.push_back(store.create(prefix + ".out.w", fan_in_uniform<T>(b, out, b, rng)));
      out_b_.push_back(store.create(prefix + ".out.b", fan_in_uniform<T>(1, out, b, rng)));
    }
  }

  const SeparatorConfig& config() const { return cfg_; }
  Index num_branches() const { return static_cast<Index>(branches_.size()); }

  /// Mask logits of one pyramid branch (or the only branch for other variants).
  Var<T> branch_logits(const Var<T>& bottleneck, std::size_t branch) const {
    Var<T> h = bottleneck;
    const auto& stack = branches_.at(branch);
    if (cfg_.variant == Variant::kSh) {
      std::vector<Var<T>> level2;
      for (const auto& tcn : stack) {
        h = mean_of(tcn.forward_taps(h));
        level2.push_back(h);
      }
      h = mean_of(level2);
    } else {
      for (const auto& tcn : stack) h = tcn.forward(h);
    }
    return affine(h, out_w_[branch], out_b_[branch]);
  }

  Var<T> bottleneck(const Var<T>& rep) const {
    detail::require_shape(rep.cols() == num_basis_, "separator: representation width mismatch");
    return affine(layer_norm(rep, ln_gain_, ln_bias_), in_w_, in_b_);
  }

  /// `branch_weights` overrides the weightor output (pyramid only).
  SeparatorOutput<T> forward(const Var<T>& rep,
                             const std::optional<Var<T>>& branch_weights = std::nullopt) const {
    const Var<T> h = bottleneck(rep);
    SeparatorOutput<T> out;
    if (cfg_.variant != Variant::kPy) {
      out.masks = softmax_groups(branch_logits(h, 0), cfg_.num_sources);
      return out;
    }
    Var<T> w = branch_weights ? *branch_weights : (*weightor_)(rep);
    detail::require_shape(w.rows() == 1 && w.cols() == num_branches(), "separator: branch weight shape");
    Var<T> logits;
    for (std::size_t br = 0; br < branches_.size(); ++br) {
      Var<T> term = scale_by_entry(branch_logits(h, br), w, static_cast<Index>(br));
      logits = br == 0 ? term : logits + term;
    }
    out.masks = softmax_groups(logits, cfg_.num_sources);
    out.branch_weights = w;
    return out;
  }

 private:
  SeparatorConfig cfg_;
  Index num_basis_;
  Var<T> ln_gain_, ln_bias_, in_w_, in_b_;
  std::vector<std::vector<Tcn<T>>> branches_;
  std::vector<Var<T>> out_w_, out_b_;
  std::optional<Weightor<T>> weightor_;
};

/// Exact number of learnable scalars in the separator for `num_basis` latent
/// channels.
inline std::size_t count_parameters(const SeparatorConfig& cfg, Index num_basis) {
  ParamStore<float> store;
  Rng rng(0);
  Separator<float> sep(cfg, num_basis, store, rng);
  return store.scalar_count();
}

}  // namespace tdsep
