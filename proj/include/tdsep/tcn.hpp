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

// Residual 1-D convolution modules and the dilated stacks built from them.
//
// A module maps (T x B) -> (T x B) through two sub-chains:
//   A: 1x1 conv (B->H) -> PReLU -> global norm
//   B: depthwise dilated conv (H) -> PReLU -> global norm -> 1x1 conv (H->B)
// and how those sub-chains are combined is the block kind:
//   kPlain     x + B(A(x))
//   kGated     a = A(x) * sig(gA(x));  x + B(a) * sig(gB(a))
//   kParallel  as kGated, each sub-chain replaced by the mean of two copies
//   kHighway   per site: g = sig(S0(x)); g * (S1(x) - S2(x)) + (1 - g) * x
// The highway kind replaces the residual add by its carry path.

#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "tdsep/conv_ops.hpp"
#include "tdsep/params.hpp"

namespace tdsep {

enum class BlockKind { kPlain, kGated, kParallel, kHighway };

inline std::string to_string(BlockKind k) {
  switch (k) {
    case BlockKind::kPlain: return "plain";
    case BlockKind::kGated: return "gated";
    case BlockKind::kParallel: return "parallel";
    case BlockKind::kHighway: return "highway";
  }
  return "plain";
}

struct ConvBlockConfig {
  Index in_channels = 128;      // B
  Index hidden_channels = 128;  // H
  Index kernel = 3;             // K
  Index dilation = 1;           // d
  BlockKind kind = BlockKind::kGated;
  bool causal = false;

  bool gated() const { return kind != BlockKind::kPlain; }

  void validate() const {
    detail::require_config(kernel >= 1, "conv block: kernel must be >= 1");
    detail::require_config(dilation >= 1, "conv block: dilation must be >= 1");
    detail::require_config(in_channels >= 1 && hidden_channels >= 1, "conv block: channels must be >= 1");
    detail::require_config(!causal, "conv block: causal padding is not supported");
    detail::require_config(kind != BlockKind::kHighway || in_channels == hidden_channels,
                           "highway blocks need hidden_channels == in_channels for the carry path");
  }
};

struct TcnConfig {
  std::vector<Index> dilations{1, 2, 4, 4};
  ConvBlockConfig block;

  void validate() const {
    detail::require_config(!dilations.empty(), "tcn: dilation list must not be empty");
    for (Index d : dilations) detail::require_config(d >= 1, "tcn: dilations must be >= 1");
    ConvBlockConfig probe = block;
    probe.dilation = 1;
    probe.validate();
  }
};

/// Number of input frames that influence one output frame of a stack of
/// blocks with these dilations: 1 + (K - 1) * sum(d).
inline Index receptive_field(const std::vector<Index>& dilations, Index kernel) {
  if (dilations.empty()) throw ConfigError("receptive_field: empty dilation list");
  if (kernel < 1) throw ConfigError("receptive_field: kernel must be >= 1");
  return 1 + (kernel - 1) * std::accumulate(dilations.begin(), dilations.end(), Index{0});
}

/// 1x1 conv (B->H) -> PReLU -> global norm.
template <typename T>
struct InputSubChain {
  Var<T> w, b, slope, gain, shift;

  InputSubChain(ParamStore<T>& store, const std::string& p, Index in, Index hidden, Rng& rng)
      : w(store.create(p + ".conv.w", fan_in_uniform<T>(in, hidden, in, rng))),
        b(store.create(p + ".conv.b", fan_in_uniform<T>(1, hidden, in, rng))),
        slope(store.create(p + ".prelu", Matrix<T>::Constant(1, hidden, T(0.25)))),
        gain(store.create(p + ".norm.gain", Matrix<T>::Ones(1, hidden))),
        shift(store.create(p + ".norm.bias", Matrix<T>::Zero(1, hidden))) {}

  Var<T> operator()(const Var<T>& x, bool detach_stats) const {
    return global_norm(prelu(affine(x, w, b), slope), gain, shift, detach_stats);
  }
};

/// Depthwise dilated conv (H) -> PReLU -> global norm -> 1x1 conv (H->B).
template <typename T>
struct OutputSubChain {
  Var<T> kernel, slope, gain, shift, w, b;
  Index dilation;

  OutputSubChain(ParamStore<T>& store, const std::string& p, Index hidden, Index out, Index taps,
                 Index dil, Rng& rng)
      : kernel(store.create(p + ".dw.kernel", fan_in_uniform<T>(taps, hidden, taps, rng))),
        slope(store.create(p + ".prelu", Matrix<T>::Constant(1, hidden, T(0.25)))),
        gain(store.create(p + ".norm.gain", Matrix<T>::Ones(1, hidden))),
        shift(store.create(p + ".norm.bias", Matrix<T>::Zero(1, hidden))),
        w(store.create(p + ".conv.w", fan_in_uniform<T>(hidden, out, hidden, rng))),
        b(store.create(p + ".conv.b", fan_in_uniform<T>(1, out, hidden, rng))),
        dilation(dil) {}

  Var<T> operator()(const Var<T>& x, bool detach_stats) const {
    return affine(global_norm(prelu(depthwise_conv(x, kernel, dilation), slope), gain, shift, detach_stats),
                  w, b);
  }
};

/// Sigmoid gate: sig(x * w + b).
template <typename T>
struct Gate {
  Var<T> w, b;

  Gate(ParamStore<T>& store, const std::string& p, Index in, Index out, Rng& rng)
      : w(store.create(p + ".w", fan_in_uniform<T>(in, out, in, rng))),
        b(store.create(p + ".b", Matrix<T>::Zero(1, out))) {}

  Var<T> operator()(const Var<T>& x) const { return sigmoid(affine(x, w, b)); }
};

/// One residual 1-D convolution module.
template <typename T>
class ConvBlock {
 public:
  ConvBlock(const ConvBlockConfig& cfg, ParamStore<T>& store, const std::string& prefix, Rng& rng)
      : cfg_(cfg) {
    cfg_.validate();
    const Index in = cfg_.in_channels;
    const Index hid = cfg_.hidden_channels;
    int copies = 1;
    if (cfg_.kind == BlockKind::kParallel) copies = 2;
    if (cfg_.kind == BlockKind::kHighway) copies = 3;
    const bool indexed = copies > 1;
    for (int i = 0; i < copies; ++i) {
      const std::string tag = indexed ? std::to_string(i) : "";
      input_.emplace_back(store, prefix + ".a" + tag, in, hid, rng);
    }
    if (cfg_.kind == BlockKind::kGated || cfg_.kind == BlockKind::kParallel)
      gate_a_ = std::make_unique<Gate<T>>(store, prefix + ".gate_a", in, hid, rng);
    for (int i = 0; i < copies; ++i) {
      const std::string tag = indexed ? std::to_string(i) : "";
      output_.emplace_back(store, prefix + ".b" + tag, hid, in, cfg_.kernel, cfg_.dilation, rng);
    }
    if (cfg_.kind == BlockKind::kGated || cfg_.kind == BlockKind::kParallel)
      gate_b_ = std::make_unique<Gate<T>>(store, prefix + ".gate_b", hid, in, rng);
  }

  const ConvBlockConfig& config() const { return cfg_; }

  Var<T> forward(const Var<T>& x, bool detach_stats = false) const {
    detail::require_shape(x.cols() == cfg_.in_channels, "conv block: input channel mismatch");
    switch (cfg_.kind) {
      case BlockKind::kPlain:
        return x + output_[0](input_[0](x, detach_stats), detach_stats);
      case BlockKind::kGated: {
        const Var<T> a = input_[0](x, detach_stats) * (*gate_a_)(x);
        return x + output_[0](a, detach_stats) * (*gate_b_)(a);
      }
      case BlockKind::kParallel: {
        const Var<T> a =
            mean_of<T>({input_[0](x, detach_stats), input_[1](x, detach_stats)}) * (*gate_a_)(x);
        const Var<T> b = mean_of<T>({output_[0](a, detach_stats), output_[1](a, detach_stats)});
        return x + b * (*gate_b_)(a);
      }
      case BlockKind::kHighway: {
        const Var<T> a = highway(input_, x, detach_stats);
        return highway(output_, a, detach_stats);
      }
    }
    throw ConfigError("conv block: unknown kind");
  }

 private:
  template <typename Chain>
  static Var<T> highway(const std::vector<Chain>& chains, const Var<T>& x, bool detach_stats) {
    const Var<T> g = sigmoid(chains[0](x, detach_stats));
    return g * (chains[1](x, detach_stats) - chains[2](x, detach_stats)) + one_minus(g) * x;
  }

  ConvBlockConfig cfg_;
  std::vector<InputSubChain<T>> input_;
  std::vector<OutputSubChain<T>> output_;
  std::unique_ptr<Gate<T>> gate_a_;
  std::unique_ptr<Gate<T>> gate_b_;
};

/// A series of conv blocks with the configured dilation schedule.
template <typename T>
class Tcn {
 public:
  Tcn(const TcnConfig& cfg, ParamStore<T>& store, const std::string& prefix, Rng& rng) {
    cfg.validate();
    for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
      ConvBlockConfig block = cfg.block;
      block.dilation = cfg.dilations[i];
      blocks_.emplace_back(block, store, prefix + ".block" + std::to_string(i), rng);
    }
  }

  Var<T> forward(const Var<T>& x, bool detach_stats = false) const {
    Var<T> h = x;
    for (const auto& b : blocks_) h = b.forward(h, detach_stats);
    return h;
  }

  /// Output after every block, in order.
  std::vector<Var<T>> forward_taps(const Var<T>& x, bool detach_stats = false) const {
    std::vector<Var<T>> taps;
    Var<T> h = x;
    for (const auto& b : blocks_) {
      h = b.forward(h, detach_stats);
      taps.push_back(h);
    }
    return taps;
  }

  std::size_t depth() const { return blocks_.size(); }

 private:
  std::vector<ConvBlock<T>> blocks_;
};

}  // namespace tdsep
