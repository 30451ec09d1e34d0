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

// Learned waveform frontend: strided Conv1d encoder followed by PReLU, mask
// application in the latent space, and a bias-free linear decoder with
// overlap-add.

#include <string>
#include <vector>

#include "tdsep/autograd.hpp"
#include "tdsep/params.hpp"

namespace tdsep {

struct FrontendConfig {
  Index num_basis = 256;  // N
  Index win_len = 20;     // L, samples
  Index stride = 10;      // samples

  void validate() const {
    detail::require_config(num_basis >= 1, "frontend: num_basis must be >= 1");
    detail::require_config(win_len >= 1 && stride >= 1, "frontend: win_len and stride must be >= 1");
    detail::require_config(stride <= win_len, "frontend: stride must not exceed win_len");
  }
};

/// Number of encoder frames for an input of `length` samples.
inline Index frame_count(Index length, Index win_len, Index stride) {
  if (length < win_len) throw ShapeError("input shorter than one encoder window");
  return (length - win_len) / stride + 1;
}

/// Smallest length >= `length` that the encoder tiles exactly.
inline Index padded_length(Index length, const FrontendConfig& cfg) {
  if (length <= cfg.win_len) return cfg.win_len;
  const Index extra = length - cfg.win_len;
  return cfg.win_len + (extra + cfg.stride - 1) / cfg.stride * cfg.stride;
}

template <typename T>
class Frontend {
 public:
  Frontend(const FrontendConfig& cfg, ParamStore<T>& store, Rng& rng, const std::string& prefix = "frontend")
      : cfg_(cfg) {
    cfg_.validate();
    const Index n = cfg_.num_basis;
    const Index l = cfg_.win_len;
    enc_w_ = store.create(prefix + ".enc.w", fan_in_uniform<T>(l, n, l, rng));
    enc_slope_ = store.create(prefix + ".enc.prelu", Matrix<T>::Constant(1, n, T(0.25)));
    dec_w_ = store.create(prefix + ".dec.w", fan_in_uniform<T>(n, l, n, rng));
  }

  const FrontendConfig& config() const { return cfg_; }

  /// waveform (len x 1) -> latent representation (frames x N).
  Var<T> encode(const Var<T>& waveform) const {
    detail::require_shape(waveform.cols() == 1, "encode: waveform must be a single column");
    if (waveform.rows() < cfg_.win_len) throw ShapeError("encode: input shorter than one window");
    return prelu(affine(frame_signal(waveform, cfg_.win_len, cfg_.stride), enc_w_), enc_slope_);
  }

  /// latent (frames x N) -> waveform ((frames - 1) * stride + L x 1).
  Var<T> decode(const Var<T>& rep) const {
    detail::require_shape(rep.cols() == cfg_.num_basis, "decode: channel count mismatch");
    return overlap_add(affine(rep, dec_w_), cfg_.stride);
  }

 private:
  FrontendConfig cfg_;
  Var<T> enc_w_;
  Var<T> enc_slope_;
  Var<T> dec_w_;
};

/// Splits a (frames x S*N) mask matrix into per-source masks and multiplies
/// each with the representation.
template <typename T>
std::vector<Var<T>> apply_masks(const Var<T>& rep, const Var<T>& masks, Index num_sources) {
  detail::require_shape(num_sources >= 1 && masks.rows() == rep.rows() &&
                            masks.cols() == rep.cols() * num_sources,
                        "apply_masks: mask shape does not match representation");
  std::vector<Var<T>> out;
  out.reserve(static_cast<std::size_t>(num_sources));
  for (Index s = 0; s < num_sources; ++s) out.push_back(rep * slice_cols(masks, s * rep.cols(), rep.cols()));
  return out;
}

}  // namespace tdsep
