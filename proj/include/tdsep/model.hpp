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

// Encoder -> separator -> decoder over whole utterances, optionally run
// segment by segment and stitched back together before any loss or metric.

#include <vector>

#include "tdsep/audio.hpp"
#include "tdsep/frontend.hpp"
#include "tdsep/separator.hpp"

namespace tdsep {

template <typename T>
struct Separation {
  std::vector<Var<T>> estimates;            // S signals, each (len x 1)
  std::vector<Var<T>> branch_weights;       // one per segment, pyramid only
};

template <typename T>
Matrix<T> to_column(const Waveform& w) {
  Matrix<T> m(static_cast<Index>(w.size()), 1);
  for (std::size_t i = 0; i < w.size(); ++i) m(static_cast<Index>(i), 0) = static_cast<T>(w[i]);
  return m;
}

template <typename T>
Waveform to_waveform(const Matrix<T>& column, int sample_rate) {
  std::vector<double> s(static_cast<std::size_t>(column.rows()));
  for (Index i = 0; i < column.rows(); ++i) s[static_cast<std::size_t>(i)] = static_cast<double>(column(i, 0));
  return Waveform(std::move(s), sample_rate);
}

template <typename T>
class SeparationModel {
 public:
  SeparationModel(const FrontendConfig& frontend, const SeparatorConfig& separator, ParamStore<T>& store,
                  Rng& rng)
      : frontend_(frontend, store, rng), separator_(separator, frontend.num_basis, store, rng) {}

  const Frontend<T>& frontend() const { return frontend_; }
  const Separator<T>& separator() const { return separator_; }
  Index num_sources() const { return separator_.config().num_sources; }

  /// Separates one chunk whose length the encoder tiles exactly.
  std::vector<Var<T>> separate_chunk(const Var<T>& chunk, Var<T>* branch_weights = nullptr) const {
    const Var<T> rep = frontend_.encode(chunk);
    const SeparatorOutput<T> out = separator_.forward(rep);
    if (branch_weights) *branch_weights = out.branch_weights;
    std::vector<Var<T>> decoded;
    for (const auto& masked : apply_masks(rep, out.masks, num_sources())) decoded.push_back(frontend_.decode(masked));
    return decoded;
  }

  /// Full-utterance separation. `segment_len` == 0 (or >= the utterance
  /// length) processes the utterance in one piece; otherwise non-overlapping
  /// segments are separated independently and concatenated.
  Separation<T> separate(const Matrix<T>& mixture, std::size_t segment_len = 0) const {
    detail::require_shape(mixture.cols() == 1 && mixture.rows() >= 1, "separate: mixture must be a column");
    const auto len = static_cast<std::size_t>(mixture.rows());
    const std::size_t seg = segment_len == 0 ? len : std::min(segment_len, len);
    const SegmentPlan plan = plan_segments(len, seg, seg);
    std::vector<std::vector<Var<T>>> pieces(static_cast<std::size_t>(num_sources()));
    Separation<T> out;
    for (std::size_t i = 0; i < plan.count; ++i) {
      const auto start = static_cast<Index>(plan.start(i));
      const Index avail = std::min<Index>(static_cast<Index>(seg), static_cast<Index>(len) - start);
      const Index padded = padded_length(static_cast<Index>(seg), frontend_.config());
      Matrix<T> chunk = Matrix<T>::Zero(padded, 1);
      chunk.topRows(avail) = mixture.middleRows(start, avail);
      Var<T> weights;
      const auto decoded = separate_chunk(Var<T>::constant(std::move(chunk)), &weights);
      if (weights.defined()) out.branch_weights.push_back(weights);
      for (std::size_t s = 0; s < decoded.size(); ++s)
        pieces[s].push_back(slice_rows(decoded[s], 0, static_cast<Index>(plan.owned(i))));
    }
    for (auto& p : pieces) out.estimates.push_back(p.size() == 1 ? p.front() : concat_rows(p));
    return out;
  }

 private:
  Frontend<T> frontend_;
  Separator<T> separator_;
};

}  // namespace tdsep
