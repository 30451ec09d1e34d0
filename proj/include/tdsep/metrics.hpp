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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdsep/audio.hpp"
#include "tdsep/autograd.hpp"

namespace tdsep {

/// SDR values are clamped to [-kSdrClampDb, kSdrClampDb].
inline constexpr double kSdrClampDb = 60.0;
/// Largest source count accepted by the permutation search (S! grows fast).
inline constexpr std::size_t kMaxPitSources = 6;

/// Published WSJ0-2mix figures kept for comparison in reports. They are not
/// reproduced by this toolkit.
namespace reference_results {
inline constexpr double kPyramidSdriDb = 18.4;
inline constexpr double kIdealRatioMaskSdriDb = 12.7;
inline constexpr double kConvTasNetReimplSdriDb = 15.8;
inline constexpr double kMixtureSdrDb = 0.15;
}  // namespace reference_results

namespace detail {

struct SdrTerms {
  double xs = 0.0;   // <x, s>
  double xx = 0.0;   // <x, x>
  double ss = 0.0;   // <s, s>
  double err = 0.0;  // ||(xs/xx) x - s||^2
};

template <typename T>
SdrTerms sdr_terms(const T* s, const T* x, std::size_t n) {
  SdrTerms t;
  for (std::size_t i = 0; i < n; ++i) {
    const double sv = static_cast<double>(s[i]);
    const double xv = static_cast<double>(x[i]);
    t.xs += xv * sv;
    t.xx += xv * xv;
    t.ss += sv * sv;
  }
  if (t.xx > 0.0) {
    const double alpha = t.xs / t.xx;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = alpha * static_cast<double>(x[i]) - static_cast<double>(s[i]);
      t.err += e * e;
    }
  }
  return t;
}

/// Unclamped value, with the flags the clamp needs.
inline double sdr_from_terms(const SdrTerms& t, bool* clamped) {
  if (!(t.xx > 0.0)) throw DegenerateSignalError("si_sdr: reference has zero energy");
  const double target_energy = t.xs * t.xs / t.xx;
  double v;
  if (t.ss == 0.0 || target_energy == 0.0) {
    v = -kSdrClampDb;
  } else if (t.err == 0.0) {
    v = kSdrClampDb;
  } else {
    v = 10.0 * std::log10(target_energy / t.err);
  }
  const double c = std::clamp(v, -kSdrClampDb, kSdrClampDb);
  if (clamped) *clamped = c != v || std::abs(c) == kSdrClampDb;
  return c;
}

template <typename T>
double si_sdr_raw(const T* s, const T* x, std::size_t n) {
  return sdr_from_terms(sdr_terms(s, x, n), nullptr);
}

}  // namespace detail

/// Scale-invariant SDR of estimate `s` against reference `x`, in dB:
///   x~ = <x,s>/<x,x> x,  e = x~ - s,  10 log10(<x~,x~> / <e,e>)
/// clamped to +-60 dB. A silent estimate scores the floor.
inline double si_sdr(std::span<const double> s, std::span<const double> x) {
  if (s.size() != x.size()) throw ShapeError("si_sdr: length mismatch");
  return detail::si_sdr_raw(s.data(), x.data(), s.size());
}

inline double si_sdr(const Waveform& s, const Waveform& x) { return si_sdr(s.samples(), x.samples()); }

/// Differentiable SI-SDR of a (len x 1) estimate against a constant reference.
/// Clamped values carry zero gradient.
template <typename T>
Var<T> si_sdr(const Var<T>& estimate, const Matrix<T>& reference) {
  detail::require_shape(estimate.cols() == 1 && reference.cols() == 1 && estimate.rows() == reference.rows(),
                        "si_sdr: shape mismatch");
  const auto n = static_cast<std::size_t>(reference.rows());
  const detail::SdrTerms terms = detail::sdr_terms(estimate.value().data(), reference.data(), n);
  bool clamped = false;
  Matrix<T> v(1, 1);
  v(0, 0) = static_cast<T>(detail::sdr_from_terms(terms, &clamped));
  return detail::make_op<T>(std::move(v), {estimate}, [terms, clamped, reference](Node<T>& node) {
    if (clamped || !node.parent(0).requires_grad) return;
    // d/ds [10 log10(a^2/xx) - 10 log10(|e|^2)] = 10/ln10 * (2x/a + 2e/|e|^2)
    const double k = node.grad(0, 0) * 10.0 / std::log(10.0);
    const double alpha = terms.xs / terms.xx;
    const Matrix<T>& s = node.parent(0).value;
    Matrix<T> g(s.rows(), 1);
    for (Index i = 0; i < s.rows(); ++i) {
      const double x = static_cast<double>(reference(i, 0));
      const double e = alpha * x - static_cast<double>(s(i, 0));
      g(i, 0) = static_cast<T>(k * (2.0 * x / terms.xs + 2.0 * e / terms.err));
    }
    node.parent(0).accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Permutation-invariant utterance-level SDR

struct PitResult {
  double loss = 0.0;                 // -mean SDR under the best permutation
  std::vector<std::size_t> permutation;  // estimate permutation[s] is matched to target s
  std::vector<double> sdr;           // per target, under the best permutation
};

namespace detail {

/// Chooses the permutation maximizing the mean pairwise score; ties keep the
/// lexicographically smallest permutation. score(i, j) = SDR(estimate i, target j).
inline PitResult best_permutation(const std::vector<std::vector<double>>& score) {
  const std::size_t n = score.size();
  if (n == 0) throw ShapeError("pit: no sources");
  if (n > kMaxPitSources) throw ConfigError("pit: at most 6 sources are supported");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  PitResult best;
  double best_mean = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) total += score[perm[s]][s];
    const double mean = total / static_cast<double>(n);
    if (mean > best_mean) {
      best_mean = mean;
      best.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  best.loss = -best_mean;
  for (std::size_t s = 0; s < n; ++s) best.sdr.push_back(score[best.permutation[s]][s]);
  return best;
}

}  // namespace detail

inline PitResult usdr_pit(const std::vector<Waveform>& estimates, const std::vector<Waveform>& targets) {
  if (estimates.size() != targets.size()) throw ShapeError("pit: estimate/target count mismatch");
  if (targets.size() > kMaxPitSources) throw ConfigError("pit: at most 6 sources are supported");
  const std::size_t n = targets.size();
  std::vector<std::vector<double>> score(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) score[i][j] = si_sdr(estimates[i], targets[j]);
  return detail::best_permutation(score);
}

template <typename T>
struct PitLoss {
  Var<T> loss;  // 1x1
  PitResult result;
};

/// uSDR loss on full utterances: -max over permutations of the mean SI-SDR,
/// differentiable through the selected permutation.
template <typename T>
PitLoss<T> usdr_pit_loss(const std::vector<Var<T>>& estimates, const std::vector<Matrix<T>>& targets) {
  if (estimates.size() != targets.size()) throw ShapeError("pit: estimate/target count mismatch");
  const std::size_t n = targets.size();
  if (n > kMaxPitSources) throw ConfigError("pit: at most 6 sources are supported");
  for (std::size_t i = 0; i < n; ++i) {
    detail::require_shape(estimates[i].rows() == targets[i].rows() && estimates[i].cols() == 1 &&
                              targets[i].cols() == 1,
                          "pit: length mismatch");
  }
  std::vector<std::vector<double>> score(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      score[i][j] = detail::si_sdr_raw(estimates[i].value().data(), targets[j].data(),
                                       static_cast<std::size_t>(targets[j].rows()));
  PitLoss<T> out;
  out.result = detail::best_permutation(score);
  std::vector<Var<T>> terms;
  for (std::size_t s = 0; s < n; ++s) terms.push_back(si_sdr(estimates[out.result.permutation[s]], targets[s]));
  out.loss = scale(mean_of(terms), T(-1));
  return out;
}

/// Mean SI-SDR of the mixture used as the estimate for every target.
inline double mixture_baseline_sdr(const std::vector<Waveform>& targets, const Waveform& mixture) {
  double total = 0.0;
  for (const auto& t : targets) total += si_sdr(mixture, t);
  return total / static_cast<double>(targets.size());
}

/// Best-permutation mean SI-SDR of the estimates minus the mixture baseline.
inline double sdri(const std::vector<Waveform>& estimates, const std::vector<Waveform>& targets,
                   const Waveform& mixture) {
  return -usdr_pit(estimates, targets).loss - mixture_baseline_sdr(targets, mixture);
}

// ---------------------------------------------------------------------------
// Reports

struct UtteranceScore {
  std::string utt_id;
  std::vector<double> sdr;
  double sdri = 0.0;
  double baseline = 0.0;
  std::vector<std::size_t> permutation;

  double mean_sdr() const {
    return std::accumulate(sdr.begin(), sdr.end(), 0.0) / static_cast<double>(sdr.size());
  }
};

struct SdrReport {
  std::string tag = "model";
  std::vector<UtteranceScore> per_utterance;
  double mean_sdr = 0.0;
  double mean_sdri = 0.0;
  double mixture_baseline_sdr = 0.0;

  /// Recomputes the aggregate means from per_utterance.
  void finalize() {
    mean_sdr = mean_sdri = mixture_baseline_sdr = 0.0;
    if (per_utterance.empty()) return;
    for (const auto& u : per_utterance) {
      mean_sdr += u.mean_sdr();
      mean_sdri += u.sdri;
      mixture_baseline_sdr += u.baseline;
    }
    const auto n = static_cast<double>(per_utterance.size());
    mean_sdr /= n;
    mean_sdri /= n;
    mixture_baseline_sdr /= n;
  }
};

/// Scores one utterance: PIT-matched SDR per target plus SDRi.
inline UtteranceScore score_utterance(const std::string& utt_id, const std::vector<Waveform>& estimates,
                                      const std::vector<Waveform>& targets, const Waveform& mixture) {
  const PitResult pit = usdr_pit(estimates, targets);
  UtteranceScore u;
  u.utt_id = utt_id;
  u.sdr = pit.sdr;
  u.permutation = pit.permutation;
  u.baseline = mixture_baseline_sdr(targets, mixture);
  u.sdri = -pit.loss - u.baseline;
  return u;
}

inline std::string permutation_string(const std::vector<std::size_t>& perm) {
  std::string s;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(perm[i] + 1);
  }
  return s;
}

inline nlohmann::ordered_json report_to_json(const SdrReport& r) {
  nlohmann::ordered_json j;
  j["tag"] = r.tag;
  j["per_utt"] = nlohmann::ordered_json::array();
  for (const auto& u : r.per_utterance) {
    nlohmann::ordered_json e;
    e["utt_id"] = u.utt_id;
    e["sdr"] = u.sdr;
    e["sdri"] = u.sdri;
    e["baseline"] = u.baseline;
    std::vector<std::size_t> one_based;
    for (auto p : u.permutation) one_based.push_back(p + 1);
    e["perm"] = one_based;
    j["per_utt"].push_back(std::move(e));
  }
  j["mean_sdr"] = r.mean_sdr;
  j["mean_sdri"] = r.mean_sdri;
  j["baseline"] = r.mixture_baseline_sdr;
  return j;
}

inline std::string report_to_csv(const SdrReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "utt_id,sdr,sdri,perm\n";
  for (const auto& u : r.per_utterance)
    out << u.utt_id << ',' << u.mean_sdr() << ',' << u.sdri << ',' << permutation_string(u.permutation) << '\n';
  return out.str();
}

}  // namespace tdsep
