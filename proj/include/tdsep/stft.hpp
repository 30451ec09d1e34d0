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

// Short-time Fourier analysis/synthesis and the ideal-ratio-mask oracle.

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <vector>

#include "tdsep/audio.hpp"
#include "tdsep/autograd.hpp"

namespace tdsep {

enum class WindowType { kSqrtHann, kHann, kRectangular };

struct StftConfig {
  std::size_t window_len = 256;  // 32 ms at 8 kHz
  std::size_t hop = 128;
  WindowType window = WindowType::kSqrtHann;
};

/// frames x (window_len/2 + 1) one-sided spectrum plus what istft needs.
struct StftGrid {
  Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic> bins;
  StftConfig config;
  std::size_t length = 0;  // original signal length
  int sample_rate_hz = kDefaultSampleRate;
};

/// Periodic analysis window.
inline std::vector<double> make_window(WindowType type, std::size_t n) {
  constexpr double kPi = 3.14159265358979323846;
  std::vector<double> w(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));
    if (type == WindowType::kHann) w[i] = hann;
    if (type == WindowType::kSqrtHann) w[i] = std::sqrt(hann);
  }
  return w;
}

/// Rejects (window, hop) pairs whose squared-window overlap-add is not
/// constant, i.e. where analysis+synthesis with the same window cannot
/// reconstruct the signal by plain overlap-add.
inline void check_cola(const StftConfig& cfg) {
  if (cfg.window_len < 2 || cfg.hop < 1) throw ConfigError("stft: window_len >= 2 and hop >= 1 required");
  if (cfg.hop > cfg.window_len) throw ConfigError("stft: hop must not exceed the window length");
  const auto w = make_window(cfg.window, cfg.window_len);
  std::vector<double> sum(cfg.hop, 0.0);
  for (std::size_t i = 0; i < cfg.window_len; ++i) sum[i % cfg.hop] += w[i] * w[i];
  for (double v : sum) {
    if (std::abs(v - sum.front()) > 1e-9 * sum.front() || !(sum.front() > 0.0))
      throw ConfigError("stft: window/hop combination does not satisfy COLA");
  }
}

namespace detail {
/// Zeros prepended so every real sample is covered by a full set of frames.
inline std::size_t stft_lead(const StftConfig& cfg) { return cfg.window_len - cfg.hop; }
}  // namespace detail

inline StftGrid stft(const Waveform& w, const StftConfig& cfg = {}) {
  check_cola(cfg);
  const std::size_t lead = detail::stft_lead(cfg);
  const std::size_t needed = lead + w.size() + lead;
  const std::size_t frames = needed <= cfg.window_len ? 1 : (needed - cfg.window_len + cfg.hop - 1) / cfg.hop + 1;
  std::vector<double> padded((frames - 1) * cfg.hop + cfg.window_len, 0.0);
  std::copy(w.samples().begin(), w.samples().end(), padded.begin() + static_cast<std::ptrdiff_t>(lead));

  const auto window = make_window(cfg.window, cfg.window_len);
  const std::size_t n_bins = cfg.window_len / 2 + 1;
  StftGrid grid;
  grid.config = cfg;
  grid.length = w.size();
  grid.sample_rate_hz = w.sample_rate_hz();
  grid.bins.resize(static_cast<Index>(frames), static_cast<Index>(n_bins));
  Eigen::FFT<double> fft;
  std::vector<double> frame(cfg.window_len);
  std::vector<std::complex<double>> spectrum;
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t i = 0; i < cfg.window_len; ++i) frame[i] = padded[f * cfg.hop + i] * window[i];
    fft.fwd(spectrum, frame);
    for (std::size_t k = 0; k < n_bins; ++k) grid.bins(static_cast<Index>(f), static_cast<Index>(k)) = spectrum[k];
  }
  return grid;
}

inline Waveform istft(const StftGrid& grid) {
  const StftConfig& cfg = grid.config;
  check_cola(cfg);
  const std::size_t n_bins = cfg.window_len / 2 + 1;
  if (static_cast<std::size_t>(grid.bins.cols()) != n_bins) throw ShapeError("istft: bin count mismatch");
  const auto frames = static_cast<std::size_t>(grid.bins.rows());
  const auto window = make_window(cfg.window, cfg.window_len);
  std::vector<double> out((frames - 1) * cfg.hop + cfg.window_len, 0.0);
  std::vector<double> norm(out.size(), 0.0);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum(cfg.window_len);
  std::vector<double> frame;
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 0; k < n_bins; ++k) spectrum[k] = grid.bins(static_cast<Index>(f), static_cast<Index>(k));
    for (std::size_t k = n_bins; k < cfg.window_len; ++k) spectrum[k] = std::conj(spectrum[cfg.window_len - k]);
    fft.inv(frame, spectrum);
    for (std::size_t i = 0; i < cfg.window_len; ++i) {
      out[f * cfg.hop + i] += frame[i] * window[i];
      norm[f * cfg.hop + i] += window[i] * window[i];
    }
  }
  const std::size_t lead = detail::stft_lead(cfg);
  if (lead + grid.length > out.size()) throw ShapeError("istft: grid shorter than recorded length");
  std::vector<double> samples(grid.length);
  for (std::size_t t = 0; t < grid.length; ++t) {
    const double n = norm[lead + t];
    samples[t] = n > 1e-12 ? out[lead + t] / n : 0.0;
  }
  return Waveform(std::move(samples), grid.sample_rate_hz);
}

/// Oracle separation with the ideal ratio mask
///   M_s(t, f) = |X_s(t, f)| / sum_s' |X_s'(t, f)|
/// applied to the mixture spectrum (mixture phase kept). Cells where every
/// source is silent get 1/S.
inline std::vector<Waveform> irm_oracle(const std::vector<Waveform>& sources, const Waveform& mixture,
                                        const StftConfig& cfg = {}) {
  if (sources.empty()) throw ShapeError("irm_oracle: no sources");
  for (const auto& s : sources) {
    if (s.size() != mixture.size()) throw ShapeError("irm_oracle: sources and mixture must be aligned");
  }
  const StftGrid mix = stft(mixture, cfg);
  std::vector<Eigen::MatrixXd> mags;
  for (const auto& s : sources) mags.push_back(stft(s, cfg).bins.cwiseAbs());
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(mix.bins.rows(), mix.bins.cols());
  for (const auto& m : mags) total += m;
  const double uniform = 1.0 / static_cast<double>(sources.size());
  std::vector<Waveform> out;
  for (const auto& m : mags) {
    StftGrid masked = mix;
    for (Index f = 0; f < total.rows(); ++f) {
      for (Index k = 0; k < total.cols(); ++k) {
        const double mask = total(f, k) > 0.0 ? m(f, k) / total(f, k) : uniform;
        masked.bins(f, k) *= mask;
      }
    }
    out.push_back(istft(masked));
  }
  return out;
}

}  // namespace tdsep
