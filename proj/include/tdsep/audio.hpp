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
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tdsep/error.hpp"

namespace tdsep {

inline constexpr int kDefaultSampleRate = 8000;

/// Mono sampled audio. Immutable after construction; at least one finite sample.
class Waveform {
 public:
  Waveform(std::vector<double> samples, int sample_rate_hz)
      : samples_(std::move(samples)), sample_rate_hz_(sample_rate_hz) {
    if (sample_rate_hz_ <= 0) throw ConfigError("waveform sample rate must be positive");
    if (samples_.empty()) throw ShapeError("waveform must hold at least one sample");
    for (double v : samples_) {
      if (!std::isfinite(v)) throw ShapeError("waveform samples must be finite");
    }
  }

  std::span<const double> samples() const { return samples_; }
  double operator[](std::size_t i) const { return samples_[i]; }
  std::size_t size() const { return samples_.size(); }
  int sample_rate_hz() const { return sample_rate_hz_; }
  double duration_s() const { return static_cast<double>(samples_.size()) / sample_rate_hz_; }

  /// Mean squared amplitude over the whole signal.
  double power() const {
    return std::inner_product(samples_.begin(), samples_.end(), samples_.begin(), 0.0) /
           static_cast<double>(samples_.size());
  }

  Waveform scaled(double gain) const {
    std::vector<double> out(samples_);
    for (double& v : out) v *= gain;
    return Waveform(std::move(out), sample_rate_hz_);
  }

  /// First `length` samples (length <= size()).
  Waveform truncated(std::size_t length) const {
    if (length == 0 || length > samples_.size()) throw ShapeError("invalid truncation length");
    return Waveform(std::vector<double>(samples_.begin(), samples_.begin() + static_cast<std::ptrdiff_t>(length)),
                    sample_rate_hz_);
  }

  friend bool operator==(const Waveform&, const Waveform&) = default;

 private:
  std::vector<double> samples_;
  int sample_rate_hz_;
};

/// A mixture with the (post-scaling) sources that sum to it.
struct MixtureSample {
  Waveform mixture;
  std::vector<Waveform> sources;
  double snr_db = 0.0;
  std::vector<std::string> source_ids;
};

// ---------------------------------------------------------------------------
// Mixing

/// Returns g * interferer with 10*log10(P_target / P_scaled) == snr_db.
inline Waveform scale_to_snr(const Waveform& target, const Waveform& interferer, double snr_db) {
  if (target.size() != interferer.size()) throw ShapeError("scale_to_snr: length mismatch");
  if (target.sample_rate_hz() != interferer.sample_rate_hz())
    throw ShapeError("scale_to_snr: sample-rate mismatch");
  const double p_interferer = interferer.power();
  if (!(p_interferer > 0.0)) throw DegenerateSignalError("scale_to_snr: interferer has zero energy");
  const double p_target = target.power();
  if (!(p_target > 0.0)) throw DegenerateSignalError("scale_to_snr: target has zero energy");
  const double gain = std::sqrt(p_target / (p_interferer * std::pow(10.0, snr_db / 10.0)));
  return interferer.scaled(gain);
}

/// Measured SNR of target over interferer in dB (full-utterance powers).
inline double measure_snr_db(const Waveform& target, const Waveform& interferer) {
  return 10.0 * std::log10(target.power() / interferer.power());
}

/// Linear mixture of >= 2 sources. All sources are truncated to the shortest;
/// the first source is the reference and every other source is rescaled to sit
/// `snr_db` below it. The stored sources are the rescaled ones.
inline MixtureSample synth_mixture(const std::vector<Waveform>& sources, double snr_db,
                                   std::vector<std::string> ids = {}) {
  if (sources.size() < 2) throw ConfigError("synth_mixture: need at least two sources");
  const int rate = sources.front().sample_rate_hz();
  std::size_t length = sources.front().size();
  for (const auto& s : sources) {
    if (s.sample_rate_hz() != rate) throw ShapeError("synth_mixture: sample-rate mismatch");
    length = std::min(length, s.size());
  }
  if (ids.empty()) {
    for (std::size_t i = 0; i < sources.size(); ++i) ids.push_back("s" + std::to_string(i + 1));
  }
  if (ids.size() != sources.size()) throw ConfigError("synth_mixture: one id per source required");

  std::vector<Waveform> stored;
  stored.reserve(sources.size());
  stored.push_back(sources.front().size() == length ? sources.front() : sources.front().truncated(length));
  for (std::size_t i = 1; i < sources.size(); ++i) {
    const Waveform trimmed = sources[i].size() == length ? sources[i] : sources[i].truncated(length);
    stored.push_back(scale_to_snr(stored.front(), trimmed, snr_db));
  }
  std::vector<double> mix(length, 0.0);
  for (const auto& s : stored)
    for (std::size_t t = 0; t < length; ++t) mix[t] += s[t];
  return MixtureSample{Waveform(std::move(mix), rate), std::move(stored), snr_db, std::move(ids)};
}

// ---------------------------------------------------------------------------
// Segmentation

/// Layout of fixed-length segments over an utterance. Segment i starts at
/// i*hop; the last one is zero-padded by `pad` samples past the end.
struct SegmentPlan {
  std::size_t length = 0;
  std::size_t seg_len = 0;
  std::size_t hop = 0;
  std::size_t count = 0;
  std::size_t pad = 0;

  std::size_t start(std::size_t i) const { return i * hop; }
  /// Samples of segment i that survive reassembly: each segment owns
  /// [start, start + hop) and the last one owns everything up to the end.
  std::size_t owned(std::size_t i) const {
    return i + 1 == count ? length - start(i) : hop;
  }
};

inline SegmentPlan plan_segments(std::size_t length, std::size_t seg_len, std::size_t hop) {
  if (hop < 1 || seg_len < 1) throw ConfigError("segmentation: seg_len and hop must be >= 1");
  if (hop > seg_len) throw ConfigError("segmentation: hop must not exceed seg_len");
  if (length < 1) throw ShapeError("segmentation: empty utterance");
  SegmentPlan plan{length, seg_len, hop, 1, 0};
  if (length > seg_len) plan.count = (length - seg_len + hop - 1) / hop + 1;
  plan.pad = (plan.count - 1) * hop + seg_len - length;
  return plan;
}

struct Segmentation {
  std::vector<Waveform> segments;
  SegmentPlan plan;
};

inline Segmentation segment_utterance(const Waveform& w, std::size_t seg_len, std::size_t hop) {
  Segmentation out{{}, plan_segments(w.size(), seg_len, hop)};
  const auto& plan = out.plan;
  out.segments.reserve(plan.count);
  for (std::size_t i = 0; i < plan.count; ++i) {
    std::vector<double> seg(seg_len, 0.0);
    const std::size_t begin = plan.start(i);
    const std::size_t avail = std::min(seg_len, w.size() - begin);
    std::copy_n(w.samples().begin() + static_cast<std::ptrdiff_t>(begin), avail, seg.begin());
    out.segments.emplace_back(std::move(seg), w.sample_rate_hz());
  }
  return out;
}

inline Waveform reassemble(const std::vector<Waveform>& segments, const SegmentPlan& plan) {
  if (segments.size() != plan.count) throw ShapeError("reassemble: segment count does not match plan");
  std::vector<double> out;
  out.reserve(plan.length);
  for (std::size_t i = 0; i < plan.count; ++i) {
    if (segments[i].size() != plan.seg_len) throw ShapeError("reassemble: segment length mismatch");
    const auto s = segments[i].samples();
    out.insert(out.end(), s.begin(), s.begin() + static_cast<std::ptrdiff_t>(plan.owned(i)));
  }
  return Waveform(std::move(out), segments.front().sample_rate_hz());
}

// ---------------------------------------------------------------------------
// Resampling

/// Band-limited resampling by Hann-windowed sinc interpolation.
inline Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw ConfigError("resample: target rate must be positive");
  if (target_rate == w.sample_rate_hz()) return w;
  constexpr double kPi = 3.14159265358979323846;
  const double ratio = static_cast<double>(target_rate) / w.sample_rate_hz();
  const double cutoff = std::min(1.0, ratio);
  const double half_width = 16.0 / cutoff;
  const auto n_out = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(static_cast<double>(w.size()) * ratio)));
  const auto in = w.samples();
  const auto n_in = static_cast<std::ptrdiff_t>(in.size());
  std::vector<double> out(n_out, 0.0);
  for (std::size_t n = 0; n < n_out; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(n_in - 1, static_cast<std::ptrdiff_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const double x = t - static_cast<double>(k);
      const double arg = cutoff * x;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(kPi * arg) / (kPi * arg);
      const double window = 0.5 + 0.5 * std::cos(kPi * x / half_width);
      acc += in[static_cast<std::size_t>(k)] * cutoff * sinc * window;
    }
    out[n] = acc;
  }
  return Waveform(std::move(out), target_rate);
}

// ---------------------------------------------------------------------------
// WAV I/O: mono, 16-bit PCM or 32-bit IEEE float.

enum class WavEncoding { kPcm16, kFloat32 };

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace detail

/// Reads a mono WAV file without resampling.
inline Waveform read_wav_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw IoError(path.string() + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = detail::read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw IoError(path.string() + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0 && size >= 16) {
      format = detail::read_u16(chunk + 8);
      channels = detail::read_u16(chunk + 10);
      rate = detail::read_u32(chunk + 12);
      bits = detail::read_u16(chunk + 22);
      if (format == 0xFFFE && size >= 26) format = detail::read_u16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos = body + size + (size & 1U);
  }
  if (data == nullptr || format == 0) throw IoError(path.string() + ": missing fmt or data chunk");
  if (channels != 1) throw IoError(path.string() + ": only mono audio is supported");

  std::vector<double> samples;
  if (format == 1 && bits == 16) {
    samples.resize(data_size / 2);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto v = static_cast<std::int16_t>(detail::read_u16(data + 2 * i));
      samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    samples.resize(data_size / 4);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const std::uint32_t u = detail::read_u32(data + 4 * i);
      float f;
      std::memcpy(&f, &u, sizeof f);
      samples[i] = static_cast<double>(f);
    }
  } else {
    throw IoError(path.string() + ": unsupported encoding (16-bit PCM or 32-bit float only)");
  }
  return Waveform(std::move(samples), static_cast<int>(rate));
}

/// Reads a mono WAV and resamples it to `target_rate`.
inline Waveform read_wav(const std::filesystem::path& path, int target_rate = kDefaultSampleRate) {
  return resample(read_wav_raw(path), target_rate);
}

inline void write_wav(const std::filesystem::path& path, const Waveform& w,
                      WavEncoding encoding = WavEncoding::kFloat32) {
  const bool pcm = encoding == WavEncoding::kPcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const auto data_size = static_cast<std::uint32_t>(w.size() * (bits / 8));
  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  detail::put_u32(out, 36 + data_size);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, pcm ? 1 : 3);
  detail::put_u16(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz()));
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz()) * (bits / 8));
  detail::put_u16(out, static_cast<std::uint16_t>(bits / 8));
  detail::put_u16(out, bits);
  out += "data";
  detail::put_u32(out, data_size);
  for (double v : w.samples()) {
    if (pcm) {
      const double clipped = std::clamp(v, -1.0, 32767.0 / 32768.0);
      const auto q = static_cast<std::int16_t>(std::lround(clipped * 32768.0));
      detail::put_u16(out, static_cast<std::uint16_t>(q));
    } else {
      const auto f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, sizeof u);
      detail::put_u32(out, u);
    }
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace tdsep
