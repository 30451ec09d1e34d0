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
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdsep/audio.hpp"
#include "tdsep/random.hpp"

namespace tdsep {

enum class Split { kTrain, kValid, kTest };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "train";
}

inline Split parse_split(const std::string& s) {
  if (s == "train" || s == "tr") return Split::kTrain;
  if (s == "valid" || s == "cv") return Split::kValid;
  if (s == "test" || s == "tt") return Split::kTest;
  throw ConfigError("unknown split: " + s);
}

struct ManifestEntry {
  std::string s1;
  std::string s2;
  double snr_db = 0.0;
  Split split = Split::kTrain;
  double dur_s = 0.0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;

  std::vector<ManifestEntry> split(Split s) const {
    std::vector<ManifestEntry> out;
    std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
                 [s](const ManifestEntry& e) { return e.split == s; });
    return out;
  }
};

struct ManifestOptions {
  std::array<double, 2> snr_range{0.0, 5.0};
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
};

/// Speaker label of an audio path: the name of its parent directory.
inline std::string speaker_of(const std::string& path) {
  return std::filesystem::path(path).parent_path().filename().string();
}

namespace detail {

inline std::vector<std::string> sorted_wavs(const std::filesystem::path& dir) {
  std::vector<std::string> files;
  for (const auto& f : std::filesystem::directory_iterator(dir)) {
    if (f.is_regular_file() && f.path().extension() == ".wav") files.push_back(f.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline double wav_duration_s(const std::string& path, int sample_rate) {
  const Waveform w = read_wav_raw(path);
  return std::floor(w.duration_s() * sample_rate) / sample_rate;
}

}  // namespace detail

/// Pairs utterances of distinct speakers found under `corpus_root/<speaker>/*.wav`.
///
/// Deterministic in (directory listing, seed). When at least four speakers are
/// available and a test fraction is requested, a held-out speaker group feeds
/// the test split only; train and valid entries draw from the remaining
/// speakers.
inline Manifest build_manifest(const std::filesystem::path& corpus_root, std::size_t pair_count,
                               std::uint64_t seed, const ManifestOptions& options = {},
                               int sample_rate = kDefaultSampleRate) {
  const auto [snr_lo, snr_hi] = options.snr_range;
  if (!(snr_lo <= snr_hi)) throw ConfigError("build_manifest: snr range must satisfy lo <= hi");
  if (!std::filesystem::is_directory(corpus_root))
    throw IoError("build_manifest: corpus root is not a directory: " + corpus_root.string());

  std::map<std::string, std::vector<std::string>> by_speaker;
  std::vector<std::filesystem::path> dirs;
  for (const auto& d : std::filesystem::directory_iterator(corpus_root)) {
    if (d.is_directory()) dirs.push_back(d.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::size_t total_files = 0;
  for (const auto& d : dirs) {
    auto files = detail::sorted_wavs(d);
    total_files += files.size();
    if (!files.empty()) by_speaker.emplace(d.filename().string(), std::move(files));
  }
  if (total_files == 0) throw ConfigError("build_manifest: corpus contains no audio");
  if (by_speaker.size() < 2) throw ConfigError("build_manifest: need at least two speakers");

  Rng rng = make_rng(seed, "manifest");
  std::vector<std::string> speakers;
  for (const auto& [name, files] : by_speaker) speakers.push_back(name);
  shuffle(speakers, rng);

  std::vector<std::string> test_speakers;
  std::vector<std::string> train_speakers = speakers;
  if (options.test_fraction > 0.0 && speakers.size() >= 4) {
    auto n_test = static_cast<std::size_t>(std::lround(options.test_fraction * static_cast<double>(speakers.size())));
    n_test = std::clamp<std::size_t>(n_test, 2, speakers.size() - 2);
    test_speakers.assign(speakers.end() - static_cast<std::ptrdiff_t>(n_test), speakers.end());
    train_speakers.resize(speakers.size() - n_test);
  }

  const auto frac_count = [pair_count](double f) {
    return static_cast<std::size_t>(std::lround(std::max(0.0, f) * static_cast<double>(pair_count)));
  };
  const std::size_t n_test = test_speakers.empty() ? 0 : std::min(pair_count, frac_count(options.test_fraction));
  const std::size_t n_valid = std::min(pair_count - n_test, frac_count(options.valid_fraction));
  const std::size_t n_train = pair_count - n_test - n_valid;

  std::map<std::string, double> durations;
  const auto duration = [&](const std::string& path) {
    auto it = durations.find(path);
    if (it == durations.end()) it = durations.emplace(path, detail::wav_duration_s(path, sample_rate)).first;
    return it->second;
  };

  Manifest manifest;
  manifest.seed = seed;
  const auto draw = [&](const std::vector<std::string>& group, Split split) {
    const std::size_t a = static_cast<std::size_t>(uniform_index(rng, group.size()));
    std::size_t b = static_cast<std::size_t>(uniform_index(rng, group.size() - 1));
    if (b >= a) ++b;
    const auto& fa = by_speaker.at(group[a]);
    const auto& fb = by_speaker.at(group[b]);
    ManifestEntry e;
    e.s1 = fa[static_cast<std::size_t>(uniform_index(rng, fa.size()))];
    e.s2 = fb[static_cast<std::size_t>(uniform_index(rng, fb.size()))];
    e.snr_db = uniform(rng, snr_lo, snr_hi);
    e.split = split;
    e.dur_s = std::min(duration(e.s1), duration(e.s2));
    manifest.entries.push_back(std::move(e));
  };
  for (std::size_t i = 0; i < n_train; ++i) draw(train_speakers, Split::kTrain);
  for (std::size_t i = 0; i < n_valid; ++i) draw(train_speakers, Split::kValid);
  for (std::size_t i = 0; i < n_test; ++i) draw(test_speakers, Split::kTest);
  return manifest;
}

inline std::string manifest_to_string(const Manifest& m) {
  std::ostringstream out;
  for (const auto& e : m.entries) {
    nlohmann::ordered_json j;
    j["s1"] = e.s1;
    j["s2"] = e.s2;
    j["snr_db"] = e.snr_db;
    j["split"] = to_string(e.split);
    j["dur_s"] = e.dur_s;
    out << j.dump() << '\n';
  }
  return out.str();
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest_to_string(m);
}

/// Checks the manifest invariants: referenced files exist, snr inside the
/// range, and no test speaker also appears in the train split.
inline void validate_manifest(const Manifest& m, std::array<double, 2> snr_range) {
  std::set<std::string> train_spk, test_spk;
  for (const auto& e : m.entries) {
    for (const auto* p : {&e.s1, &e.s2}) {
      if (!std::filesystem::exists(*p)) throw IoError("manifest references missing file " + *p);
    }
    if (e.snr_db < snr_range[0] || e.snr_db > snr_range[1])
      throw ConfigError("manifest entry snr outside configured range");
    auto& bucket = e.split == Split::kTrain ? train_spk : test_spk;
    if (e.split != Split::kValid) {
      bucket.insert(speaker_of(e.s1));
      bucket.insert(speaker_of(e.s2));
    }
  }
  for (const auto& s : test_spk) {
    if (train_spk.count(s) != 0) throw ConfigError("speaker " + s + " appears in both train and test");
  }
}

inline Manifest parse_manifest(std::istream& in) {
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.s1 = j.at("s1").get<std::string>();
      e.s2 = j.at("s2").get<std::string>();
      e.snr_db = j.at("snr_db").get<double>();
      e.split = parse_split(j.at("split").get<std::string>());
      e.dur_s = j.at("dur_s").get<double>();
      m.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw IoError("manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path,
                              std::array<double, 2> snr_range = {-100.0, 100.0}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m = parse_manifest(in);
  validate_manifest(m, snr_range);
  return m;
}

/// Reads an entry's sources (resampled to `sample_rate`) and mixes them.
inline MixtureSample load_mixture(const ManifestEntry& e, int sample_rate = kDefaultSampleRate) {
  return synth_mixture({read_wav(e.s1, sample_rate), read_wav(e.s2, sample_rate)}, e.snr_db,
                       {speaker_of(e.s1), speaker_of(e.s2)});
}

// ---------------------------------------------------------------------------
// Synthetic corpus

/// One toy "utterance": band-limited noise (a dense sum of random sinusoids
/// inside [lo_hz, hi_hz]) plus a steady tone, normalized to a 0.1 RMS level.
inline Waveform toy_utterance(double lo_hz, double hi_hz, double tone_hz, double dur_s,
                              int sample_rate, Rng& rng) {
  constexpr double kTwoPi = 6.283185307179586476925;
  const auto n = static_cast<std::size_t>(std::lround(dur_s * sample_rate));
  std::vector<double> x(std::max<std::size_t>(1, n), 0.0);
  constexpr int kPartials = 48;
  for (int k = 0; k < kPartials; ++k) {
    const double f = uniform(rng, lo_hz, hi_hz);
    const double phase = uniform(rng, 0.0, kTwoPi);
    const double amp = uniform(rng, 0.5, 1.0);
    for (std::size_t t = 0; t < x.size(); ++t)
      x[t] += amp * std::sin(kTwoPi * f * static_cast<double>(t) / sample_rate + phase);
  }
  const double tone_phase = uniform(rng, 0.0, kTwoPi);
  const double tone_amp = std::sqrt(static_cast<double>(kPartials) / 2.0);
  for (std::size_t t = 0; t < x.size(); ++t)
    x[t] += tone_amp * std::sin(kTwoPi * tone_hz * static_cast<double>(t) / sample_rate + tone_phase);
  double rms = 0.0;
  for (double v : x) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(x.size()));
  for (double& v : x) v *= 0.1 / rms;
  return Waveform(std::move(x), sample_rate);
}

/// Writes `speakers` directories of `utterances` toy WAVs each. Every speaker
/// owns a distinct frequency band, so sources of different speakers never
/// overlap spectrally.
inline void generate_toy_corpus(const std::filesystem::path& root, std::size_t speakers,
                                std::size_t utterances, double dur_s, std::uint64_t seed,
                                int sample_rate = kDefaultSampleRate) {
  if (speakers < 1 || utterances < 1) throw ConfigError("toy corpus needs speakers and utterances");
  Rng rng = make_rng(seed, "toy-corpus");
  const double lo = 100.0;
  const double hi = 0.45 * sample_rate;
  const double band = (hi - lo) / static_cast<double>(speakers);
  for (std::size_t s = 0; s < speakers; ++s) {
    const double b_lo = lo + band * static_cast<double>(s);
    const double b_hi = b_lo + 0.7 * band;
    const double tone = b_lo + 0.85 * band;
    char name[32];
    std::snprintf(name, sizeof name, "spk%03zu", s);
    const auto dir = root / name;
    std::filesystem::create_directories(dir);
    for (std::size_t u = 0; u < utterances; ++u) {
      char file[32];
      std::snprintf(file, sizeof file, "utt%03zu.wav", u);
      write_wav(dir / file, toy_utterance(b_lo, b_hi, tone, dur_s, sample_rate, rng));
    }
  }
}

}  // namespace tdsep
