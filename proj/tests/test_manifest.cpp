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

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>
#include <sstream>

#include "tdsep/manifest.hpp"

using namespace tdsep;
namespace fs = std::filesystem;

namespace {

fs::path toy_root(const std::string& name, std::size_t speakers, std::size_t utts) {
  const auto root = fs::temp_directory_path() / ("tdsep_test_manifest_" + name);
  fs::remove_all(root);
  generate_toy_corpus(root, speakers, utts, 0.25, 5);
  return root;
}

}  // namespace

TEST_CASE("manifest generation is deterministic in the seed", "[manifest]") {
  const auto root = toy_root("det", 6, 3);
  const Manifest a = build_manifest(root, 40, 11);
  const Manifest b = build_manifest(root, 40, 11);
  const Manifest c = build_manifest(root, 40, 12);
  CHECK(manifest_to_string(a) == manifest_to_string(b));
  CHECK(manifest_to_string(a) != manifest_to_string(c));
  CHECK(a.entries.size() == 40);
  fs::remove_all(root);
}

TEST_CASE("manifest entries respect the configured invariants", "[manifest]") {
  const auto root = toy_root("inv", 8, 2);
  ManifestOptions opt;
  opt.snr_range = {-2.0, 3.0};
  opt.valid_fraction = 0.2;
  opt.test_fraction = 0.25;
  const Manifest m = build_manifest(root, 60, 7, opt);
  std::set<std::string> train_spk, test_spk;
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& e : m.entries) {
    CHECK(e.snr_db >= -2.0);
    CHECK(e.snr_db <= 3.0);
    CHECK(speaker_of(e.s1) != speaker_of(e.s2));
    CHECK(e.dur_s == Catch::Approx(0.25));
    ++counts[static_cast<int>(e.split)];
    if (e.split == Split::kTrain) train_spk.insert({speaker_of(e.s1), speaker_of(e.s2)});
    if (e.split == Split::kTest) test_spk.insert({speaker_of(e.s1), speaker_of(e.s2)});
  }
  CHECK(counts[0] > 0);
  CHECK(counts[1] > 0);
  CHECK(counts[2] > 0);
  for (const auto& s : test_spk) CHECK(train_spk.count(s) == 0);
  CHECK_NOTHROW(validate_manifest(m, opt.snr_range));
  CHECK_THROWS_AS(validate_manifest(m, {0.0, 1.0}), ConfigError);
  fs::remove_all(root);
}

TEST_CASE("manifest round trips through its line format", "[manifest]") {
  const auto root = toy_root("rt", 4, 2);
  const Manifest m = build_manifest(root, 12, 3);
  const auto path = root / "manifest.jsonl";
  save_manifest(path, m);
  const Manifest back = load_manifest(path);
  CHECK(back.entries == m.entries);

  const MixtureSample mix = load_mixture(m.entries.front());
  CHECK(mix.sources.size() == 2);
  CHECK(std::abs(measure_snr_db(mix.sources[0], mix.sources[1]) - m.entries.front().snr_db) < 1e-9);

  std::istringstream bad("{\"s1\": \"x\"}\n");
  CHECK_THROWS_AS(parse_manifest(bad), IoError);
  fs::remove_all(root);
}

TEST_CASE("manifest construction errors", "[manifest]") {
  SECTION("a single speaker cannot form pairs") {
    const auto root = toy_root("one", 1, 3);
    CHECK_THROWS_AS(build_manifest(root, 5, 1), ConfigError);
    fs::remove_all(root);
  }
  SECTION("an empty corpus") {
    const auto root = fs::temp_directory_path() / "tdsep_test_manifest_empty";
    fs::remove_all(root);
    fs::create_directories(root / "spk000");
    CHECK_THROWS_AS(build_manifest(root, 5, 1), ConfigError);
    fs::remove_all(root);
  }
  SECTION("a missing root") {
    CHECK_THROWS_AS(build_manifest("/nonexistent/tdsep", 5, 1), IoError);
  }
  SECTION("a missing referenced file") {
    Manifest m;
    m.entries.push_back({"/nonexistent/a/1.wav", "/nonexistent/b/1.wav", 0.0, Split::kTrain, 1.0});
    CHECK_THROWS_AS(validate_manifest(m, {-5.0, 5.0}), IoError);
  }
}
