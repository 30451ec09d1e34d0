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

// Run configuration and its two encodings: a small TOML-style key = value
// file for humans and JSON for checkpoint headers.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdsep/frontend.hpp"
#include "tdsep/optim.hpp"
#include "tdsep/separator.hpp"

namespace tdsep {

struct RunConfig {
  FrontendConfig frontend;
  SeparatorConfig separator;
  OptimizerConfig optimizer;
  std::uint64_t seed = 1;
  double segment_seconds = 4.0;
  std::size_t batch_size = 1;
  std::size_t max_steps = 1000;
  std::size_t checkpoint_interval = 500;
  int sample_rate = kDefaultSampleRate;

  std::size_t segment_samples() const {
    return static_cast<std::size_t>(segment_seconds * static_cast<double>(sample_rate) + 0.5);
  }

  void validate() const {
    frontend.validate();
    separator.validate();
    detail::require_config(optimizer.learning_rate > 0.0 && optimizer.clip_norm > 0.0,
                           "optimizer: learning rate and clip norm must be positive");
    detail::require_config(segment_seconds > 0.0, "train: segment_seconds must be positive");
    detail::require_config(batch_size >= 1 && max_steps >= 1 && checkpoint_interval >= 1,
                           "train: batch_size, max_steps and checkpoint_interval must be positive");
    detail::require_config(sample_rate > 0, "train: sample_rate must be positive");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string unquote(std::string v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front())
    return v.substr(1, v.size() - 2);
  return v;
}

inline std::vector<Index> parse_index_list(const std::string& key, std::string v) {
  v = trim(v);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') throw ConfigError(key + ": expected a [a, b, ...] list");
  std::vector<Index> out;
  std::stringstream ss(v.substr(1, v.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(static_cast<Index>(std::stoll(item)));
    } catch (const std::exception&) {
      throw ConfigError(key + ": '" + item + "' is not an integer");
    }
  }
  return out;
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    N out;
    if constexpr (std::is_floating_point_v<N>) {
      out = static_cast<N>(std::stod(v, &used));
    } else {
      out = static_cast<N>(std::stoll(v, &used));
      if (std::stod(v) < 0 && std::is_unsigned_v<N>) throw ConfigError(key + ": must be non-negative");
    }
    if (used != v.size()) throw ConfigError(key + ": trailing characters in '" + v + "'");
    return out;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + v + "' is not a number");
  }
}

}  // namespace detail

/// Applies one `section.key = value` setting.
inline void apply_setting(RunConfig& cfg, const std::string& section, const std::string& key,
                          const std::string& raw) {
  using detail::parse_number;
  const std::string v = detail::unquote(detail::trim(raw));
  const std::string full = section.empty() ? key : section + "." + key;
  auto& fe = cfg.frontend;
  auto& sep = cfg.separator;
  if (full == "frontend.num_basis") fe.num_basis = parse_number<Index>(full, v);
  else if (full == "frontend.win_len") fe.win_len = parse_number<Index>(full, v);
  else if (full == "frontend.stride") fe.stride = parse_number<Index>(full, v);
  else if (full == "separator.variant") sep.variant = parse_variant(v);
  else if (full == "separator.num_sources") sep.num_sources = parse_number<Index>(full, v);
  else if (full == "separator.num_tcns") sep.num_tcns = parse_number<Index>(full, v);
  else if (full == "separator.bottleneck_channels") sep.bottleneck_channels = parse_number<Index>(full, v);
  else if (full == "separator.hidden_channels") sep.hidden_channels = parse_number<Index>(full, v);
  else if (full == "separator.kernel") sep.kernel = parse_number<Index>(full, v);
  else if (full == "separator.dilations") sep.dilations = detail::parse_index_list(full, v);
  else if (full == "separator.py_branch_depths") sep.py_branch_depths = detail::parse_index_list(full, v);
  else if (full == "separator.weightor_hidden") sep.weightor.hidden_channels = parse_number<Index>(full, v);
  else if (full == "separator.weightor_kernel") sep.weightor.kernel = parse_number<Index>(full, v);
  else if (full == "optimizer.method") cfg.optimizer.method = v;
  else if (full == "optimizer.learning_rate") cfg.optimizer.learning_rate = parse_number<double>(full, v);
  else if (full == "optimizer.clip_norm") cfg.optimizer.clip_norm = parse_number<double>(full, v);
  else if (full == "train.seed") cfg.seed = parse_number<std::uint64_t>(full, v);
  else if (full == "train.segment_seconds") cfg.segment_seconds = parse_number<double>(full, v);
  else if (full == "train.batch_size") cfg.batch_size = parse_number<std::size_t>(full, v);
  else if (full == "train.max_steps") cfg.max_steps = parse_number<std::size_t>(full, v);
  else if (full == "train.checkpoint_interval") cfg.checkpoint_interval = parse_number<std::size_t>(full, v);
  else if (full == "train.sample_rate") cfg.sample_rate = parse_number<int>(full, v);
  else throw ConfigError("unknown config key '" + full + "'");
}

/// Parses `[section]` headers and `key = value` lines; `#` starts a comment.
inline RunConfig parse_config(std::istream& in, RunConfig cfg = {}) {
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(cfg, section, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in);
}

inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["frontend"] = {{"num_basis", c.frontend.num_basis}, {"win_len", c.frontend.win_len}, {"stride", c.frontend.stride}};
  const auto& s = c.separator;
  j["separator"] = {{"variant", to_string(s.variant)},
                    {"num_sources", s.num_sources},
                    {"num_tcns", s.num_tcns},
                    {"bottleneck_channels", s.bottleneck_channels},
                    {"hidden_channels", s.hidden_channels},
                    {"kernel", s.kernel},
                    {"dilations", s.dilations},
                    {"py_branch_depths", s.py_branch_depths},
                    {"weightor_hidden", s.weightor.hidden_channels},
                    {"weightor_kernel", s.weightor.kernel}};
  j["optimizer"] = {{"method", c.optimizer.method},
                    {"learning_rate", c.optimizer.learning_rate},
                    {"clip_norm", c.optimizer.clip_norm}};
  j["train"] = {{"seed", c.seed},
                {"segment_seconds", c.segment_seconds},
                {"batch_size", c.batch_size},
                {"max_steps", c.max_steps},
                {"checkpoint_interval", c.checkpoint_interval},
                {"sample_rate", c.sample_rate}};
  return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  try {
    RunConfig c;
    const auto& f = j.at("frontend");
    c.frontend.num_basis = f.at("num_basis").get<Index>();
    c.frontend.win_len = f.at("win_len").get<Index>();
    c.frontend.stride = f.at("stride").get<Index>();
    const auto& s = j.at("separator");
    c.separator.variant = parse_variant(s.at("variant").get<std::string>());
    c.separator.num_sources = s.at("num_sources").get<Index>();
    c.separator.num_tcns = s.at("num_tcns").get<Index>();
    c.separator.bottleneck_channels = s.at("bottleneck_channels").get<Index>();
    c.separator.hidden_channels = s.at("hidden_channels").get<Index>();
    c.separator.kernel = s.at("kernel").get<Index>();
    c.separator.dilations = s.at("dilations").get<std::vector<Index>>();
    c.separator.py_branch_depths = s.at("py_branch_depths").get<std::vector<Index>>();
    c.separator.weightor.hidden_channels = s.at("weightor_hidden").get<Index>();
    c.separator.weightor.kernel = s.at("weightor_kernel").get<Index>();
    const auto& o = j.at("optimizer");
    c.optimizer.method = o.at("method").get<std::string>();
    c.optimizer.learning_rate = o.at("learning_rate").get<double>();
    c.optimizer.clip_norm = o.at("clip_norm").get<double>();
    const auto& t = j.at("train");
    c.seed = t.at("seed").get<std::uint64_t>();
    c.segment_seconds = t.at("segment_seconds").get<double>();
    c.batch_size = t.at("batch_size").get<std::size_t>();
    c.max_steps = t.at("max_steps").get<std::size_t>();
    c.checkpoint_interval = t.at("checkpoint_interval").get<std::size_t>();
    c.sample_rate = t.at("sample_rate").get<int>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config json: ") + e.what());
  }
}

}  // namespace tdsep
