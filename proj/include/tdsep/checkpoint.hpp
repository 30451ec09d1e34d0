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

// Single-file checkpoint container:
//   bytes 0..7    magic "TDSEPCK1"
//   bytes 8..15   header length H, little-endian uint64
//   next H bytes  JSON header: step, config, rng state, tensor table
//   remainder     raw little-endian float32 blobs at the offsets listed in
//                 the tensor table (offsets and sizes counted in floats)

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdsep/config.hpp"
#include "tdsep/optim.hpp"
#include "tdsep/params.hpp"

namespace tdsep {

inline constexpr char kCheckpointMagic[8] = {'T', 'D', 'S', 'E', 'P', 'C', 'K', '1'};

struct Checkpoint {
  std::size_t step = 0;
  RunConfig config;
  std::vector<std::pair<std::string, Matrix<float>>> parameters;
  long long optimizer_steps = 0;
  std::map<std::string, Adam<float>::Moments> optimizer_state;
  std::string rng_state;
};

namespace detail {

inline void append_floats(std::string& out, const Matrix<float>& m) {
  const std::size_t start = out.size();
  out.resize(start + static_cast<std::size_t>(m.size()) * 4);
  for (Index i = 0; i < m.size(); ++i) {
    std::uint32_t u;
    const float f = m.data()[i];
    std::memcpy(&u, &f, 4);
    for (int b = 0; b < 4; ++b) out[start + static_cast<std::size_t>(i) * 4 + b] = static_cast<char>((u >> (8 * b)) & 0xFF);
  }
}

inline Matrix<float> read_floats(const std::string& blob, std::size_t offset, Index rows, Index cols) {
  const std::size_t count = static_cast<std::size_t>(rows * cols);
  if ((offset + count) * 4 > blob.size()) throw IoError("checkpoint: tensor extends past end of file");
  Matrix<float> m(rows, cols);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b)
      u |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[(offset + i) * 4 + static_cast<std::size_t>(b)])) << (8 * b);
    std::memcpy(m.data() + i, &u, 4);
  }
  return m;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::ordered_json header;
  header["format"] = "tdsep-checkpoint";
  header["version"] = 1;
  header["step"] = ck.step;
  header["config"] = config_to_json(ck.config);
  header["rng_state"] = ck.rng_state;
  header["optimizer_steps"] = ck.optimizer_steps;
  std::string blob;
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  const auto add = [&](const std::string& name, const std::string& kind, const Matrix<float>& m) {
    table.push_back({{"name", name}, {"kind", kind}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", blob.size() / 4}});
    detail::append_floats(blob, m);
  };
  for (const auto& [name, m] : ck.parameters) add(name, "param", m);
  for (const auto& [name, st] : ck.optimizer_state) {
    add(name, "adam_m", st.m);
    add(name, "adam_v", st.v);
  }
  header["tensors"] = std::move(table);
  const std::string text = header.dump(1);
  std::string out(kCheckpointMagic, 8);
  const auto len = static_cast<std::uint64_t>(text.size());
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((len >> (8 * b)) & 0xFF));
  out += text;
  out += blob;
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write checkpoint " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw IoError(path.string() + ": not a checkpoint file");
  std::uint64_t len = 0;
  for (int b = 0; b < 8; ++b) len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + static_cast<std::size_t>(b)])) << (8 * b);
  if (16 + len > bytes.size()) throw IoError(path.string() + ": truncated header");
  const std::string blob = bytes.substr(16 + len);
  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(16, len));
    ck.step = header.at("step").get<std::size_t>();
    ck.config = config_from_json(header.at("config"));
    ck.rng_state = header.at("rng_state").get<std::string>();
    ck.optimizer_steps = header.at("optimizer_steps").get<long long>();
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto kind = t.at("kind").get<std::string>();
      Matrix<float> m = detail::read_floats(blob, t.at("offset").get<std::size_t>(), t.at("rows").get<Index>(),
                                            t.at("cols").get<Index>());
      if (kind == "param") ck.parameters.emplace_back(name, std::move(m));
      else if (kind == "adam_m") ck.optimizer_state[name].m = std::move(m);
      else if (kind == "adam_v") ck.optimizer_state[name].v = std::move(m);
      else throw IoError("checkpoint: unknown tensor kind " + kind);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed header: " + e.what());
  }
  return ck;
}

/// Copies checkpoint parameters into a store built from the same config.
/// Every store entry must be present with the same shape.
inline void load_parameters(ParamStore<float>& store, const Checkpoint& ck) {
  std::map<std::string, const Matrix<float>*> by_name;
  for (const auto& [name, m] : ck.parameters) by_name.emplace(name, &m);
  if (by_name.size() != store.size()) throw ConfigError("checkpoint: parameter count does not match the model");
  for (auto& [name, v] : store.entries()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("checkpoint: missing parameter " + name);
    if (it->second->rows() != v.rows() || it->second->cols() != v.cols())
      throw ConfigError("checkpoint: shape mismatch for " + name);
    v.mutable_value() = *it->second;
  }
}

inline std::vector<std::pair<std::string, Matrix<float>>> snapshot_parameters(const ParamStore<float>& store) {
  std::vector<std::pair<std::string, Matrix<float>>> out;
  for (const auto& [name, v] : store.entries()) out.emplace_back(name, v.value());
  return out;
}

}  // namespace tdsep
