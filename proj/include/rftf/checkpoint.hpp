// Copyright 2026 The RFTF Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Checkpoint file format. Binary, little-endian:
//   magic "RFTFCKPT" | version u32 | n_segments u32
//   per segment: name_len u32 | name bytes | offset u64 | ndim u32 | dims u64[]
//   n_values u64 | payload f64[]
// A sidecar JSON at <path>.json carries the metadata (network spec, seed,
// training progress, config hash); the binary file carries only numbers.

#ifndef RFTF_CHECKPOINT_HPP_
#define RFTF_CHECKPOINT_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rftf/errors.hpp"
#include "rftf/tensor_core.hpp"

namespace rftf {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

inline constexpr char kCheckpointMagic[8] = {'R', 'F', 'T', 'F',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json mlp_spec_to_json(const MlpSpec& spec) {
  return {{"input_dim", spec.input_dim},
          {"hidden_dims", spec.hidden_dims},
          {"output_dim", spec.output_dim},
          {"activation", activation_name(spec.activation)}};
}

inline MlpSpec mlp_spec_from_json(const nlohmann::json& j) {
  MlpSpec spec;
  spec.input_dim = j.at("input_dim").get<std::size_t>();
  spec.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
  spec.output_dim = j.at("output_dim").get<std::size_t>();
  spec.activation = activation_from_name(j.at("activation").get<std::string>());
  spec.validate();
  return spec;
}

struct Checkpoint {
  ParamVector params;
  nlohmann::json meta;
};

namespace detail {

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint: " + path);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ParamVector& params,
                            const nlohmann::json& meta) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for write: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_raw(out, kCheckpointVersion);
  detail::write_raw(out, static_cast<std::uint32_t>(params.segments().size()));
  for (const Segment& s : params.segments()) {
    detail::write_raw(out, static_cast<std::uint32_t>(s.name.size()));
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    detail::write_raw(out, static_cast<std::uint64_t>(s.offset));
    detail::write_raw(out, static_cast<std::uint32_t>(s.shape.size()));
    for (std::size_t d : s.shape)
      detail::write_raw(out, static_cast<std::uint64_t>(d));
  }
  detail::write_raw(out, static_cast<std::uint64_t>(params.values.size()));
  out.write(reinterpret_cast<const char*>(params.values.data()),
            static_cast<std::streamsize>(params.values.size() *
                                         sizeof(double)));
  if (!out) throw IoError("write failed: " + path);
  out.close();

  std::ofstream side(path + ".json", std::ios::trunc);
  if (!side) throw IoError("cannot open for write: " + path + ".json");
  side << meta.dump(2) << "\n";
  if (!side) throw IoError("write failed: " + path + ".json");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw IoError("bad checkpoint magic: " + path);
  const auto version = detail::read_raw<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) +
                  ": " + path);
  const auto n_segments = detail::read_raw<std::uint32_t>(in, path);
  std::vector<Segment> table;
  table.reserve(n_segments);
  for (std::uint32_t i = 0; i < n_segments; ++i) {
    const auto name_len = detail::read_raw<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw IoError("truncated checkpoint: " + path);
    Segment s;
    s.name = std::move(name);
    s.offset = static_cast<std::size_t>(detail::read_raw<std::uint64_t>(in, path));
    const auto ndim = detail::read_raw<std::uint32_t>(in, path);
    s.shape.resize(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d)
      s.shape[d] =
          static_cast<std::size_t>(detail::read_raw<std::uint64_t>(in, path));
    table.push_back(std::move(s));
  }
  const auto n_values = detail::read_raw<std::uint64_t>(in, path);
  std::vector<double> payload(n_values);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(n_values * sizeof(double)));
  if (!in) throw IoError("truncated checkpoint payload: " + path);

  Checkpoint ckpt;
  ckpt.params = ParamVector::from_table(std::move(table), std::move(payload));

  std::ifstream side(path + ".json");
  if (!side) throw IoError("missing checkpoint sidecar: " + path + ".json");
  try {
    side >> ckpt.meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint sidecar " + path + ".json: " + e.what());
  }
  return ckpt;
}

}  // namespace rftf

#endif  // RFTF_CHECKPOINT_HPP_
