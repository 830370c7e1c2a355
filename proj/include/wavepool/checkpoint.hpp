// Copyright 2026 The wavepool Authors. All Rights Reserved.
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

#pragma once

// Checkpoint layout (little-endian):
//   char[4]  "WPCK"
//   u32      version (1)
//   u32      tensor count
//   per tensor:
//     u32 name length, name bytes
//     u32 rank, u64 dims[rank]
//     f64 values[prod(dims)]
// Batchnorm running statistics are stored as "<unit>.bn.running_mean" and
// "<unit>.bn.running_var".

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "wavepool/backbone.hpp"
#include "wavepool/binary_io.hpp"

namespace wavepool {

inline constexpr char kCheckpointMagic[4] = {'W', 'P', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

inline std::vector<NamedTensor> state_dict(Network& model) {
  std::vector<NamedTensor> out;
  for (Parameter& p : model.parameters()) {
    const auto v = p.tensor.values();
    out.push_back({p.name, p.tensor.shape(), {v.begin(), v.end()}});
  }
  for (ConvBn* unit : model.units()) {
    const std::size_t c = unit->stats.mean.size();
    out.push_back({unit->name + ".bn.running_mean", {c}, unit->stats.mean});
    out.push_back({unit->name + ".bn.running_var", {c}, unit->stats.var});
  }
  return out;
}

inline void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::MissingArtifact, "cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, 4);
  binary::write_le<std::uint32_t>(out, kCheckpointVersion);
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    binary::write_string(out, t.name);
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) binary::write_le<std::uint64_t>(out, d);
    for (double v : t.values) binary::write_le<double>(out, v);
  }
}

inline std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingArtifact, "checkpoint not found: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw Error(ErrorCode::UnsupportedFormat, path.string() + " is not a wavepool checkpoint");
  }
  const auto version = binary::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::UnsupportedFormat, "checkpoint version " + std::to_string(version) +
                                                  " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = binary::read_le<std::uint32_t>(in);
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = binary::read_string(in);
    const auto rank = binary::read_le<std::uint32_t>(in);
    if (rank > 8) throw Error(ErrorCode::UnsupportedFormat, "implausible rank in " + t.name);
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(binary::read_le<std::uint64_t>(in));
    t.values.resize(shape_numel(t.shape));
    for (double& v : t.values) v = binary::read_le<double>(in);
    out.push_back(std::move(t));
  }
  return out;
}

inline void save_checkpoint(Network& model, const std::filesystem::path& path) {
  write_checkpoint(path, state_dict(model));
}

/// Every model tensor must be present with a matching shape.
inline void load_checkpoint(Network& model, const std::filesystem::path& path) {
  std::map<std::string, NamedTensor> stored;
  for (auto& t : read_checkpoint(path)) stored.emplace(t.name, std::move(t));
  auto fetch = [&](const std::string& name, const Shape& shape) -> const std::vector<double>& {
    auto it = stored.find(name);
    if (it == stored.end()) throw Error(ErrorCode::MissingArtifact, "checkpoint lacks tensor " + name);
    if (it->second.shape != shape) {
      throw Error(ErrorCode::ShapeMismatch, name + ": checkpoint shape " + shape_string(it->second.shape) +
                                                ", model shape " + shape_string(shape));
    }
    return it->second.values;
  };
  for (Parameter& p : model.parameters()) {
    const auto& v = fetch(p.name, p.tensor.shape());
    std::copy(v.begin(), v.end(), p.tensor.values().begin());
    std::fill(p.momentum.begin(), p.momentum.end(), 0.0);
  }
  for (ConvBn* unit : model.units()) {
    const Shape shape{unit->stats.mean.size()};
    unit->stats.mean = fetch(unit->name + ".bn.running_mean", shape);
    unit->stats.var = fetch(unit->name + ".bn.running_var", shape);
  }
}

}  // namespace wavepool
