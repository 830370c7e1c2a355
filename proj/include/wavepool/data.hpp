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

// Synthetic set layout (little-endian):
//   char[4] "WPDS", u32 version (1)
//   u64 N, C, H, W, class_count
//   i32 labels[N]
//   f64 images[N * C * H * W]   (N x C x H x W, values in [0, 1])

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "wavepool/binary_io.hpp"
#include "wavepool/error.hpp"
#include "wavepool/rng.hpp"
#include "wavepool/tensor.hpp"

namespace wavepool {

struct LabeledImageSet {
  Tensor images;  // N x C x H x W in [0, 1]
  std::vector<int> labels;
  std::size_t class_count = 0;
  std::string split;
  std::vector<int> coarse_labels;  // CIFAR only

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }
  std::size_t image_numel() const { return channels() * height() * width(); }

  /// Copies the selected images into a fresh batch tensor.
  Tensor gather(std::span<const std::size_t> indices) const {
    const std::size_t m = image_numel();
    Tensor out({indices.size(), channels(), height(), width()});
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const auto src = images.values().subspan(indices[i] * m, m);
      std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(i * m));
    }
    return out;
  }

  std::vector<int> gather_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(labels[i]);
    return out;
  }
};

/// Per-channel mean and standard deviation over every pixel of the set.
inline std::pair<std::vector<double>, std::vector<double>> channel_statistics(const LabeledImageSet& set) {
  const std::size_t c = set.channels(), plane = set.height() * set.width();
  std::vector<double> mean(c, 0.0), sq(c, 0.0);
  const auto v = set.images.values();
  for (std::size_t n = 0; n < set.size(); ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* p = v.data() + (n * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        mean[ch] += p[i];
        sq[ch] += p[i] * p[i];
      }
    }
  }
  const double count = static_cast<double>(set.size() * plane);
  std::vector<double> stdev(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    mean[ch] /= count;
    stdev[ch] = std::sqrt(std::max(sq[ch] / count - mean[ch] * mean[ch], 1e-12));
  }
  return {mean, stdev};
}

// ---------------------------------------------------------------------------
// CIFAR-100 binary format: 1 coarse byte, 1 fine byte, 3072 bytes R,G,B planes.

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarImageBytes = 3 * kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecordBytes = 2 + kCifarImageBytes;

/// `root` may hold train.bin/test.bin directly or inside cifar-100-binary/.
inline std::filesystem::path cifar100_file(const std::filesystem::path& root, const std::string& split) {
  if (split != "train" && split != "test") {
    throw Error(ErrorCode::InvalidConfig, "CIFAR-100 split must be 'train' or 'test', got '" + split + "'");
  }
  for (const auto& candidate : {root / (split + ".bin"), root / "cifar-100-binary" / (split + ".bin")}) {
    if (std::filesystem::is_regular_file(candidate)) return candidate;
  }
  throw Error(ErrorCode::DatasetNotFound, "no CIFAR-100 " + split + ".bin under " + root.string());
}

inline LabeledImageSet load_cifar100(const std::filesystem::path& root, const std::string& split) {
  const auto file = cifar100_file(root, split);
  const auto bytes = std::filesystem::file_size(file);
  if (bytes == 0 || bytes % kCifarRecordBytes != 0) {
    throw Error(ErrorCode::CorruptDataset, file.string() + ": size " + std::to_string(bytes) +
                                               " is not a positive multiple of 3074");
  }
  const std::size_t n = bytes / kCifarRecordBytes;
  std::ifstream in(file, std::ios::binary);
  std::vector<unsigned char> buffer(bytes);
  if (!in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(bytes))) {
    throw Error(ErrorCode::CorruptDataset, "short read from " + file.string());
  }

  LabeledImageSet set;
  set.images = Tensor({n, 3, kCifarSide, kCifarSide});
  set.class_count = 100;
  set.split = split;
  set.labels.resize(n);
  set.coarse_labels.resize(n);
  auto pixels = set.images.values();
  for (std::size_t r = 0; r < n; ++r) {
    const unsigned char* rec = buffer.data() + r * kCifarRecordBytes;
    if (rec[0] >= 20 || rec[1] >= 100) {
      throw Error(ErrorCode::CorruptDataset, "record " + std::to_string(r) + " has label out of range");
    }
    set.coarse_labels[r] = rec[0];
    set.labels[r] = rec[1];
    for (std::size_t i = 0; i < kCifarImageBytes; ++i) pixels[r * kCifarImageBytes + i] = rec[2 + i] / 255.0;
  }
  return set;
}

/// The 3074 bytes of record `index` as stored on disk.
inline std::vector<unsigned char> cifar100_record(const LabeledImageSet& set, std::size_t index) {
  if (set.image_numel() != kCifarImageBytes || set.coarse_labels.size() != set.size()) {
    throw Error(ErrorCode::ShapeMismatch, "set does not hold CIFAR-100 records");
  }
  std::vector<unsigned char> rec(kCifarRecordBytes);
  rec[0] = static_cast<unsigned char>(set.coarse_labels.at(index));
  rec[1] = static_cast<unsigned char>(set.labels.at(index));
  const auto px = set.images.values().subspan(index * kCifarImageBytes, kCifarImageBytes);
  for (std::size_t i = 0; i < kCifarImageBytes; ++i) {
    rec[2 + i] = static_cast<unsigned char>(std::lround(std::clamp(px[i], 0.0, 1.0) * 255.0));
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Synthetic tiny objects

inline constexpr std::array<const char*, 4> kTextureNames = {"checkerboard", "vertical-stripes",
                                                             "horizontal-stripes", "dot-grid"};

/// Zero-mean (over 2x2 cells) texture value in [-1, 1] for class `cls`.
inline double texture_value(std::size_t cls, std::size_t i, std::size_t j) {
  switch (cls) {
    case 0: return (i + j) % 2 == 0 ? 1.0 : -1.0;
    case 1: return j % 2 == 0 ? 1.0 : -1.0;
    case 2: return i % 2 == 0 ? 1.0 : -1.0;
    case 3: return (i % 2 == 0 && j % 2 == 0) ? 1.0 : -1.0 / 3.0;
    default: throw Error(ErrorCode::InvalidConfig, "no texture for class " + std::to_string(cls));
  }
}

inline std::vector<double> texture_patch(std::size_t cls, std::size_t size) {
  std::vector<double> out(size * size);
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) out[i * size + j] = texture_value(cls, i, j);
  }
  return out;
}

struct TinyObjectConfig {
  std::size_t n = 2000;
  std::size_t image_size = 32;
  std::size_t object_size = 4;
  std::size_t classes = 4;
  std::uint64_t seed = 0;
  std::string split = "train";
};

/// Smooth periodic background plus one textured patch at an even-aligned
/// position; the texture identifies the class.
inline LabeledImageSet make_tiny_object_set(const TinyObjectConfig& cfg) {
  if (cfg.n == 0) throw Error(ErrorCode::InvalidConfig, "tiny-object set needs n > 0");
  if (cfg.image_size < 8 || cfg.image_size % 2 != 0) {
    throw Error(ErrorCode::InvalidConfig, "image_size must be even and at least 8");
  }
  if (cfg.object_size < 2 || cfg.object_size > 8 || 4 * cfg.object_size >= cfg.image_size) {
    throw Error(ErrorCode::InvalidConfig, "object_size must lie in [2, 8] and below image_size / 4");
  }
  if (cfg.classes < 2 || cfg.classes > kTextureNames.size()) {
    throw Error(ErrorCode::InvalidConfig,
                "classes must lie in [2, " + std::to_string(kTextureNames.size()) + "]");
  }
  const std::size_t s = cfg.image_size, k = cfg.object_size, plane = s * s;
  Rng rng(cfg.seed);

  LabeledImageSet set;
  set.class_count = cfg.classes;
  set.split = cfg.split;
  set.labels.resize(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) set.labels[i] = static_cast<int>(i % cfg.classes);
  for (std::size_t i = cfg.n; i > 1; --i) std::swap(set.labels[i - 1], set.labels[rng.below(i)]);

  set.images = Tensor({cfg.n, 3, s, s});
  auto px = set.images.values();
  const double two_pi = 2.0 * std::numbers::pi;
  const std::size_t positions = (s - k) / 2 + 1;
  for (std::size_t n = 0; n < cfg.n; ++n) {
    double* img = px.data() + n * 3 * plane;
    for (std::size_t c = 0; c < 3; ++c) {
      const double base = rng.uniform(0.35, 0.65);
      const double amp = rng.uniform(0.0, 0.1);
      const double fy = static_cast<double>(rng.below(3));
      const double fx = static_cast<double>(1 + rng.below(2));
      const double phase = rng.uniform(0.0, two_pi);
      for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
          const double t = two_pi * (fy * static_cast<double>(y) + fx * static_cast<double>(x)) / static_cast<double>(s);
          img[c * plane + y * s + x] = base + amp * std::cos(t + phase);
        }
      }
    }
    const std::size_t py = 2 * rng.below(positions), pxo = 2 * rng.below(positions);
    const double strength = rng.uniform(0.15, 0.25);
    const auto cls = static_cast<std::size_t>(set.labels[n]);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double v = strength * texture_value(cls, i, j);
        for (std::size_t c = 0; c < 3; ++c) img[c * plane + (py + i) * s + pxo + j] += v;
      }
    }
  }
  return set;
}

/// Train and test sets drawn from independent streams of one seed.
inline std::pair<LabeledImageSet, LabeledImageSet> make_tiny_object_splits(TinyObjectConfig cfg, std::size_t n_train,
                                                                           std::size_t n_test) {
  Rng root(cfg.seed);
  TinyObjectConfig train = cfg, test = cfg;
  train.n = n_train;
  train.seed = root.next_u64();
  train.split = "train";
  test.n = n_test;
  test.seed = root.next_u64();
  test.split = "test";
  return {make_tiny_object_set(train), make_tiny_object_set(test)};
}

inline constexpr char kDatasetMagic[4] = {'W', 'P', 'D', 'S'};
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void export_image_set(const LabeledImageSet& set, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::DatasetNotFound, "cannot write " + path.string());
  out.write(kDatasetMagic, 4);
  binary::write_le<std::uint32_t>(out, kDatasetVersion);
  for (std::size_t v : {set.size(), set.channels(), set.height(), set.width(), set.class_count}) {
    binary::write_le<std::uint64_t>(out, v);
  }
  for (int label : set.labels) binary::write_le<std::int32_t>(out, label);
  for (double v : set.images.values()) binary::write_le<double>(out, v);
}

inline LabeledImageSet import_image_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::DatasetNotFound, "dataset not found: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kDatasetMagic, 4) != 0) {
    throw Error(ErrorCode::CorruptDataset, path.string() + " is not a wavepool image set");
  }
  constexpr auto bad = ErrorCode::CorruptDataset;
  if (binary::read_le<std::uint32_t>(in, bad) != kDatasetVersion) {
    throw Error(bad, path.string() + ": unsupported image set version");
  }
  std::array<std::uint64_t, 5> dims{};
  for (auto& d : dims) d = binary::read_le<std::uint64_t>(in, bad);
  const auto [n, c, h, w, classes] = dims;
  if (n == 0 || c == 0 || h == 0 || w == 0 || h % 2 || w % 2 || n * c * h * w > (std::uint64_t{1} << 32)) {
    throw Error(bad, path.string() + ": invalid header");
  }
  LabeledImageSet set;
  set.class_count = classes;
  set.split = path.stem().string();
  set.labels.resize(n);
  for (int& label : set.labels) {
    label = binary::read_le<std::int32_t>(in, bad);
    if (label < 0 || static_cast<std::uint64_t>(label) >= classes) throw Error(bad, "label out of range");
  }
  set.images = Tensor({n, c, h, w});
  for (double& v : set.images.values()) v = binary::read_le<double>(in, bad);
  return set;
}

}  // namespace wavepool
