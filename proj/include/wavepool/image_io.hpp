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

// Binary Netpbm I/O. P5 (gray) and P6 (RGB) with maxval 255 or 65535;
// 16-bit samples are big-endian. Header comments are skipped on read.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "wavepool/error.hpp"
#include "wavepool/transform.hpp"

namespace wavepool {

/// Planar image, samples in [0, maxval].
struct Image {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint32_t maxval = 255;
  std::vector<Matrix> planes;
};

namespace detail {

inline std::string netpbm_token(std::istream& in, const std::string& what) {
  std::string tok;
  int c = in.get();
  while (in) {
    if (c == '#') {
      while (in && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (in && !std::isspace(c) && c != '#') {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (tok.empty()) throw Error(ErrorCode::UnsupportedFormat, what + ": truncated header");
  return tok;
}

inline std::size_t netpbm_number(std::istream& in, const std::string& what) {
  const std::string tok = netpbm_token(in, what);
  if (tok.find_first_not_of("0123456789") != std::string::npos || tok.size() > 9) {
    throw Error(ErrorCode::UnsupportedFormat, what + ": bad header field '" + tok + "'");
  }
  return std::stoul(tok);
}

}  // namespace detail

inline Image read_netpbm(const std::filesystem::path& path) {
  const std::string what = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open image " + what);
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw Error(ErrorCode::UnsupportedFormat, what + ": only binary P5/P6 images are supported");
  }
  Image img;
  img.channels = magic[1] == '5' ? 1 : 3;
  img.width = detail::netpbm_number(in, what);
  img.height = detail::netpbm_number(in, what);
  const std::size_t maxval = detail::netpbm_number(in, what);
  if (maxval != 255 && maxval != 65535) {
    throw Error(ErrorCode::UnsupportedFormat, what + ": maxval must be 255 or 65535, got " + std::to_string(maxval));
  }
  if (img.width == 0 || img.height == 0) throw Error(ErrorCode::UnsupportedFormat, what + ": empty image");
  img.maxval = static_cast<std::uint32_t>(maxval);
  const std::size_t bytes_per = maxval == 255 ? 1 : 2;
  std::vector<unsigned char> raw(img.width * img.height * img.channels * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw Error(ErrorCode::UnsupportedFormat, what + ": truncated pixel data");
  }
  img.planes.assign(img.channels, Matrix(img.height, img.width));
  for (std::size_t i = 0; i < img.height * img.width; ++i) {
    for (std::size_t c = 0; c < img.channels; ++c) {
      const std::size_t k = (i * img.channels + c) * bytes_per;
      img.planes[c].values[i] = bytes_per == 1 ? raw[k] : (raw[k] << 8 | raw[k + 1]);
    }
  }
  return img;
}

/// Rounds and clamps samples to [0, maxval].
inline void write_netpbm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw Error(ErrorCode::UnsupportedFormat, "netpbm images have 1 or 3 channels");
  }
  if (img.maxval != 255 && img.maxval != 65535) throw Error(ErrorCode::UnsupportedFormat, "maxval must be 255 or 65535");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::MissingArtifact, "cannot write image " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n" << img.maxval << "\n";
  const std::size_t bytes_per = img.maxval == 255 ? 1 : 2;
  std::vector<unsigned char> raw(img.width * img.height * img.channels * bytes_per);
  for (std::size_t i = 0; i < img.height * img.width; ++i) {
    for (std::size_t c = 0; c < img.channels; ++c) {
      const double v = std::clamp(std::round(img.planes[c].values[i]), 0.0, static_cast<double>(img.maxval));
      const auto q = static_cast<std::uint32_t>(v);
      const std::size_t k = (i * img.channels + c) * bytes_per;
      if (bytes_per == 1) {
        raw[k] = static_cast<unsigned char>(q);
      } else {
        raw[k] = static_cast<unsigned char>(q >> 8);
        raw[k + 1] = static_cast<unsigned char>(q & 0xff);
      }
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

}  // namespace wavepool
