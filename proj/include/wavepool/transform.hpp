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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wavepool/error.hpp"
#include "wavepool/filterbank.hpp"

namespace wavepool {

/// Dense row-major real matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::size_t size() const { return values.size(); }
};

struct Bands1D {
  std::vector<double> low;
  std::vector<double> high;
};

/// One level of a 2D transform. lh is vertical-high/horizontal-low, hl the
/// reverse, matching H X L^T and L X H^T.
struct SubbandSet {
  Matrix ll, lh, hl, hh;
};

namespace kernel {

inline std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

/// out[m] = sum_i taps[i] * in[(2m + i + origin) mod n], m < n/2.
inline void analyze(const double* in, std::size_t n, std::ptrdiff_t in_stride,
                    std::span<const double> taps, int origin, double* out,
                    std::ptrdiff_t out_stride) {
  const std::size_t half = n / 2;
  for (std::size_t m = 0; m < half; ++m) {
    double acc = 0.0;
    const auto base = static_cast<std::ptrdiff_t>(2 * m) + origin;
    for (std::size_t i = 0; i < taps.size(); ++i) {
      acc += taps[i] * in[wrap(base + static_cast<std::ptrdiff_t>(i), n) * in_stride];
    }
    out[m * out_stride] = acc;
  }
}

/// Transpose of analyze, accumulated: out[(2m + i + origin) mod n] += taps[i] * band[m].
inline void synthesize_add(const double* band, std::size_t n, std::ptrdiff_t band_stride,
                           std::span<const double> taps, int origin, double* out,
                           std::ptrdiff_t out_stride) {
  const std::size_t half = n / 2;
  for (std::size_t m = 0; m < half; ++m) {
    const double v = band[m * band_stride];
    if (v == 0.0) continue;
    const auto base = static_cast<std::ptrdiff_t>(2 * m) + origin;
    for (std::size_t i = 0; i < taps.size(); ++i) {
      out[wrap(base + static_cast<std::ptrdiff_t>(i), n) * out_stride] += taps[i] * v;
    }
  }
}

/// ll = L X L^T on a raw rows x cols plane; out is (rows/2) x (cols/2).
inline void lowpass_plane(const double* in, std::size_t rows, std::size_t cols,
                          std::span<const double> taps, double* out, std::vector<double>& scratch) {
  const std::size_t half_c = cols / 2;
  scratch.assign(rows * half_c, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    analyze(in + r * cols, cols, 1, taps, 0, scratch.data() + r * half_c, 1);
  }
  for (std::size_t c = 0; c < half_c; ++c) {
    analyze(scratch.data() + c, rows, static_cast<std::ptrdiff_t>(half_c), taps, 0, out + c,
            static_cast<std::ptrdiff_t>(half_c));
  }
}

/// Adjoint of lowpass_plane: out += L^T G L, out is rows x cols.
inline void lowpass_plane_adjoint(const double* grad, std::size_t rows, std::size_t cols,
                                  std::span<const double> taps, double* out,
                                  std::vector<double>& scratch) {
  const std::size_t half_c = cols / 2;
  scratch.assign(rows * half_c, 0.0);
  for (std::size_t c = 0; c < half_c; ++c) {
    synthesize_add(grad + c, rows, static_cast<std::ptrdiff_t>(half_c), taps, 0,
                   scratch.data() + c, static_cast<std::ptrdiff_t>(half_c));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    synthesize_add(scratch.data() + r * half_c, cols, 1, taps, 0, out + r * cols, 1);
  }
}

}  // namespace kernel

namespace detail {

inline void require_even(std::size_t n, const char* what) {
  if (n % 2 != 0) {
    throw Error(ErrorCode::OddLengthInput,
                std::string(what) + " has odd length " + std::to_string(n));
  }
}

inline void require_long_enough(std::size_t n, const WaveletSpec& spec, const char* what) {
  if (n < spec.max_analysis_length()) {
    throw Error(ErrorCode::InputTooShort, std::string(what) + " length " + std::to_string(n) +
                                              " is shorter than the " + spec.name + " filter (" +
                                              std::to_string(spec.max_analysis_length()) + ")");
  }
}

}  // namespace detail

inline Bands1D dwt1d(std::span<const double> x, const WaveletSpec& spec) {
  detail::require_even(x.size(), "dwt1d input");
  detail::require_long_enough(x.size(), spec, "dwt1d input");
  const std::size_t n = x.size();
  Bands1D out{std::vector<double>(n / 2), std::vector<double>(n / 2)};
  kernel::analyze(x.data(), n, 1, spec.analysis_low, 0, out.low.data(), 1);
  kernel::analyze(x.data(), n, 1, spec.analysis_high, spec.analysis_high_origin, out.high.data(), 1);
  return out;
}

inline std::vector<double> idwt1d(std::span<const double> low, std::span<const double> high,
                                  const WaveletSpec& spec) {
  if (low.size() != high.size()) {
    throw Error(ErrorCode::ShapeMismatch, "idwt1d band lengths differ: " +
                                              std::to_string(low.size()) + " vs " +
                                              std::to_string(high.size()));
  }
  const std::size_t n = 2 * low.size();
  std::vector<double> x(n, 0.0);
  kernel::synthesize_add(low.data(), n, 1, spec.synthesis_low, spec.synthesis_low_origin, x.data(), 1);
  kernel::synthesize_add(high.data(), n, 1, spec.synthesis_high, spec.synthesis_high_origin,
                         x.data(), 1);
  return x;
}

/// L^T g_low + H^T g_high with the analysis filters: the gradient of dwt1d.
/// Coincides with idwt1d only for orthogonal wavelets.
inline std::vector<double> dwt1d_adjoint(std::span<const double> grad_low,
                                         std::span<const double> grad_high,
                                         const WaveletSpec& spec) {
  if (grad_low.size() != grad_high.size()) {
    throw Error(ErrorCode::ShapeMismatch, "dwt1d_adjoint band lengths differ");
  }
  const std::size_t n = 2 * grad_low.size();
  std::vector<double> x(n, 0.0);
  kernel::synthesize_add(grad_low.data(), n, 1, spec.analysis_low, 0, x.data(), 1);
  kernel::synthesize_add(grad_high.data(), n, 1, spec.analysis_high, spec.analysis_high_origin,
                         x.data(), 1);
  return x;
}

inline SubbandSet dwt2d(const Matrix& x, const WaveletSpec& spec) {
  detail::require_even(x.rows, "dwt2d rows");
  detail::require_even(x.cols, "dwt2d cols");
  detail::require_long_enough(x.rows, spec, "dwt2d rows");
  detail::require_long_enough(x.cols, spec, "dwt2d cols");
  const std::size_t hr = x.rows / 2, hc = x.cols / 2;
  const auto hc_stride = static_cast<std::ptrdiff_t>(hc);

  // Horizontal pass: every row splits into low/high halves.
  Matrix row_low(x.rows, hc), row_high(x.rows, hc);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* row = x.values.data() + r * x.cols;
    kernel::analyze(row, x.cols, 1, spec.analysis_low, 0, row_low.values.data() + r * hc, 1);
    kernel::analyze(row, x.cols, 1, spec.analysis_high, spec.analysis_high_origin,
                    row_high.values.data() + r * hc, 1);
  }

  SubbandSet s{Matrix(hr, hc), Matrix(hr, hc), Matrix(hr, hc), Matrix(hr, hc)};
  for (std::size_t c = 0; c < hc; ++c) {
    kernel::analyze(row_low.values.data() + c, x.rows, hc_stride, spec.analysis_low, 0,
                    s.ll.values.data() + c, hc_stride);
    kernel::analyze(row_low.values.data() + c, x.rows, hc_stride, spec.analysis_high,
                    spec.analysis_high_origin, s.lh.values.data() + c, hc_stride);
    kernel::analyze(row_high.values.data() + c, x.rows, hc_stride, spec.analysis_low, 0,
                    s.hl.values.data() + c, hc_stride);
    kernel::analyze(row_high.values.data() + c, x.rows, hc_stride, spec.analysis_high,
                    spec.analysis_high_origin, s.hh.values.data() + c, hc_stride);
  }
  return s;
}

inline Matrix idwt2d(const SubbandSet& s, const WaveletSpec& spec) {
  const std::size_t hr = s.ll.rows, hc = s.ll.cols;
  for (const Matrix* band : {&s.lh, &s.hl, &s.hh}) {
    if (band->rows != hr || band->cols != hc) {
      throw Error(ErrorCode::ShapeMismatch, "idwt2d subbands must share one shape");
    }
  }
  const std::size_t rows = 2 * hr, cols = 2 * hc;
  const auto hc_stride = static_cast<std::ptrdiff_t>(hc);

  // Vertical synthesis back to full height, still split horizontally.
  Matrix row_low(rows, hc), row_high(rows, hc);
  for (std::size_t c = 0; c < hc; ++c) {
    kernel::synthesize_add(s.ll.values.data() + c, rows, hc_stride, spec.synthesis_low,
                           spec.synthesis_low_origin, row_low.values.data() + c, hc_stride);
    kernel::synthesize_add(s.lh.values.data() + c, rows, hc_stride, spec.synthesis_high,
                           spec.synthesis_high_origin, row_low.values.data() + c, hc_stride);
    kernel::synthesize_add(s.hl.values.data() + c, rows, hc_stride, spec.synthesis_low,
                           spec.synthesis_low_origin, row_high.values.data() + c, hc_stride);
    kernel::synthesize_add(s.hh.values.data() + c, rows, hc_stride, spec.synthesis_high,
                           spec.synthesis_high_origin, row_high.values.data() + c, hc_stride);
  }
  Matrix x(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = x.values.data() + r * cols;
    kernel::synthesize_add(row_low.values.data() + r * hc, cols, 1, spec.synthesis_low,
                           spec.synthesis_low_origin, row, 1);
    kernel::synthesize_add(row_high.values.data() + r * hc, cols, 1, spec.synthesis_high,
                           spec.synthesis_high_origin, row, 1);
  }
  return x;
}

/// Full-resolution image rebuilt from the LL subband alone.
inline Matrix reconstruct_lowpass(const Matrix& x, const WaveletSpec& spec) {
  SubbandSet s = dwt2d(x, spec);
  const std::size_t hr = s.ll.rows, hc = s.ll.cols;
  s.lh = Matrix(hr, hc);
  s.hl = Matrix(hr, hc);
  s.hh = Matrix(hr, hc);
  return idwt2d(s, spec);
}

/// Sum of squares, handy for energy bookkeeping.
inline double energy(const Matrix& m) {
  double e = 0.0;
  for (double v : m.values) e += v * v;
  return e;
}

inline double energy(std::span<const double> v) {
  double e = 0.0;
  for (double x : v) e += x * x;
  return e;
}

}  // namespace wavepool
