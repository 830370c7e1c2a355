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

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "wavepool/backbone.hpp"
#include "wavepool/metrics.hpp"
#include "wavepool/pooling.hpp"
#include "wavepool/transform.hpp"

namespace wavepool {

struct ComplexMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::complex<double>> values;

  std::complex<double> operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

inline constexpr std::size_t kMaxDftSide = 512;

/// X[u, v] = sum_{r, c} x[r, c] exp(-2 pi i (u r / R + v c / C)), evaluated
/// directly (row transforms, then column transforms).
inline ComplexMatrix dft2(const Matrix& x) {
  if (x.rows > kMaxDftSide || x.cols > kMaxDftSide) {
    throw Error(ErrorCode::InputTooLarge, "dft2 supports at most 512 x 512, got " + std::to_string(x.rows) + " x " +
                                              std::to_string(x.cols));
  }
  auto twiddles = [](std::size_t n) {
    std::vector<std::complex<double>> t(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      t[k] = {std::cos(a), std::sin(a)};
    }
    return t;
  };
  const std::size_t R = x.rows, C = x.cols;
  const auto tr = twiddles(R), tc = twiddles(C);
  std::vector<std::complex<double>> rowwise(R * C);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t v = 0; v < C; ++v) {
      std::complex<double> acc{};
      for (std::size_t c = 0; c < C; ++c) acc += x(r, c) * tc[(v * c) % C];
      rowwise[r * C + v] = acc;
    }
  }
  ComplexMatrix out{R, C, std::vector<std::complex<double>>(R * C)};
  for (std::size_t u = 0; u < R; ++u) {
    for (std::size_t v = 0; v < C; ++v) {
      std::complex<double> acc{};
      for (std::size_t r = 0; r < R; ++r) acc += rowwise[r * C + v] * tr[(u * r) % R];
      out.values[u * C + v] = acc;
    }
  }
  return out;
}

/// Sum |X|^2 / (R C); equals the spatial energy by Parseval.
inline double spectral_energy(const ComplexMatrix& X) {
  double e = 0.0;
  for (const auto& z : X.values) e += std::norm(z);
  return e / static_cast<double>(X.rows * X.cols);
}

/// Fraction of spectral energy with max(|wu|, |wv|) > cutoff (radians).
inline double energy_above(const ComplexMatrix& X, double cutoff) {
  double hi = 0.0, total = 0.0;
  auto freq = [](std::size_t k, std::size_t n) {
    const double f = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    return f > std::numbers::pi ? 2.0 * std::numbers::pi - f : f;
  };
  for (std::size_t u = 0; u < X.rows; ++u) {
    for (std::size_t v = 0; v < X.cols; ++v) {
      const double e = std::norm(X(u, v));
      total += e;
      if (std::max(freq(u, X.rows), freq(v, X.cols)) > cutoff + 1e-12) hi += e;
    }
  }
  return total > 0.0 ? hi / total : 0.0;
}

/// "pi", "3pi/4", "0.75pi", or radians ("2.356").
inline double parse_frequency(const std::string& text) {
  const auto pos = text.find("pi");
  try {
    if (pos == std::string::npos) return std::stod(text);
    const std::string head = text.substr(0, pos), tail = text.substr(pos + 2);
    double v = std::numbers::pi * (head.empty() ? 1.0 : std::stod(head));
    if (!tail.empty()) {
      if (tail[0] != '/') throw std::invalid_argument(text);
      v /= std::stod(tail.substr(1));
    }
    return v;
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::InvalidConfig, "cannot parse frequency '" + text + "'");
  }
}

inline std::string frequency_label(double omega) {
  return MetricsReport::format_double(std::round(omega / std::numbers::pi * 1e6) / 1e6) + "pi";
}

/// Gain of the pooling operator on a constant input.
inline double pool_dc_gain(const PoolKind& pool) {
  if (pool.kind != PoolKind::Kind::WaveletPool) return 1.0;
  double s = 0.0;
  for (double v : pool.wavelet->analysis_low) s += v;
  return s * s;
}

/// Diagonal plane wave cos(w (r + c)) on an n x n grid.
inline Matrix plane_wave(double omega, std::size_t n) {
  Matrix m(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) m(r, c) = std::cos(omega * static_cast<double>(r + c));
  }
  return m;
}

/// For each frequency: mean output power over mean input power of the DC
/// normalized pooled plane wave, and the share of output energy found at
/// the frequency 2w folded back into [-pi, pi].
inline MetricsReport alias_energy_sweep(const PoolKind& pool, const std::vector<double>& freqs, std::size_t n = 64) {
  MetricsReport report;
  report.name = "alias";
  const double gain = pool_dc_gain(pool);
  const std::size_t m = n / 2;
  for (double omega : freqs) {
    if (!(omega > 0.0 && omega <= std::numbers::pi + 1e-12)) {
      throw Error(ErrorCode::InvalidConfig, "alias sweep frequency must lie in (0, pi]");
    }
    const Matrix wave = plane_wave(omega, n);
    Tensor input({1, 1, n, n}, wave.values);
    const Tensor pooled = pool.kind == PoolKind::Kind::StridedConv ? subsample2(input) : wavepool::pool(input, pool);
    Matrix out(m, m);
    for (std::size_t i = 0; i < m * m; ++i) out.values[i] = pooled[i] / gain;

    const double in_power = energy(wave) / static_cast<double>(n * n);
    const double out_power = energy(out) / static_cast<double>(m * m);
    double folded = std::remainder(2.0 * omega, 2.0 * std::numbers::pi);
    const auto k = static_cast<std::size_t>(std::lround(std::abs(folded) * static_cast<double>(m) /
                                                        (2.0 * std::numbers::pi))) % m;
    const ComplexMatrix X = dft2(out);
    double at_alias = std::norm(X(k, k));
    if (k != (m - k) % m) at_alias += std::norm(X((m - k) % m, (m - k) % m));
    double total = 0.0;
    for (const auto& z : X.values) total += std::norm(z);

    const std::string label = "alias." + frequency_label(omega);
    report.add(label + ".energy_ratio", in_power > 0.0 ? out_power / in_power : 0.0, "ratio");
    const bool silent = !(out_power > 1e-24 * in_power);
    report.add(label + ".folded_fraction", silent ? 0.0 : at_alias / total, "fraction");
    report.add(label + ".folded_frequency", std::abs(folded), "rad");
  }
  return report;
}

/// Circular translation of every plane by (dy, dx).
inline Tensor circular_shift(const Tensor& x, std::size_t dy, std::size_t dx) {
  const std::size_t h = x.dim(2), w = x.dim(3), planes = x.dim(0) * x.dim(1);
  Tensor out(x.shape());
  const auto in = x.values();
  auto o = out.values();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        o[(p * h + (i + dy) % h) * w + (j + dx) % w] = in[(p * h + i) * w + j];
      }
    }
  }
  return out;
}

struct ShiftOptions {
  std::size_t max_shift = 4;
  std::size_t step = 1;  // shifts are step, 2 step, ..., <= max_shift on each axis
  std::size_t batch = 64;
};

/// Cosine similarity; two zero vectors count as identical.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 && bb == 0.0) return 1.0;
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Mean argmax agreement and logit cosine similarity between each image and
/// its circular shifts, in evaluation mode.
inline MetricsReport shift_consistency(Network& model, const Tensor& images, const ShiftOptions& opt = {}) {
  if (opt.step == 0 || opt.max_shift < opt.step) {
    throw Error(ErrorCode::InvalidConfig, "shift_consistency needs 1 <= step <= max_shift");
  }
  NoGradGuard no_grad;
  const std::size_t n = images.dim(0), per = images.numel() / n;
  std::vector<std::size_t> shifts;
  for (std::size_t s = opt.step; s <= opt.max_shift; s += opt.step) shifts.push_back(s);

  double agree = 0.0, cosine = 0.0;
  std::size_t pairs = 0;
  for (std::size_t b0 = 0; b0 < n; b0 += opt.batch) {
    const std::size_t nb = std::min(opt.batch, n - b0);
    Tensor batch({nb, images.dim(1), images.dim(2), images.dim(3)});
    std::copy_n(images.values().begin() + static_cast<std::ptrdiff_t>(b0 * per), nb * per, batch.values().begin());
    const Tensor base = model.forward(batch, false);
    const std::size_t k = base.dim(1);
    for (std::size_t dy : shifts) {
      for (std::size_t dx : shifts) {
        const Tensor shifted = model.forward(circular_shift(batch, dy, dx), false);
        for (std::size_t i = 0; i < nb; ++i) {
          const auto a = base.values().subspan(i * k, k), c = shifted.values().subspan(i * k, k);
          agree += argmax(a) == argmax(c) ? 1.0 : 0.0;
          cosine += cosine_similarity(a, c);
          ++pairs;
        }
      }
    }
  }
  MetricsReport report;
  report.name = "consistency";
  report.add("shift_consistency.agreement", agree / static_cast<double>(pairs), "fraction");
  report.add("shift_consistency.cosine", cosine / static_cast<double>(pairs), "cosine");
  report.add("shift_consistency.pairs", static_cast<double>(pairs), "count");
  report.add("shift_consistency.max_shift", static_cast<double>(opt.max_shift), "px");
  return report;
}

}  // namespace wavepool
