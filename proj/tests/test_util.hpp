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

// Shared oracles for the unit suites: seeded random fills, a central
// finite-difference gradient checker and a dense-matrix filter bank.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "wavepool/filterbank.hpp"
#include "wavepool/rng.hpp"
#include "wavepool/tensor.hpp"
#include "wavepool/transform.hpp"

namespace wavepool::testing {

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.values) x = rng.uniform(-1.0, 1.0);
  return m;
}

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
  Tensor t(std::move(shape), 0.0, requires_grad);
  for (double& x : t.values()) x = rng.uniform(-1.0, 1.0);
  return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Dense (n/2) x n analysis operator built straight from the definition
/// row[m] has taps[i] at column (2m + i + origin) mod n.
inline Matrix dense_operator(const std::vector<double>& taps, int origin, std::size_t n) {
  Matrix op(n / 2, n);
  for (std::size_t m = 0; m < n / 2; ++m) {
    for (std::size_t i = 0; i < taps.size(); ++i) {
      const long col = ((static_cast<long>(2 * m + i) + origin) % static_cast<long>(n) +
                        static_cast<long>(n)) % static_cast<long>(n);
      op(m, static_cast<std::size_t>(col)) += taps[i];
    }
  }
  return op;
}

/// max |Ls^T L + Hs^T H - I| for an n-point periodic bank.
inline double dense_reconstruction_error(const WaveletSpec& s, std::size_t n) {
  const Matrix l = dense_operator(s.analysis_low, 0, n);
  const Matrix h = dense_operator(s.analysis_high, s.analysis_high_origin, n);
  const Matrix ls = dense_operator(s.synthesis_low, s.synthesis_low_origin, n);
  const Matrix hs = dense_operator(s.synthesis_high, s.synthesis_high_origin, n);
  double worst = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      double acc = 0.0;
      for (std::size_t m = 0; m < n / 2; ++m) acc += ls(m, r) * l(m, c) + hs(m, r) * h(m, c);
      worst = std::max(worst, std::abs(acc - (r == c ? 1.0 : 0.0)));
    }
  }
  return worst;
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// Compares the tape gradient of scalar f with respect to `input` against
/// central differences at `samples` random coordinates. Relative error uses
/// max(|analytic|, |numeric|, 1e-8) as the denominator.
inline GradCheckResult gradient_check(const std::function<Tensor()>& f, Tensor input,
                                      std::size_t samples, Rng& rng, double eps = 1e-5) {
  input.zero_grad();
  Tensor out = f();
  backward(out);
  std::vector<double> analytic(input.grad().begin(), input.grad().end());

  GradCheckResult result;
  auto values = input.values();
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t i = rng.below(values.size());
    const double saved = values[i];
    double plus = 0.0, minus = 0.0;
    {
      NoGradGuard guard;
      values[i] = saved + eps;
      plus = f().item();
      values[i] = saved - eps;
      minus = f().item();
      values[i] = saved;
    }
    const double numeric = (plus - minus) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    result.max_relative_error =
        std::max(result.max_relative_error, std::abs(analytic[i] - numeric) / denom);
    ++result.coordinates;
  }
  return result;
}

/// Weighted sum <f(x), w>: turns any op into a scalar for gradient checks.
inline Tensor weighted_sum(const Tensor& y, const std::vector<double>& weights) {
  Tensor w(y.shape(), weights);
  std::vector<double> out{dot(y.values(), weights)};
  auto py = y.node();
  return detail::make_result({1}, std::move(out), {y}, [py, weights](Node& self) {
    auto& g = py->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * weights[i];
  });
}

}  // namespace wavepool::testing
