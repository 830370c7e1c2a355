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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "wavepool/error.hpp"

namespace wavepool {

enum class WaveletFamily { Orthogonal, Biorthogonal };

/// Analysis/synthesis filter bank of one wavelet.
///
/// Taps are used in correlation form: the analysis low band of x is
/// low[m] = sum_i analysis_low[i] * x[2m + i + origin], indices periodic.
/// The analysis low-pass always starts at origin 0; the remaining origins
/// record where the (possibly shorter) companion filters sit relative to it.
/// For orthogonal wavelets every origin is 0 and synthesis == analysis.
struct WaveletSpec {
  std::string name;
  std::vector<double> analysis_low;
  std::vector<double> analysis_high;
  std::vector<double> synthesis_low;
  std::vector<double> synthesis_high;
  WaveletFamily family = WaveletFamily::Orthogonal;

  int analysis_high_origin = 0;
  int synthesis_low_origin = 0;
  int synthesis_high_origin = 0;

  std::size_t max_analysis_length() const {
    return std::max(analysis_low.size(), analysis_high.size());
  }
  std::size_t max_length() const {
    return std::max({analysis_low.size(), analysis_high.size(), synthesis_low.size(),
                     synthesis_high.size()});
  }
};

namespace detail {

// h[n] = (-1)^n * l[L-1-n]
inline std::vector<double> quadrature_mirror(const std::vector<double>& low) {
  const std::size_t len = low.size();
  std::vector<double> high(len);
  for (std::size_t n = 0; n < len; ++n) {
    high[n] = (n % 2 == 0 ? 1.0 : -1.0) * low[len - 1 - n];
  }
  return high;
}

inline WaveletSpec orthogonal(std::string name, std::vector<double> low) {
  WaveletSpec spec;
  spec.name = std::move(name);
  spec.analysis_high = quadrature_mirror(low);
  spec.analysis_low = std::move(low);
  spec.synthesis_low = spec.analysis_low;
  spec.synthesis_high = spec.analysis_high;
  spec.family = WaveletFamily::Orthogonal;
  return spec;
}

}  // namespace detail

inline WaveletSpec make_haar() {
  const double a = std::numbers::sqrt2 / 2.0;
  return detail::orthogonal("haar", {a, a});
}

/// Orthonormal Daubechies filters of length 2k, 1 <= k <= 4.
inline WaveletSpec make_daubechies(int k) {
  switch (k) {
    case 1: return make_haar();
    case 2:
      return detail::orthogonal(
          "db2", {0.48296291314453416, 0.8365163037378079, 0.2241438680420134,
                  -0.12940952255126037});
    case 3:
      return detail::orthogonal(
          "db3", {0.33267055295008263, 0.8068915093110925, 0.45987750211849154,
                  -0.13501102001025458, -0.08544127388202666, 0.03522629188570953});
    case 4:
      return detail::orthogonal(
          "db4", {0.2303778133088965, 0.7148465705529157, 0.6308807679298589,
                  -0.027983769416859854, -0.18703481171909309, 0.030841381835560764,
                  0.0328830116668852, -0.010597401785069032});
    default:
      throw Error(ErrorCode::UnsupportedWavelet,
                  "Daubechies order must be in [1, 4], got " + std::to_string(k));
  }
}

/// Cohen-Daubechies-Feauveau biorthogonal pairs, indexed as in the common
/// bior k.k~ tables. The shorter low-pass is always the synthesis filter.
/// Odd-length CDF filters carry one trailing zero tap to keep lengths even.
inline WaveletSpec make_cohen(int k, int k_dual) {
  if (k == 1 && k_dual == 1) return make_haar();
  WaveletSpec spec;
  spec.family = WaveletFamily::Biorthogonal;
  if (k == 3 && k_dual == 3) {
    spec.name = "ch3.3";
    spec.analysis_low = {0.06629126073623882, -0.1988737822087165, -0.15467960838455727,
                         0.9943689110435825,  0.9943689110435825,  -0.15467960838455727,
                         -0.1988737822087165, 0.06629126073623882};
    spec.analysis_high = {0.1767766952966369, -0.5303300858899106, 0.5303300858899106,
                          -0.1767766952966369};
    spec.synthesis_low = {0.1767766952966369, 0.5303300858899106, 0.5303300858899106,
                          0.1767766952966369};
    spec.synthesis_high = {0.06629126073623882, 0.1988737822087165, -0.15467960838455727,
                           -0.9943689110435825, 0.9943689110435825,  0.15467960838455727,
                           -0.1988737822087165, -0.06629126073623882};
    spec.analysis_high_origin = 0;
    spec.synthesis_low_origin = 2;
    spec.synthesis_high_origin = -2;
    return spec;
  }
  if (k == 5 && k_dual == 5) {
    spec.name = "ch5.5";
    spec.analysis_low = {0.013456709459118716, -0.002694966880111507, -0.13670658466432914,
                         -0.09350469740093886, 0.47680326579848425,   0.8995061097486484,
                         0.47680326579848425,  -0.09350469740093886,  -0.13670658466432914,
                         -0.002694966880111507, 0.013456709459118716, 0.0};
    spec.analysis_high = {0.03968708834740544, -0.007948108637240322, -0.05446378846823691,
                          -0.34560528195603346, 0.7366601814282105,   -0.34560528195603346,
                          -0.05446378846823691, -0.007948108637240322, 0.03968708834740544,
                          0.0};
    spec.synthesis_low = {0.03968708834740544, 0.007948108637240322, -0.05446378846823691,
                          0.34560528195603346, 0.7366601814282105,   0.34560528195603346,
                          -0.05446378846823691, 0.007948108637240322, 0.03968708834740544,
                          0.0};
    spec.synthesis_high = {-0.013456709459118716, -0.002694966880111507, 0.13670658466432914,
                           -0.09350469740093886,  -0.47680326579848425,  0.8995061097486484,
                           -0.47680326579848425,  -0.09350469740093886,  0.13670658466432914,
                           -0.002694966880111507, -0.013456709459118716, 0.0};
    spec.analysis_high_origin = 0;
    spec.synthesis_low_origin = 1;
    spec.synthesis_high_origin = -1;
    return spec;
  }
  throw Error(ErrorCode::UnsupportedWavelet, "Cohen pair (" + std::to_string(k) + "," +
                                                 std::to_string(k_dual) +
                                                 ") is not shipped; use (1,1), (3,3) or (5,5)");
}

/// Maximum violation of each perfect-reconstruction condition over all
/// even shifts.
struct ResidualReport {
  double low_low = 0.0;    // sum_n l[n] l~[n-2m] = delta_m
  double high_high = 0.0;  // sum_n h[n] h~[n-2m] = delta_m
  double low_high = 0.0;   // sum_n l[n] h~[n-2m] = 0
  double high_low = 0.0;   // sum_n h[n] l~[n-2m] = 0

  double max() const { return std::max({low_low, high_high, low_high, high_low}); }
};

namespace detail {

inline double max_violation(const std::vector<double>& a, int a_origin,
                            const std::vector<double>& s, int s_origin, bool expect_delta) {
  // Tap i of a sits at position a_origin + i; tap j of s at s_origin + j + 2m.
  const int a_len = static_cast<int>(a.size());
  const int s_len = static_cast<int>(s.size());
  const int lo = (a_origin - (s_origin + s_len - 1)) / 2 - 1;
  const int hi = (a_origin + a_len - 1 - s_origin) / 2 + 1;
  double worst = 0.0;
  for (int m = lo; m <= hi; ++m) {
    double acc = 0.0;
    for (int i = 0; i < a_len; ++i) {
      const int j = a_origin + i - s_origin - 2 * m;
      if (j >= 0 && j < s_len) acc += a[i] * s[j];
    }
    const double target = (expect_delta && m == 0) ? 1.0 : 0.0;
    worst = std::max(worst, std::abs(acc - target));
  }
  return worst;
}

}  // namespace detail

inline ResidualReport check_biorthogonality(const WaveletSpec& spec) {
  ResidualReport r;
  r.low_low = detail::max_violation(spec.analysis_low, 0, spec.synthesis_low,
                                    spec.synthesis_low_origin, true);
  r.high_high = detail::max_violation(spec.analysis_high, spec.analysis_high_origin,
                                      spec.synthesis_high, spec.synthesis_high_origin, true);
  r.low_high = detail::max_violation(spec.analysis_low, 0, spec.synthesis_high,
                                     spec.synthesis_high_origin, false);
  r.high_low = detail::max_violation(spec.analysis_high, spec.analysis_high_origin,
                                     spec.synthesis_low, spec.synthesis_low_origin, false);
  return r;
}

/// Parses "haar", "db{k}" or "ch{k}.{k~}".
inline WaveletSpec parse_wavelet(std::string_view name) {
  auto parse_int = [&](std::string_view digits) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty()) {
      throw Error(ErrorCode::UnsupportedWavelet, "cannot parse wavelet '" + std::string(name) + "'");
    }
    return value;
  };
  if (name == "haar") return make_haar();
  if (name.starts_with("db")) return make_daubechies(parse_int(name.substr(2)));
  if (name.starts_with("ch")) {
    const auto body = name.substr(2);
    const auto dot = body.find('.');
    if (dot == std::string_view::npos) {
      throw Error(ErrorCode::UnsupportedWavelet, "expected ch{k}.{k~}, got '" + std::string(name) + "'");
    }
    return make_cohen(parse_int(body.substr(0, dot)), parse_int(body.substr(dot + 1)));
  }
  throw Error(ErrorCode::UnsupportedWavelet, "unknown wavelet '" + std::string(name) + "'");
}

/// Every wavelet the library ships.
inline std::vector<WaveletSpec> shipped_wavelets() {
  return {make_haar(),        make_daubechies(2), make_daubechies(3),
          make_daubechies(4), make_cohen(3, 3),   make_cohen(5, 5)};
}

}  // namespace wavepool
