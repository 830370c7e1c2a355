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

#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wavepool/error.hpp"
#include "wavepool/filterbank.hpp"
#include "wavepool/tensor.hpp"
#include "wavepool/transform.hpp"

namespace wavepool {

/// Down-sampling operator selection. StridedConv stands for "no
/// anti-aliasing": a stride-2 convolution where weights exist, plain
/// stride-2 subsampling where they do not.
struct PoolKind {
  enum class Kind { MaxPool2, AvgPool2, StridedConv, BlurPool, WaveletPool };

  Kind kind = Kind::MaxPool2;
  std::vector<double> blur_kernel;  // normalized 1D taps, BlurPool only
  std::optional<WaveletSpec> wavelet;

  static PoolKind max() { return {Kind::MaxPool2, {}, std::nullopt}; }
  static PoolKind avg() { return {Kind::AvgPool2, {}, std::nullopt}; }
  static PoolKind strided() { return {Kind::StridedConv, {}, std::nullopt}; }
  static PoolKind blur(std::vector<double> kernel = {0.25, 0.5, 0.25});
  static PoolKind wavelet_pool(WaveletSpec spec) { return {Kind::WaveletPool, {}, std::move(spec)}; }

  bool anti_aliased() const { return kind == Kind::BlurPool || kind == Kind::WaveletPool; }
};

inline PoolKind PoolKind::blur(std::vector<double> kernel) {
  if (kernel.empty() || kernel.size() % 2 == 0) {
    throw Error(ErrorCode::InvalidConfig, "blur kernel must have odd length");
  }
  double sum = 0.0;
  for (double v : kernel) {
    if (v < 0.0) throw Error(ErrorCode::InvalidConfig, "blur kernel taps must be non-negative");
    sum += v;
  }
  if (!(sum > 0.0)) throw Error(ErrorCode::InvalidConfig, "blur kernel sums to zero");
  for (double& v : kernel) v /= sum;
  return {Kind::BlurPool, std::move(kernel), std::nullopt};
}

/// "max", "avg", "strided", "blur:1-2-1", "wavelet:haar", "wavelet:ch3.3", ...
inline PoolKind parse_pool_kind(std::string_view text) {
  if (text == "max") return PoolKind::max();
  if (text == "avg") return PoolKind::avg();
  if (text == "strided") return PoolKind::strided();
  if (text.starts_with("wavelet:")) return PoolKind::wavelet_pool(parse_wavelet(text.substr(8)));
  if (text.starts_with("blur:")) {
    std::vector<double> taps;
    std::string_view rest = text.substr(5);
    while (!rest.empty()) {
      const auto dash = rest.find('-');
      const auto token = rest.substr(0, dash);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw Error(ErrorCode::InvalidConfig, "bad blur tap '" + std::string(token) + "'");
      }
      taps.push_back(v);
      if (dash == std::string_view::npos) break;
      rest = rest.substr(dash + 1);
    }
    return PoolKind::blur(std::move(taps));
  }
  throw Error(ErrorCode::InvalidConfig, "unknown pool kind '" + std::string(text) + "'");
}

/// Canonical config string. Blur taps are printed rescaled so the smallest
/// positive tap is 1 (1-2-1 stays 1-2-1).
inline std::string to_string(const PoolKind& kind) {
  switch (kind.kind) {
    case PoolKind::Kind::MaxPool2: return "max";
    case PoolKind::Kind::AvgPool2: return "avg";
    case PoolKind::Kind::StridedConv: return "strided";
    case PoolKind::Kind::WaveletPool: return "wavelet:" + kind.wavelet->name;
    case PoolKind::Kind::BlurPool: {
      double smallest = 0.0;
      for (double v : kind.blur_kernel) {
        if (v > 0.0 && (smallest == 0.0 || v < smallest)) smallest = v;
      }
      std::string s = "blur:";
      for (std::size_t i = 0; i < kind.blur_kernel.size(); ++i) {
        if (i) s += "-";
        const double scaled = kind.blur_kernel[i] / smallest;
        const double rounded = std::round(scaled);
        if (std::abs(scaled - rounded) < 1e-9) {
          s += std::to_string(static_cast<long long>(rounded));
        } else {
          char buf[32];
          auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), scaled);
          s.append(buf, ptr);
        }
      }
      return s;
    }
  }
  return "?";
}

namespace detail {

inline void require_even_spatial(const Tensor& x, const char* op) {
  require(x.rank() == 4, std::string(op) + ": expects NCHW input");
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw Error(ErrorCode::OddLengthInput,
                std::string(op) + ": spatial dims must be even, got " + shape_string(x.shape()));
  }
}

// PyTorch-style reflection (edge sample not repeated).
inline std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  if (m == 1) return 0;
  const std::ptrdiff_t period = 2 * (m - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < m ? i : period - i);
}

}  // namespace detail

/// Keeps the LL subband of every channel plane: N x C x H x W -> N x C x H/2 x W/2.
/// The backward pass is the exact adjoint L^T G L with the analysis filter.
/// Periodic indexing also covers planes shorter than the filter.
inline Tensor wavelet_pool(const Tensor& x, const WaveletSpec& spec) {
  detail::require_even_spatial(x, "wavelet_pool");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t in_plane = h * w, out_plane = in_plane / 4;
  std::vector<double> out(planes * out_plane);
  std::vector<double> scratch;
  for (std::size_t p = 0; p < planes; ++p) {
    kernel::lowpass_plane(x.values().data() + p * in_plane, h, w, spec.analysis_low,
                          out.data() + p * out_plane, scratch);
  }
  auto px = x.node();
  return detail::make_result(
      {x.dim(0), x.dim(1), h / 2, w / 2}, std::move(out), {x},
      [px, taps = spec.analysis_low, planes, h, w, in_plane, out_plane](Node& self) {
        auto& g = px->grad_buffer();
        std::vector<double> scratch;
        for (std::size_t p = 0; p < planes; ++p) {
          kernel::lowpass_plane_adjoint(self.grad.data() + p * out_plane, h, w, taps,
                                        g.data() + p * in_plane, scratch);
        }
      });
}

/// 2x2 window, stride 2. Ties route the gradient to the first index in
/// row-major window order.
inline Tensor max_pool2(const Tensor& x) {
  detail::require_even_spatial(x, "max_pool2");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<double> out(planes * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.values().data() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (2 * oy) * w + 2 * ox;
        for (std::size_t idx : {(2 * oy) * w + 2 * ox + 1, (2 * oy + 1) * w + 2 * ox,
                                (2 * oy + 1) * w + 2 * ox + 1}) {
          if (src[idx] > src[best]) best = idx;
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = src[best];
        argmax[o] = p * h * w + best;
      }
    }
  }
  auto px = x.node();
  return detail::make_result({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                             [px, argmax = std::move(argmax)](Node& self) {
                               auto& g = px->grad_buffer();
                               for (std::size_t o = 0; o < argmax.size(); ++o) {
                                 g[argmax[o]] += self.grad[o];
                               }
                             });
}

inline Tensor avg_pool2(const Tensor& x) {
  detail::require_even_spatial(x, "avg_pool2");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<double> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.values().data() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double* a = src + (2 * oy) * w + 2 * ox;
        out[(p * oh + oy) * ow + ox] = 0.25 * (a[0] + a[1] + a[w] + a[w + 1]);
      }
    }
  }
  auto px = x.node();
  return detail::make_result({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                             [px, planes, h, w, oh, ow](Node& self) {
                               auto& g = px->grad_buffer();
                               for (std::size_t p = 0; p < planes; ++p) {
                                 double* dst = g.data() + p * h * w;
                                 for (std::size_t oy = 0; oy < oh; ++oy) {
                                   for (std::size_t ox = 0; ox < ow; ++ox) {
                                     const double v = 0.25 * self.grad[(p * oh + oy) * ow + ox];
                                     double* a = dst + (2 * oy) * w + 2 * ox;
                                     a[0] += v;
                                     a[1] += v;
                                     a[w] += v;
                                     a[w + 1] += v;
                                   }
                                 }
                               }
                             });
}

/// x[..., 2i, 2j]: stride-2 sampling with no filtering at all.
inline Tensor subsample2(const Tensor& x) {
  detail::require_even_spatial(x, "subsample2");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<double> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        out[(p * oh + oy) * ow + ox] = x[p * h * w + 2 * oy * w + 2 * ox];
      }
    }
  }
  auto px = x.node();
  return detail::make_result({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                             [px, planes, h, w, oh, ow](Node& self) {
                               auto& g = px->grad_buffer();
                               for (std::size_t p = 0; p < planes; ++p) {
                                 for (std::size_t oy = 0; oy < oh; ++oy) {
                                   for (std::size_t ox = 0; ox < ow; ++ox) {
                                     g[p * h * w + 2 * oy * w + 2 * ox] +=
                                         self.grad[(p * oh + oy) * ow + ox];
                                   }
                                 }
                               }
                             });
}

/// Depthwise separable blur with reflect padding, evaluated at even pixels only.
inline Tensor blur_pool(const Tensor& x, std::span<const double> kernel) {
  detail::require_even_spatial(x, "blur_pool");
  if (kernel.empty() || kernel.size() % 2 == 0) {
    throw Error(ErrorCode::InvalidConfig, "blur_pool: kernel must have odd length");
  }
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  std::vector<double> taps(kernel.begin(), kernel.end());

  // Row blur at even rows, then column blur at even columns; the two index
  // tables make the reflected taps explicit for forward and backward alike.
  std::vector<std::size_t> row_idx(oh * taps.size()), col_idx(ow * taps.size());
  for (std::size_t o = 0; o < oh; ++o) {
    for (std::size_t t = 0; t < taps.size(); ++t) {
      row_idx[o * taps.size() + t] = detail::reflect(
          static_cast<std::ptrdiff_t>(2 * o + t) - radius, h);
    }
  }
  for (std::size_t o = 0; o < ow; ++o) {
    for (std::size_t t = 0; t < taps.size(); ++t) {
      col_idx[o * taps.size() + t] = detail::reflect(
          static_cast<std::ptrdiff_t>(2 * o + t) - radius, w);
    }
  }

  std::vector<double> out(planes * oh * ow);
  std::vector<double> tmp(oh * w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.values().data() + p * h * w;
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t t = 0; t < taps.size(); ++t) {
        const double* row = src + row_idx[oy * taps.size() + t] * w;
        for (std::size_t c = 0; c < w; ++c) tmp[oy * w + c] += taps[t] * row[c];
      }
    }
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t t = 0; t < taps.size(); ++t) {
          acc += taps[t] * tmp[oy * w + col_idx[ox * taps.size() + t]];
        }
        out[(p * oh + oy) * ow + ox] = acc;
      }
    }
  }
  auto px = x.node();
  return detail::make_result(
      {x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
      [px, taps, row_idx, col_idx, planes, h, w, oh, ow](Node& self) {
        auto& g = px->grad_buffer();
        std::vector<double> tmp(oh * w);
        for (std::size_t p = 0; p < planes; ++p) {
          std::fill(tmp.begin(), tmp.end(), 0.0);
          for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const double v = self.grad[(p * oh + oy) * ow + ox];
              for (std::size_t t = 0; t < taps.size(); ++t) {
                tmp[oy * w + col_idx[ox * taps.size() + t]] += taps[t] * v;
              }
            }
          }
          double* dst = g.data() + p * h * w;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t t = 0; t < taps.size(); ++t) {
              double* row = dst + row_idx[oy * taps.size() + t] * w;
              for (std::size_t c = 0; c < w; ++c) row[c] += taps[t] * tmp[oy * w + c];
            }
          }
        }
      });
}

/// Applies the parameter-free half of a down-sampling site.
inline Tensor pool(const Tensor& x, const PoolKind& kind) {
  switch (kind.kind) {
    case PoolKind::Kind::MaxPool2: return max_pool2(x);
    case PoolKind::Kind::AvgPool2: return avg_pool2(x);
    case PoolKind::Kind::StridedConv: return subsample2(x);
    case PoolKind::Kind::BlurPool: return blur_pool(x, kind.blur_kernel);
    case PoolKind::Kind::WaveletPool: return wavelet_pool(x, *kind.wavelet);
  }
  throw Error(ErrorCode::InvalidConfig, "unhandled pool kind");
}

enum class ComposeOrder { ConvThenPool, PoolThenConv };

/// A down-sampling site after the replacement rules:
///   MaxPool_{s=2} -> pool
///   Conv_{s=2}    -> Conv_{s=1} followed by pool
/// With pool == StridedConv the site is left as the original stride-2 op.
struct DownsampleOp {
  PoolKind pool;
  std::optional<Tensor> conv_weight;  // O x C x k x k, present for conv sites
  ComposeOrder order = ComposeOrder::ConvThenPool;

  Tensor operator()(const Tensor& x) const {
    if (!conv_weight) {
      return pool.kind == PoolKind::Kind::StridedConv ? subsample2(x) : wavepool::pool(x, pool);
    }
    if (pool.kind == PoolKind::Kind::StridedConv) return conv2d(x, *conv_weight, 2, Padding::Same);
    if (order == ComposeOrder::PoolThenConv) {
      return conv2d(wavepool::pool(x, pool), *conv_weight, 1, Padding::Same);
    }
    return wavepool::pool(conv2d(x, *conv_weight, 1, Padding::Same), pool);
  }

  std::size_t parameter_count() const { return conv_weight ? conv_weight->numel() : 0; }
};

/// Rewrites one down-sampling site. `site` is the original operator
/// (MaxPool2 or StridedConv); conv weights must be given exactly for
/// strided-convolution sites.
inline DownsampleOp apply_replacement(PoolKind::Kind site, const PoolKind& replacement,
                                      std::optional<Tensor> conv_weights = std::nullopt) {
  const bool conv_site = site == PoolKind::Kind::StridedConv;
  if (site != PoolKind::Kind::MaxPool2 && !conv_site) {
    throw Error(ErrorCode::InvalidConfig, "replacement sites are max-pooling or strided conv");
  }
  if (conv_site != conv_weights.has_value()) {
    throw Error(ErrorCode::ShapeMismatch, conv_site
                                              ? "strided-conv site needs its conv weights"
                                              : "max-pool site takes no conv weights");
  }
  DownsampleOp op{replacement, std::move(conv_weights), ComposeOrder::ConvThenPool};
  if (!conv_site && replacement.kind == PoolKind::Kind::StridedConv) op.pool = PoolKind::max();
  return op;
}

}  // namespace wavepool
