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

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "wavepool/error.hpp"

namespace wavepool {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Tape node. Each node owns its value, its lazily allocated gradient and a
/// closure that pushes its gradient into its parents.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

/// Handle to a tape node; copies share storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->value.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    if (values.size() != shape_numel(shape)) {
      throw Error(ErrorCode::ShapeMismatch, std::to_string(values.size()) +
                                                " values do not fill shape " + shape_string(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<double> values() { return node_->value; }
  std::span<const double> values() const { return node_->value; }
  double& operator[](std::size_t i) { return node_->value[i]; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const {
    if (numel() != 1) throw Error(ErrorCode::ShapeMismatch, "item() on non-scalar tensor");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  /// Fresh leaf with copied values and no history.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

/// Creates an op output. The backward closure is recorded only when some
/// input requires a gradient and recording is enabled.
inline Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_mode()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    for (auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

inline void require(bool cond, const std::string& message) {
  if (!cond) throw Error(ErrorCode::ShapeMismatch, message);
}

}  // namespace detail

/// Disables tape recording for its lifetime (evaluation passes).
class NoGradGuard {
 public:
  NoGradGuard() : saved_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

/// Reverse-mode sweep from `root`, seeded with `seed` (ones when empty).
/// Gradients accumulate into every reachable node that requires them.
inline void backward(const Tensor& root, std::span<const double> seed = {}) {
  if (!root.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  auto& g = root.node()->grad_buffer();
  if (seed.empty()) {
    for (double& v : g) v += 1.0;
  } else {
    detail::require(seed.size() == g.size(), "backward seed shape mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require(a.shape() == b.shape(), "add: shapes " + shape_string(a.shape()) + " and " +
                                              shape_string(b.shape()) + " differ");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_result(a.shape(), std::move(out), {a, b}, [pa, pb](Node& self) {
    for (Node* p : {pa.get(), pb.get()}) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  auto px = x.node();
  return detail::make_result(x.shape(), std::move(out), {x}, [px](Node& self) {
    auto& g = px->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (px->value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

inline Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  auto px = x.node();
  return detail::make_result(x.shape(), std::move(out), {x}, [px, factor](Node& self) {
    auto& g = px->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

/// Fixed per-channel affine y = x * mul[c] + add[c] on N x C x H x W.
inline Tensor channel_affine(const Tensor& x, std::span<const double> mul,
                             std::span<const double> shift) {
  detail::require(x.rank() == 4 && mul.size() == x.dim(1) && shift.size() == x.dim(1),
                  "channel_affine: expects NCHW input and one factor per channel");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  std::vector<double> out(x.numel());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) out[off + i] = x[off + i] * mul[ch] + shift[ch];
    }
  }
  auto px = x.node();
  std::vector<double> m(mul.begin(), mul.end());
  return detail::make_result(x.shape(), std::move(out), {x}, [px, m, n, c, plane](Node& self) {
    auto& g = px->grad_buffer();
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t off = (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) g[off + i] += m[ch] * self.grad[off + i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution

/// Same pads with zeros; Circular wraps around (periodic images).
enum class Padding { Same, Valid, Circular };

struct Conv2dGeometry {
  std::size_t batch, in_ch, in_h, in_w;
  std::size_t out_ch, kernel, stride, pad;
  std::size_t out_h, out_w;
  bool circular;

  std::size_t patch() const { return in_ch * kernel * kernel; }
  std::size_t out_plane() const { return out_h * out_w; }
};

inline Conv2dGeometry conv2d_geometry(const Shape& x, const Shape& w, std::size_t stride,
                                      Padding padding) {
  detail::require(x.size() == 4 && w.size() == 4, "conv2d: expects NCHW input and OIHW weight");
  detail::require(w[2] == w[3], "conv2d: only square kernels are supported");
  detail::require(x[1] == w[1], "conv2d: input has " + std::to_string(x[1]) +
                                    " channels, weight expects " + std::to_string(w[1]));
  detail::require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
  if (stride == 2 && (x[2] % 2 != 0 || x[3] % 2 != 0)) {
    throw Error(ErrorCode::OddLengthInput, "conv2d: stride 2 requires even spatial dims, got " +
                                               shape_string(x));
  }
  Conv2dGeometry g{};
  g.batch = x[0];
  g.in_ch = x[1];
  g.in_h = x[2];
  g.in_w = x[3];
  g.out_ch = w[0];
  g.kernel = w[2];
  g.stride = stride;
  g.pad = padding == Padding::Valid ? 0 : g.kernel / 2;
  g.circular = padding == Padding::Circular;
  detail::require(!g.circular || (g.pad <= g.in_h && g.pad <= g.in_w),
                  "conv2d: circular padding wider than the input");
  detail::require(g.in_h + 2 * g.pad >= g.kernel && g.in_w + 2 * g.pad >= g.kernel,
                  "conv2d: kernel larger than padded input");
  g.out_h = (g.in_h + 2 * g.pad - g.kernel) / stride + 1;
  g.out_w = (g.in_w + 2 * g.pad - g.kernel) / stride + 1;
  return g;
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

// Output columns [lo, hi) whose input index ox * stride + k - pad is in range.
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t k, const Conv2dGeometry& g) {
  std::size_t lo = 0;
  while (lo < g.out_w && lo * g.stride + k < g.pad) ++lo;
  std::size_t hi = g.out_w;
  while (hi > lo && (hi - 1) * g.stride + k - g.pad >= g.in_w) --hi;
  return {lo, hi};
}

inline std::ptrdiff_t wrap_index(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return ((i % m) + m) % m;
}

inline std::size_t wrap_column(std::size_t ox, std::size_t kx, const Conv2dGeometry& g) {
  return static_cast<std::size_t>(wrap_index(
      static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad), g.in_w));
}

// cols is (in_ch * k * k) x ld; this sample occupies columns [0, out_h * out_w).
inline void im2col(const double* img, const Conv2dGeometry& g, double* cols, std::size_t ld) {
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    const double* src = img + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        double* dst = cols + ((c * g.kernel + ky) * g.kernel + kx) * ld;
        const auto [lo, hi] = valid_range(kx, g);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                    static_cast<std::ptrdiff_t>(g.pad);
          double* row = dst + oy * g.out_w;
          if (g.circular) {
            iy = wrap_index(iy, g.in_h);
            const double* src_row = src + static_cast<std::size_t>(iy) * g.in_w;
            for (std::size_t ox = 0; ox < lo; ++ox) row[ox] = src_row[wrap_column(ox, kx, g)];
            for (std::size_t ox = hi; ox < g.out_w; ++ox) row[ox] = src_row[wrap_column(ox, kx, g)];
          } else if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(row, row + g.out_w, 0.0);
            continue;
          } else {
            std::fill(row, row + lo, 0.0);
            std::fill(row + hi, row + g.out_w, 0.0);
          }
          const double* src_row = src + static_cast<std::size_t>(iy) * g.in_w;
          if (g.stride == 1) {
            std::copy(src_row + lo + kx - g.pad, src_row + hi + kx - g.pad, row + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) row[ox] = src_row[ox * g.stride + kx - g.pad];
          }
        }
      }
    }
  }
}

inline void col2im_add(const double* cols, const Conv2dGeometry& g, double* img, std::size_t ld) {
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    double* dst = img + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const double* src = cols + ((c * g.kernel + ky) * g.kernel + kx) * ld;
        const auto [lo, hi] = valid_range(kx, g);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                    static_cast<std::ptrdiff_t>(g.pad);
          const double* row = src + oy * g.out_w;
          if (g.circular) {
            iy = wrap_index(iy, g.in_h);
            double* dst_row = dst + static_cast<std::size_t>(iy) * g.in_w;
            for (std::size_t ox = 0; ox < lo; ++ox) dst_row[wrap_column(ox, kx, g)] += row[ox];
            for (std::size_t ox = hi; ox < g.out_w; ++ox) dst_row[wrap_column(ox, kx, g)] += row[ox];
          } else if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            continue;
          }
          double* dst_row = dst + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = lo; ox < hi; ++ox) dst_row[ox * g.stride + kx - g.pad] += row[ox];
        }
      }
    }
  }
}

// Samples per GEMM so that small feature maps still give wide products.
inline std::size_t conv_chunk(const Conv2dGeometry& g) {
  const std::size_t plane = std::max<std::size_t>(1, g.out_plane());
  return std::clamp<std::size_t>(4096 / plane, 1, g.batch);
}

}  // namespace detail

/// Cross-correlation of an N x C x H x W input with an O x C x k x k weight.
/// Bias-free; batchnorm follows every convolution in the networks built here.
inline Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride = 1,
                     Padding padding = Padding::Same) {
  const Conv2dGeometry g = conv2d_geometry(x.shape(), w.shape(), stride, padding);
  const std::size_t patch = g.patch(), plane = g.out_plane();
  const std::size_t in_size = g.in_ch * g.in_h * g.in_w, out_size = g.out_ch * plane;
  const std::size_t chunk = detail::conv_chunk(g);
  std::vector<double> out(g.batch * out_size);
  std::vector<double> cols(patch * plane * chunk);
  detail::RowMatrix y;
  detail::ConstMapMatrix weight(w.values().data(), g.out_ch, patch);
  for (std::size_t b0 = 0; b0 < g.batch; b0 += chunk) {
    const std::size_t nb = std::min(chunk, g.batch - b0), ld = nb * plane;
    for (std::size_t b = 0; b < nb; ++b) {
      detail::im2col(x.values().data() + (b0 + b) * in_size, g, cols.data() + b * plane, ld);
    }
    y.noalias() = weight * detail::ConstMapMatrix(cols.data(), patch, ld);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t o = 0; o < g.out_ch; ++o) {
        const double* src = y.data() + o * ld + b * plane;
        std::copy(src, src + plane, out.data() + (b0 + b) * out_size + o * plane);
      }
    }
  }
  auto px = x.node(), pw = w.node();
  return detail::make_result(
      {g.batch, g.out_ch, g.out_h, g.out_w}, std::move(out), {x, w}, [px, pw, g, chunk](Node& self) {
        const std::size_t patch = g.patch(), plane = g.out_plane();
        const std::size_t in_size = g.in_ch * g.in_h * g.in_w, out_size = g.out_ch * plane;
        std::vector<double> cols(patch * plane * chunk);
        detail::RowMatrix dy(g.out_ch, plane * chunk), dcols;
        detail::ConstMapMatrix weight(pw->value.data(), g.out_ch, patch);
        for (std::size_t b0 = 0; b0 < g.batch; b0 += chunk) {
          const std::size_t nb = std::min(chunk, g.batch - b0), ld = nb * plane;
          for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t o = 0; o < g.out_ch; ++o) {
              const double* src = self.grad.data() + (b0 + b) * out_size + o * plane;
              std::copy(src, src + plane, dy.data() + o * ld + b * plane);
            }
          }
          auto dy_block = detail::ConstMapMatrix(dy.data(), g.out_ch, ld);
          if (pw->requires_grad) {
            for (std::size_t b = 0; b < nb; ++b) {
              detail::im2col(px->value.data() + (b0 + b) * in_size, g, cols.data() + b * plane, ld);
            }
            detail::MapMatrix(pw->grad_buffer().data(), g.out_ch, patch).noalias() +=
                dy_block * detail::ConstMapMatrix(cols.data(), patch, ld).transpose();
          }
          if (px->requires_grad) {
            dcols.noalias() = weight.transpose() * dy_block;
            double* dx = px->grad_buffer().data();
            for (std::size_t b = 0; b < nb; ++b) {
              detail::col2im_add(dcols.data() + b * plane, g, dx + (b0 + b) * in_size, ld);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Normalization

/// Running statistics of one batchnorm layer.
struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormStats(std::size_t channels = 0)
      : mean(channels, 0.0), var(channels, 1.0) {}
};

/// Training mode normalizes with batch statistics and updates `stats`;
/// evaluation mode is the fixed affine map defined by the running statistics.
inline Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          BatchNormStats& stats, bool training) {
  detail::require(x.rank() == 4, "batchnorm2d: expects NCHW input");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  detail::require(gamma.numel() == c && beta.numel() == c && stats.mean.size() == c,
                  "batchnorm2d: parameter size does not match channel count");
  const std::size_t count = n * plane;
  std::vector<double> mean(c), inv_std(c);
  if (training) {
    detail::require(count > 1, "batchnorm2d: training needs more than one value per channel");
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = x.values().data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double mu = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = x.values().data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const double var = sq / static_cast<double>(count);
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + stats.eps);
      const double unbiased = sq / static_cast<double>(count - 1);
      stats.mean[ch] = (1.0 - stats.momentum) * stats.mean[ch] + stats.momentum * mu;
      stats.var[ch] = (1.0 - stats.momentum) * stats.var[ch] + stats.momentum * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = stats.mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(stats.var[ch] + stats.eps);
    }
  }

  std::vector<double> xhat(x.numel()), out(x.numel());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xhat[off + i] = (x[off + i] - mean[ch]) * inv_std[ch];
        out[off + i] = gamma[ch] * xhat[off + i] + beta[ch];
      }
    }
  }

  auto px = x.node(), pg = gamma.node(), pb = beta.node();
  return detail::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [px, pg, pb, xhat = std::move(xhat), inv_std, n, c, plane, training](Node& self) {
        const double m = static_cast<double>(n * plane);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy += self.grad[off + i];
              sum_dy_xhat += self.grad[off + i] * xhat[off + i];
            }
          }
          if (pg->requires_grad) pg->grad_buffer()[ch] += sum_dy_xhat;
          if (pb->requires_grad) pb->grad_buffer()[ch] += sum_dy;
          if (!px->requires_grad) continue;
          auto& g = px->grad_buffer();
          const double gam = pg->value[ch];
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const double dy = self.grad[off + i];
              if (training) {
                g[off + i] += gam * inv_std[ch] *
                              (dy - sum_dy / m - xhat[off + i] * sum_dy_xhat / m);
              } else {
                g[off + i] += gam * inv_std[ch] * dy;
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Heads and losses

/// x: N x C x H x W -> N x C.
inline Tensor global_avg_pool(const Tensor& x) {
  detail::require(x.rank() == 4, "global_avg_pool: expects NCHW input");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  std::vector<double> out(n * c, 0.0);
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < plane; ++j) s += x[i * plane + j];
    out[i] = s / static_cast<double>(plane);
  }
  auto px = x.node();
  return detail::make_result({n, c}, std::move(out), {x}, [px, plane](Node& self) {
    auto& g = px->grad_buffer();
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      for (std::size_t j = 0; j < plane; ++j) g[i * plane + j] += self.grad[i] * inv;
    }
  });
}

/// x: N x in, weight: out x in, bias: out -> N x out.
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  detail::require(x.rank() == 2 && weight.rank() == 2 && weight.dim(1) == x.dim(1) &&
                      bias.numel() == weight.dim(0),
                  "linear: shapes " + shape_string(x.shape()) + " x " +
                      shape_string(weight.shape()) + " do not agree");
  const std::size_t n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  std::vector<double> out(n * out_dim);
  detail::MapMatrix y(out.data(), n, out_dim);
  y.noalias() = detail::ConstMapMatrix(x.values().data(), n, in) *
                detail::ConstMapMatrix(weight.values().data(), out_dim, in).transpose();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < out_dim; ++k) y(r, k) += bias[k];
  }
  auto px = x.node(), pw = weight.node(), pb = bias.node();
  return detail::make_result({n, out_dim}, std::move(out), {x, weight, bias},
                             [px, pw, pb, n, in, out_dim](Node& self) {
                               detail::ConstMapMatrix dy(self.grad.data(), n, out_dim);
                               if (px->requires_grad) {
                                 detail::MapMatrix(px->grad_buffer().data(), n, in).noalias() +=
                                     dy * detail::ConstMapMatrix(pw->value.data(), out_dim, in);
                               }
                               if (pw->requires_grad) {
                                 detail::MapMatrix(pw->grad_buffer().data(), out_dim, in)
                                     .noalias() +=
                                     dy.transpose() *
                                     detail::ConstMapMatrix(px->value.data(), n, in);
                               }
                               if (pb->requires_grad) {
                                 auto& gb = pb->grad_buffer();
                                 for (std::size_t r = 0; r < n; ++r) {
                                   for (std::size_t k = 0; k < out_dim; ++k) gb[k] += dy(r, k);
                                 }
                               }
                             });
}

namespace detail {

// Row-wise softmax of logits / temperature.
inline std::vector<double> softmax_rows(std::span<const double> logits, std::size_t rows,
                                        std::size_t cols, double temperature = 1.0) {
  std::vector<double> p(logits.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.data() + r * cols;
    const double zmax = *std::max_element(z, z + cols);
    double sum = 0.0;
    for (std::size_t k = 0; k < cols; ++k) {
      p[r * cols + k] = std::exp((z[k] - zmax) / temperature);
      sum += p[r * cols + k];
    }
    for (std::size_t k = 0; k < cols; ++k) p[r * cols + k] /= sum;
  }
  return p;
}

inline void check_labels(const Tensor& logits, std::span<const int> labels) {
  require(logits.rank() == 2 && labels.size() == logits.dim(0),
          "loss: expects N x K logits and N labels");
  for (int y : labels) {
    require(y >= 0 && static_cast<std::size_t>(y) < logits.dim(1), "loss: label out of range");
  }
}

}  // namespace detail

/// Mean cross-entropy of softmax(logits) against integer labels.
inline Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  detail::check_labels(logits, labels);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  auto p = detail::softmax_rows(logits.values(), n, k);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    loss -= std::log(std::max(p[r * k + static_cast<std::size_t>(labels[r])], 1e-300));
  }
  loss /= static_cast<double>(n);
  std::vector<int> y(labels.begin(), labels.end());
  auto pz = logits.node();
  return detail::make_result({1}, {loss}, {logits},
                             [pz, p = std::move(p), y = std::move(y), n, k](Node& self) {
                               auto& g = pz->grad_buffer();
                               const double s = self.grad[0] / static_cast<double>(n);
                               for (std::size_t r = 0; r < n; ++r) {
                                 for (std::size_t c = 0; c < k; ++c) {
                                   const double target =
                                       static_cast<std::size_t>(y[r]) == c ? 1.0 : 0.0;
                                   g[r * k + c] += s * (p[r * k + c] - target);
                                 }
                               }
                             });
}

/// alpha * CE(student, labels) + (1 - alpha) * T^2 * KL(softmax(t/T) || softmax(s/T)),
/// averaged over the batch. Differentiable in the student logits only.
inline Tensor kd_loss(const Tensor& student, const Tensor& teacher, std::span<const int> labels,
                      double temperature, double alpha) {
  if (!(temperature > 0.0)) {
    throw Error(ErrorCode::InvalidHyperparameter, "kd_loss: temperature must be positive");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::InvalidHyperparameter, "kd_loss: alpha must lie in [0, 1]");
  }
  detail::require(student.shape() == teacher.shape(),
                  "kd_loss: student and teacher logits differ in shape");
  detail::check_labels(student, labels);
  const std::size_t n = student.dim(0), k = student.dim(1);
  const auto p_hard = detail::softmax_rows(student.values(), n, k);
  const auto p_s = detail::softmax_rows(student.values(), n, k, temperature);
  const auto p_t = detail::softmax_rows(teacher.values(), n, k, temperature);

  double ce = 0.0, kl = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    ce -= std::log(std::max(p_hard[r * k + static_cast<std::size_t>(labels[r])], 1e-300));
    for (std::size_t c = 0; c < k; ++c) {
      const double pt = p_t[r * k + c];
      if (pt > 0.0) kl += pt * (std::log(pt) - std::log(std::max(p_s[r * k + c], 1e-300)));
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const double loss = alpha * ce * inv_n + (1.0 - alpha) * temperature * temperature * kl * inv_n;

  std::vector<int> y(labels.begin(), labels.end());
  auto ps = student.node();
  return detail::make_result(
      {1}, {loss}, {student},
      [ps, p_hard, p_s, p_t, y = std::move(y), n, k, temperature, alpha](Node& self) {
        auto& g = ps->grad_buffer();
        const double s = self.grad[0] / static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < k; ++c) {
            const std::size_t i = r * k + c;
            const double target = static_cast<std::size_t>(y[r]) == c ? 1.0 : 0.0;
            g[i] += s * (alpha * (p_hard[i] - target) +
                         (1.0 - alpha) * temperature * (p_s[i] - p_t[i]));
          }
        }
      });
}

}  // namespace wavepool
