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

#include "wavepool/pooling.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace wavepool {
namespace {

using testing::dot;
using testing::gradient_check;
using testing::random_tensor;
using testing::random_vector;
using testing::weighted_sum;

Tensor checkerboard(std::size_t h, std::size_t w) {
  Tensor t({1, 1, h, w});
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) t[r * w + c] = (r + c) % 2 == 0 ? 1.0 : -1.0;
  }
  return t;
}

// Circular translation of every plane by (dy, dx).
Tensor roll(const Tensor& x, std::size_t dy, std::size_t dx) {
  Tensor out(x.shape());
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        out[p * h * w + ((r + dy) % h) * w + (c + dx) % w] = x[p * h * w + r * w + c];
      }
    }
  }
  return out;
}

/// <op(x), g> against <x, op^T g> from the tape.
double adjoint_gap(const std::function<Tensor(const Tensor&)>& op, const Tensor& x, Rng& rng) {
  Tensor xin = x.detach();
  xin.set_requires_grad(true);
  Tensor y = op(xin);
  const auto g = random_vector(y.numel(), rng);
  backward(y, g);
  return std::abs(dot(y.values(), g) - dot(xin.values(), xin.grad()));
}

TEST(WaveletPool, ConstantHaar) {
  Tensor y = wavelet_pool(Tensor({1, 1, 4, 4}, 1.0), make_haar());
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (double v : y.values()) EXPECT_NEAR(v, 2.0, 1e-15);
}

TEST(WaveletPool, CheckerboardVanishesHaar) {
  const Tensor y = wavelet_pool(checkerboard(8, 8), make_haar());
  for (double v : y.values()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(WaveletPool, MatchesLlSubbandPerChannel) {
  Rng rng(1);
  Tensor x = random_tensor({2, 3, 16, 12}, rng);
  for (const WaveletSpec& s : shipped_wavelets()) {
    Tensor y = wavelet_pool(x, s);
    for (std::size_t p = 0; p < 6; ++p) {
      Matrix plane(16, 12);
      std::copy_n(x.values().data() + p * 192, 192, plane.values.begin());
      const Matrix ll = dwt2d(plane, s).ll;
      for (std::size_t i = 0; i < 48; ++i) EXPECT_NEAR(y[p * 48 + i], ll.values[i], 1e-14);
    }
  }
}

TEST(WaveletPool, AdjointIdentity) {
  Rng rng(2);
  for (const WaveletSpec& s : shipped_wavelets()) {
    Tensor x = random_tensor({2, 2, 16, 16}, rng);
    EXPECT_LE(adjoint_gap([&](const Tensor& t) { return wavelet_pool(t, s); }, x, rng), 1e-12)
        << s.name;
  }
}

TEST(WaveletPool, GradientCheck) {
  Rng rng(3);
  for (const WaveletSpec& s : {make_haar(), make_cohen(3, 3)}) {
    Tensor x = random_tensor({1, 2, 8, 8}, rng, true);
    const auto probe = random_vector(32, rng);
    auto f = [&] { return weighted_sum(wavelet_pool(x, s), probe); };
    EXPECT_LE(gradient_check(f, x, 8, rng).max_relative_error, 1e-6);
  }
}

TEST(WaveletPool, OddInputRejected) {
  try {
    wavelet_pool(Tensor({1, 1, 5, 4}), make_haar());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OddLengthInput);
  }
}

TEST(WaveletPool, FullStrideShiftEquivariance) {
  Rng rng(4);
  for (const WaveletSpec& s : shipped_wavelets()) {
    Tensor x = random_tensor({1, 2, 16, 16}, rng);
    Tensor lhs = wavelet_pool(roll(x, 2, 4), s);
    Tensor rhs = roll(wavelet_pool(x, s), 1, 2);
    EXPECT_LE(testing::max_abs_diff(lhs.values(), rhs.values()), 1e-12) << s.name;
  }
}

TEST(WaveletPool, DetailsAreDiscardedEitherWay) {
  Rng rng(5);
  for (const WaveletSpec& s : shipped_wavelets()) {
    Matrix x = testing::random_matrix(16, 16, rng);
    Tensor tx({1, 1, 16, 16}, x.values);
    Tensor tl({1, 1, 16, 16}, reconstruct_lowpass(x, s).values);
    EXPECT_LE(testing::max_abs_diff(wavelet_pool(tx, s).values(), wavelet_pool(tl, s).values()),
              1e-10)
        << s.name;
  }
}

TEST(MaxAvgPool, SingleWindow) {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(max_pool2(x).item(), 4.0);
  EXPECT_EQ(avg_pool2(x).item(), 2.5);
}

TEST(MaxAvgPool, ConstantInput) {
  Tensor x({1, 2, 4, 6}, -1.5);
  const Tensor mx = max_pool2(x), av = avg_pool2(x);
  for (double v : mx.values()) EXPECT_EQ(v, -1.5);
  for (double v : av.values()) EXPECT_EQ(v, -1.5);
}

TEST(MaxAvgPool, Gradients) {
  Rng rng(6);
  Tensor x = random_tensor({2, 2, 6, 6}, rng, true);
  const auto probe = random_vector(2 * 2 * 9, rng);
  auto favg = [&] { return weighted_sum(avg_pool2(x), probe); };
  auto fmax = [&] { return weighted_sum(max_pool2(x), probe); };
  EXPECT_LE(gradient_check(favg, x, 8, rng).max_relative_error, 1e-6);
  // Uniform random values are tie-free with probability one.
  EXPECT_LE(gradient_check(fmax, x, 8, rng).max_relative_error, 1e-6);
}

TEST(MaxAvgPool, TieRoutesToFirstIndex) {
  Tensor x({1, 1, 2, 2}, {5, 5, 5, 5}, true);
  backward(max_pool2(x));
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(x.grad()[1] + x.grad()[2] + x.grad()[3], 0.0);
}

TEST(BlurPool, ConstantPreserved) {
  const Tensor y = blur_pool(Tensor({1, 1, 8, 8}, 0.75), PoolKind::blur().blur_kernel);
  for (double v : y.values()) EXPECT_NEAR(v, 0.75, 1e-15);
}

TEST(BlurPool, BinomialNullsNyquist) {
  const Tensor y = blur_pool(checkerboard(8, 10), PoolKind::blur().blur_kernel);
  for (double v : y.values()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(BlurPool, AdjointAndGradient) {
  Rng rng(7);
  for (const auto& kernel : {std::vector<double>{1, 2, 1}, std::vector<double>{1, 4, 6, 4, 1}}) {
    const PoolKind kind = PoolKind::blur(kernel);
    Tensor x = random_tensor({2, 2, 8, 10}, rng);
    EXPECT_LE(adjoint_gap([&](const Tensor& t) { return blur_pool(t, kind.blur_kernel); }, x, rng),
              1e-12);
    Tensor xg = random_tensor({1, 1, 8, 8}, rng, true);
    const auto probe = random_vector(16, rng);
    auto f = [&] { return weighted_sum(blur_pool(xg, kind.blur_kernel), probe); };
    EXPECT_LE(gradient_check(f, xg, 8, rng).max_relative_error, 1e-6);
  }
}

TEST(PoolKind, ParseAndPrint) {
  for (const char* text : {"max", "avg", "strided", "blur:1-2-1", "blur:1-4-6-4-1",
                           "wavelet:haar", "wavelet:ch3.3", "wavelet:db2"}) {
    EXPECT_EQ(to_string(parse_pool_kind(text)), text);
  }
  const PoolKind blur = parse_pool_kind("blur:1-2-1");
  EXPECT_EQ(blur.blur_kernel, (std::vector<double>{0.25, 0.5, 0.25}));
  for (const char* bad : {"min", "blur:1-2", "blur:1--1", "blur:-1-2-1", "wavelet:sym2", ""}) {
    EXPECT_THROW(parse_pool_kind(bad), Error) << bad;
  }
}

TEST(Replacement, MaxPoolSiteBecomesPooling) {
  Rng rng(8);
  const DownsampleOp op = apply_replacement(PoolKind::Kind::MaxPool2, PoolKind::wavelet_pool(make_haar()));
  EXPECT_EQ(op.parameter_count(), 0u);
  Tensor x = random_tensor({1, 3, 8, 8}, rng);
  EXPECT_EQ(op(x).shape(), (Shape{1, 3, 4, 4}));
}

TEST(Replacement, PointwiseConvCommutesWithPooling) {
  Rng rng(9);
  Tensor w = random_tensor({5, 3, 1, 1}, rng);
  for (const PoolKind& kind : {PoolKind::wavelet_pool(make_haar()), PoolKind::wavelet_pool(make_cohen(3, 3)),
                               PoolKind::blur(), PoolKind::avg()}) {
    DownsampleOp after = apply_replacement(PoolKind::Kind::StridedConv, kind, w);
    DownsampleOp before = after;
    before.order = ComposeOrder::PoolThenConv;
    Tensor x = random_tensor({2, 3, 16, 16}, rng);
    EXPECT_LE(testing::max_abs_diff(after(x).values(), before(x).values()), 1e-10) << to_string(kind);
    EXPECT_EQ(after(x).shape(), (Shape{2, 5, 8, 8}));
  }
}

TEST(Replacement, ParameterCountUnchanged) {
  Tensor w({8, 4, 3, 3});
  const DownsampleOp original = apply_replacement(PoolKind::Kind::StridedConv, PoolKind::strided(), w);
  const DownsampleOp replaced =
      apply_replacement(PoolKind::Kind::StridedConv, PoolKind::wavelet_pool(make_haar()), w);
  EXPECT_EQ(original.parameter_count(), replaced.parameter_count());
  EXPECT_EQ(replaced.parameter_count(), 8u * 4 * 9);
  Tensor x({1, 4, 8, 8}, 1.0);
  EXPECT_EQ(original(x).shape(), replaced(x).shape());
}

TEST(Replacement, WeightsMustMatchSite) {
  try {
    apply_replacement(PoolKind::Kind::StridedConv, PoolKind::wavelet_pool(make_haar()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
  EXPECT_THROW(apply_replacement(PoolKind::Kind::MaxPool2, PoolKind::avg(), Tensor({1, 1, 1, 1})),
               Error);
}

}  // namespace
}  // namespace wavepool
