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

#include "wavepool/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_util.hpp"
#include "wavepool/optim.hpp"

namespace wavepool {
namespace {

using testing::gradient_check;
using testing::random_tensor;
using testing::random_vector;
using testing::weighted_sum;

constexpr double kGradTol = 1e-6;
constexpr std::size_t kSamples = 8;

TEST(Relu, Values) {
  Tensor x({3}, {-1.0, 2.0, 0.0});
  Tensor y = relu(x);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 2.0);
  EXPECT_EQ(y[2], 0.0);
}

TEST(Conv2d, PointwiseIdentity) {
  Rng rng(1);
  Tensor x = random_tensor({2, 3, 4, 6}, rng);
  Tensor w({3, 3, 1, 1}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
  Tensor y = conv2d(x, w, 1, Padding::Same);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, OnesKernelCountsTaps) {
  const std::size_t c_in = 4;
  Tensor x({1, c_in, 6, 6}, 1.0);
  Tensor w({2, c_in, 3, 3}, 1.0);
  Tensor y = conv2d(x, w, 1, Padding::Same);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 6, 6}));
  EXPECT_EQ(y[2 * 6 + 3], 9.0 * c_in);  // interior pixel
  EXPECT_EQ(y[0], 4.0 * c_in);          // corner sees 2x2 taps
}

TEST(Conv2d, OutputShapes) {
  Tensor x({1, 2, 8, 8});
  EXPECT_EQ(conv2d(x, Tensor({5, 2, 3, 3}), 2, Padding::Same).shape(), (Shape{1, 5, 4, 4}));
  EXPECT_EQ(conv2d(x, Tensor({5, 2, 3, 3}), 1, Padding::Valid).shape(), (Shape{1, 5, 6, 6}));
  EXPECT_EQ(conv2d(x, Tensor({5, 2, 1, 1}), 2, Padding::Same).shape(), (Shape{1, 5, 4, 4}));
}

TEST(Conv2d, CircularPaddingCommutesWithRoll) {
  Rng rng(41);
  const Tensor x = random_tensor({1, 2, 6, 8}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng);
  auto roll = [](const Tensor& t, std::size_t dy, std::size_t dx) {
    Tensor out(t.shape());
    const std::size_t h = t.dim(2), wd = t.dim(3);
    for (std::size_t p = 0; p < t.dim(0) * t.dim(1); ++p) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < wd; ++j) {
          out[(p * h + (i + dy) % h) * wd + (j + dx) % wd] = t[(p * h + i) * wd + j];
        }
      }
    }
    return out;
  };
  const Tensor a = conv2d(roll(x, 1, 3), w, 1, Padding::Circular);
  const Tensor b = roll(conv2d(x, w, 1, Padding::Circular), 1, 3);
  EXPECT_LE(testing::max_abs_diff(a.values(), b.values()), 1e-14);
  const Tensor c = conv2d(roll(x, 2, 4), w, 2, Padding::Circular);
  const Tensor d = roll(conv2d(x, w, 2, Padding::Circular), 1, 2);
  EXPECT_LE(testing::max_abs_diff(c.values(), d.values()), 1e-14);

  // Interior pixels agree with zero padding.
  const Tensor z = conv2d(x, w, 1, Padding::Same), q = conv2d(x, w, 1, Padding::Circular);
  EXPECT_NEAR(z[1 * 8 + 1], q[1 * 8 + 1], 1e-14);
  EXPECT_GT(std::abs(z[0] - q[0]), 1e-6);
}

TEST(Conv2d, Errors) {
  Tensor x({1, 2, 8, 8});
  EXPECT_THROW(conv2d(x, Tensor({1, 3, 3, 3})), Error);
  try {
    conv2d(Tensor({1, 2, 7, 8}), Tensor({1, 2, 3, 3}), 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OddLengthInput);
  }
  try {
    conv2d(x, Tensor({1, 3, 3, 3}));
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  struct Case {
    std::size_t k, stride;
    Padding pad;
  };
  for (const Case& c : {Case{3, 1, Padding::Same}, Case{3, 2, Padding::Same},
                        Case{1, 1, Padding::Same}, Case{1, 2, Padding::Same},
                        Case{3, 1, Padding::Valid}, Case{3, 1, Padding::Circular},
                        Case{3, 2, Padding::Circular}}) {
    Tensor x = random_tensor({2, 3, 6, 6}, rng, true);
    Tensor w = random_tensor({4, 3, c.k, c.k}, rng, true);
    const auto probe = random_vector(shape_numel(conv2d(x, w, c.stride, c.pad).shape()), rng);
    auto f = [&] { return weighted_sum(conv2d(x, w, c.stride, c.pad), probe); };
    EXPECT_LE(gradient_check(f, w, kSamples, rng).max_relative_error, kGradTol);
    EXPECT_LE(gradient_check(f, x, kSamples, rng).max_relative_error, kGradTol);
  }
}

TEST(BatchNorm, TrainingGradients) {
  Rng rng(3);
  Tensor x = random_tensor({3, 2, 4, 4}, rng, true);
  Tensor gamma = random_tensor({2}, rng, true), beta = random_tensor({2}, rng, true);
  BatchNormStats stats(2);
  const auto probe = random_vector(x.numel(), rng);
  auto f = [&] { return weighted_sum(batchnorm2d(x, gamma, beta, stats, true), probe); };
  EXPECT_LE(gradient_check(f, x, kSamples, rng).max_relative_error, kGradTol);
  EXPECT_LE(gradient_check(f, gamma, 2, rng).max_relative_error, kGradTol);
  EXPECT_LE(gradient_check(f, beta, 2, rng).max_relative_error, kGradTol);
}

TEST(BatchNorm, EvalGradients) {
  Rng rng(4);
  Tensor x = random_tensor({2, 2, 4, 4}, rng, true);
  Tensor gamma = random_tensor({2}, rng, true), beta = random_tensor({2}, rng, true);
  BatchNormStats stats(2);
  stats.mean = {0.3, -0.2};
  stats.var = {1.7, 0.4};
  const auto probe = random_vector(x.numel(), rng);
  auto f = [&] { return weighted_sum(batchnorm2d(x, gamma, beta, stats, false), probe); };
  EXPECT_LE(gradient_check(f, x, kSamples, rng).max_relative_error, kGradTol);
  EXPECT_LE(gradient_check(f, gamma, 2, rng).max_relative_error, kGradTol);
}

TEST(BatchNorm, TrainingNormalizesAndTracksRunningStats) {
  Rng rng(5);
  Tensor x = random_tensor({4, 1, 3, 3}, rng);
  Tensor gamma({1}, 1.0), beta({1}, 0.0);
  BatchNormStats stats(1);
  Tensor y = batchnorm2d(x, gamma, beta, stats, true);
  double mean = 0.0, sq = 0.0;
  for (double v : y.values()) mean += v;
  mean /= 36.0;
  for (double v : y.values()) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(sq / 36.0, 1.0, 1e-3);

  double xm = 0.0, xs = 0.0;
  for (double v : x.values()) xm += v;
  xm /= 36.0;
  for (double v : x.values()) xs += (v - xm) * (v - xm);
  EXPECT_NEAR(stats.mean[0], 0.1 * xm, 1e-15);
  EXPECT_NEAR(stats.var[0], 0.9 + 0.1 * xs / 35.0, 1e-15);
}

TEST(BatchNorm, EvalCommutesWithSpatialPermutation) {
  Rng rng(6);
  Tensor x = random_tensor({1, 2, 4, 4}, rng);
  Tensor gamma = random_tensor({2}, rng), beta = random_tensor({2}, rng);
  BatchNormStats stats(2);
  stats.mean = {0.5, -1.0};
  stats.var = {2.0, 0.25};
  // Reverse every plane: a fixed spatial permutation.
  Tensor xp({1, 2, 4, 4});
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < 16; ++i) xp[c * 16 + i] = x[c * 16 + 15 - i];
  }
  Tensor y = batchnorm2d(x, gamma, beta, stats, false);
  Tensor yp = batchnorm2d(xp, gamma, beta, stats, false);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(yp[c * 16 + i], y[c * 16 + 15 - i]);
  }
}

TEST(Linear, Gradients) {
  Rng rng(7);
  Tensor x = random_tensor({3, 5}, rng, true);
  Tensor w = random_tensor({4, 5}, rng, true), b = random_tensor({4}, rng, true);
  const auto probe = random_vector(12, rng);
  auto f = [&] { return weighted_sum(linear(x, w, b), probe); };
  EXPECT_LE(gradient_check(f, x, kSamples, rng).max_relative_error, kGradTol);
  EXPECT_LE(gradient_check(f, w, kSamples, rng).max_relative_error, kGradTol);
  EXPECT_LE(gradient_check(f, b, 4, rng).max_relative_error, kGradTol);
  EXPECT_THROW(linear(x, Tensor({4, 6}), b), Error);
}

TEST(ReluComposition, Gradients) {
  Rng rng(8);
  Tensor x = random_tensor({2, 2, 4, 4}, rng, true);
  Tensor w = random_tensor({3, 2, 3, 3}, rng, true);
  const auto probe = random_vector(3 * 2, rng);
  auto f = [&] { return weighted_sum(global_avg_pool(relu(conv2d(x, w))), probe); };
  EXPECT_LE(gradient_check(f, x, kSamples, rng).max_relative_error, kGradTol);
  EXPECT_LE(gradient_check(f, w, kSamples, rng).max_relative_error, kGradTol);
}

TEST(ResidualAdd, GradientFlowsToBothBranches) {
  Rng rng(9);
  Tensor a = random_tensor({2, 3}, rng, true);
  Tensor w = random_tensor({3, 3}, rng, true), b = random_tensor({3}, rng, true);
  const auto probe = random_vector(6, rng);
  auto f = [&] { return weighted_sum(relu(add(a, linear(a, w, b))), probe); };
  EXPECT_LE(gradient_check(f, a, kSamples, rng).max_relative_error, kGradTol);
}

TEST(SoftmaxCrossEntropy, UniformLogits) {
  Tensor logits({2, 100}, 0.37);
  const std::vector<int> labels{3, 99};
  EXPECT_NEAR(softmax_cross_entropy(logits, labels).item(), std::log(100.0), 1e-12);
}

TEST(SoftmaxCrossEntropy, Gradient) {
  Rng rng(10);
  Tensor z = random_tensor({4, 6}, rng, true);
  const std::vector<int> labels{0, 5, 2, 2};
  auto f = [&] { return softmax_cross_entropy(z, labels); };
  EXPECT_LE(gradient_check(f, z, kSamples, rng).max_relative_error, kGradTol);
  EXPECT_THROW(softmax_cross_entropy(z, std::vector<int>{0, 6, 1, 1}), Error);
}

TEST(KdLoss, IdenticalTeacherGivesZero) {
  Rng rng(11);
  Tensor z = random_tensor({3, 10}, rng);
  const std::vector<int> labels{1, 2, 3};
  EXPECT_NEAR(kd_loss(z, z, labels, 4.0, 0.0).item(), 0.0, 1e-12);
}

TEST(KdLoss, AlphaOneIsCrossEntropy) {
  Rng rng(12);
  Tensor s = random_tensor({3, 10}, rng), t = random_tensor({3, 10}, rng);
  const std::vector<int> labels{1, 2, 9};
  EXPECT_NEAR(kd_loss(s, t, labels, 4.0, 1.0).item(), softmax_cross_entropy(s, labels).item(),
              1e-14);
}

TEST(KdLoss, GradientAndTeacherIsConstant) {
  Rng rng(13);
  Tensor s = random_tensor({3, 7}, rng, true);
  Tensor t = random_tensor({3, 7}, rng, true);
  const std::vector<int> labels{0, 6, 3};
  auto f = [&] { return kd_loss(s, t, labels, 4.0, 0.5); };
  EXPECT_LE(gradient_check(f, s, kSamples, rng).max_relative_error, kGradTol);
  t.zero_grad();
  backward(f());
  for (double g : t.grad()) EXPECT_EQ(g, 0.0);
}

TEST(KdLoss, InvalidHyperparameters) {
  Tensor z({1, 3});
  const std::vector<int> labels{0};
  for (auto [temp, alpha] : {std::pair{0.0, 0.5}, std::pair{-1.0, 0.5}, std::pair{4.0, 1.5},
                             std::pair{4.0, -0.1}}) {
    try {
      kd_loss(z, z, labels, temp, alpha);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidHyperparameter);
    }
  }
}

TEST(Tape, ReplayIsBitIdentical) {
  auto run = [] {
    Rng rng(42);
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng, true);
    Tensor fc = random_tensor({5, 4}, rng, true), b = random_tensor({5}, rng, true);
    const std::vector<int> labels{1, 4};
    Tensor loss = softmax_cross_entropy(linear(global_avg_pool(relu(conv2d(x, w))), fc, b), labels);
    backward(loss);
    std::vector<double> out{loss.item()};
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Tape, NoGradGuardSkipsRecording) {
  Tensor w({2}, 1.0, true);
  NoGradGuard guard;
  Tensor y = add(w, w);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Sgd, ZeroGradientLeavesParameters) {
  std::vector<Parameter> params;
  params.emplace_back("w", Tensor({3}, {1.0, -2.0, 0.5}));
  zero_grad(params);
  sgd_step(params, SgdOptions{0.1, 0.9, 0.0});
  EXPECT_EQ(params[0].tensor[0], 1.0);
  EXPECT_EQ(params[0].tensor[1], -2.0);
  EXPECT_EQ(params[0].tensor[2], 0.5);
}

TEST(Sgd, MomentumUpdate) {
  std::vector<Parameter> params;
  params.emplace_back("w", Tensor({1}, {1.0}));
  for (int step = 0; step < 2; ++step) {
    zero_grad(params);
    params[0].tensor.mutable_grad()[0] = 0.5;
    sgd_step(params, SgdOptions{0.1, 0.9, 0.01});
  }
  // v1 = 0.5 + 0.01; w1 = 1 - 0.051
  // v2 = 0.9 v1 + 0.5 + 0.01 w1; w2 = w1 - 0.1 v2
  const double w1 = 1.0 - 0.1 * 0.51;
  const double v2 = 0.9 * 0.51 + 0.5 + 0.01 * w1;
  EXPECT_NEAR(params[0].tensor[0], w1 - 0.1 * v2, 1e-15);
}

TEST(Sgd, MissingGradient) {
  std::vector<Parameter> params;
  params.emplace_back("w", Tensor({1}, {1.0}));
  try {
    sgd_step(params, SgdOptions{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingGradient);
  }
}

TEST(Schedules, StepDecay) {
  const std::vector<int> cifar{100, 150};
  EXPECT_DOUBLE_EQ(step_decay(0.1, cifar, 0.1, 0), 0.1);
  EXPECT_DOUBLE_EQ(step_decay(0.1, cifar, 0.1, 99), 0.1);
  EXPECT_NEAR(step_decay(0.1, cifar, 0.1, 120), 0.01, 1e-15);
  EXPECT_NEAR(step_decay(0.1, cifar, 0.1, 199), 0.001, 1e-15);
  const std::vector<int> short_schedule{3, 6, 9};
  EXPECT_NEAR(step_decay(1.0, short_schedule, 0.1, 9), 1e-3, 1e-15);
}

TEST(Schedules, Cosine) {
  EXPECT_DOUBLE_EQ(cosine(3.75e-3, 3.75e-5, 30, 0), 3.75e-3);
  EXPECT_NEAR(cosine(3.75e-3, 3.75e-5, 30, 15), 0.5 * (3.75e-3 + 3.75e-5), 1e-15);
  EXPECT_DOUBLE_EQ(cosine(3.75e-3, 3.75e-5, 30, 30), 3.75e-3);
  EXPECT_GT(cosine(3.75e-3, 3.75e-5, 30, 29.999), 3.75e-5);
}

}  // namespace
}  // namespace wavepool
