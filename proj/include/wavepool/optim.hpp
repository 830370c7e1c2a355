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
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "wavepool/error.hpp"
#include "wavepool/rng.hpp"
#include "wavepool/tensor.hpp"

namespace wavepool {

/// A named trainable tensor with its momentum buffer.
struct Parameter {
  std::string name;
  Tensor tensor;
  bool learnable = true;
  std::vector<double> momentum;

  Parameter() = default;
  Parameter(std::string n, Tensor t, bool is_learnable = true)
      : name(std::move(n)), tensor(std::move(t)), learnable(is_learnable),
        momentum(tensor.numel(), 0.0) {
    tensor.set_requires_grad(learnable);
  }
};

/// Kaiming-uniform for ReLU networks: U(-b, b), b = sqrt(6 / fan_in).
inline Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

struct SgdOptions {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// Classical momentum: v <- mu v + (g + wd w); w <- w - lr v.
template <typename Params>
void sgd_step(Params& params, const SgdOptions& opt) {
  for (Parameter& p : params) {
    if (!p.learnable) continue;
    if (!p.tensor.has_grad()) {
      throw Error(ErrorCode::MissingGradient, "parameter '" + p.name + "' has no gradient");
    }
    auto w = p.tensor.values();
    auto g = p.tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double step = g[i] + opt.weight_decay * w[i];
      p.momentum[i] = opt.momentum * p.momentum[i] + step;
      w[i] -= opt.lr * p.momentum[i];
    }
  }
}

template <typename Params>
void zero_grad(Params& params) {
  for (Parameter& p : params) {
    if (p.learnable) p.tensor.zero_grad();
  }
}

/// lr0 * factor^(number of milestones <= epoch).
inline double step_decay(double lr0, std::span<const int> milestones, double factor, int epoch) {
  double lr = lr0;
  for (int m : milestones) {
    if (epoch >= m) lr *= factor;
  }
  return lr;
}

/// Cosine arc from lr_max down to lr_min, restarting every `period` epochs.
inline double cosine(double lr_max, double lr_min, int period, double epoch) {
  if (period <= 0) throw Error(ErrorCode::InvalidHyperparameter, "cosine period must be positive");
  const double phase = std::fmod(epoch, static_cast<double>(period)) / period;
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * phase));
}

}  // namespace wavepool
