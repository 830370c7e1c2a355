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

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wavepool/error.hpp"
#include "wavepool/optim.hpp"
#include "wavepool/pooling.hpp"
#include "wavepool/rng.hpp"
#include "wavepool/tensor.hpp"

namespace wavepool {

/// Where the low-pass filter sits relative to the convolution in a
/// down-sampling residual block.
enum class BlockOrderVariant {
  Original,                 // (a) stride-2 convolutions, no pooling
  PoolBeforeConvSkip,       // (b) main: conv then pool; skip: pool then 1x1 conv
  ConsistentPoolAfterConv,  // (c) conv then pool on both paths
};

inline std::string to_string(BlockOrderVariant v) {
  switch (v) {
    case BlockOrderVariant::Original: return "a";
    case BlockOrderVariant::PoolBeforeConvSkip: return "b";
    case BlockOrderVariant::ConsistentPoolAfterConv: return "c";
  }
  return "?";
}

inline BlockOrderVariant parse_variant(std::string_view text) {
  if (text == "a" || text == "original") return BlockOrderVariant::Original;
  if (text == "b" || text == "pool-before-conv-skip") return BlockOrderVariant::PoolBeforeConvSkip;
  if (text == "c" || text == "consistent") return BlockOrderVariant::ConsistentPoolAfterConv;
  throw Error(ErrorCode::InvalidConfig, "unknown block variant '" + std::string(text) + "'");
}

struct StageSpec {
  std::size_t blocks = 1;
  std::size_t width = 64;  // bottleneck width; block output is width * expansion
  bool downsample = true;

  bool operator==(const StageSpec&) const = default;
};

struct StemSpec {
  std::size_t channels = 16;
  std::size_t kernel = 3;
  bool conv_downsample = false;  // stride-2 stem convolution
  bool pool_downsample = false;  // max-pooling after the stem

  bool operator==(const StemSpec&) const = default;
};

struct StageSchedule {
  StemSpec stem;
  std::vector<StageSpec> stages;
  std::size_t expansion = 4;

  std::size_t downsample_count() const {
    std::size_t n = (stem.conv_downsample ? 1 : 0) + (stem.pool_downsample ? 1 : 0);
    for (const auto& s : stages) n += s.downsample ? 1 : 0;
    return n;
  }
  std::size_t total_stride() const { return std::size_t{1} << downsample_count(); }

  bool operator==(const StageSchedule&) const = default;
};

/// Three down-sampling stages at 32x32, about 0.15 M parameters.
inline StageSchedule micro_schedule() {
  return StageSchedule{StemSpec{16, 3, false, false},
                       {{2, 16, true}, {2, 32, true}, {2, 64, true}},
                       2};
}

/// ResNet50 topology: 7x7/2 stem, 2x2 max-pool, [3, 4, 6, 3] bottlenecks.
inline StageSchedule resnet50_schedule() {
  return StageSchedule{StemSpec{64, 7, true, true},
                       {{3, 64, false}, {4, 128, true}, {6, 256, true}, {3, 512, true}},
                       4};
}

/// Bottom-heavy re-allocation: moves `shift` blocks out of the deepest stage
/// into the first stages (round robin over stages 1 and 2), so every later
/// down-sampling happens `shift` blocks deeper while the number and
/// placement of resolution changes stay fixed.
inline StageSchedule bottom_heavy(const StageSchedule& schedule, std::size_t shift = 2) {
  if (schedule.stages.size() < 2) {
    throw Error(ErrorCode::InvalidConfig, "bottom_heavy needs at least two stages");
  }
  StageSchedule out = schedule;
  StageSpec& deepest = out.stages.back();
  if (shift >= deepest.blocks) {
    throw Error(ErrorCode::InvalidConfig,
                "bottom_heavy shift " + std::to_string(shift) + " leaves no block in the deepest stage (" +
                    std::to_string(deepest.blocks) + " blocks)");
  }
  deepest.blocks -= shift;
  const std::size_t targets = std::min<std::size_t>(2, out.stages.size() - 1);
  for (std::size_t i = 0; i < shift; ++i) out.stages[i % targets].blocks += 1;
  return out;
}

/// Convolution followed by batchnorm; the unit every block is made of.
struct ConvBn {
  std::string name;
  Parameter weight;
  Parameter gamma;
  Parameter beta;
  BatchNormStats stats;

  ConvBn() = default;
  ConvBn(std::string unit_name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel, Rng& rng)
      : name(std::move(unit_name)),
        weight(name + ".weight",
               kaiming_uniform({out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, rng)),
        gamma(name + ".bn.gamma", Tensor({out_ch}, 1.0)),
        beta(name + ".bn.beta", Tensor({out_ch}, 0.0)),
        stats(out_ch) {}

  std::size_t in_channels() const { return weight.tensor.dim(1); }
  std::size_t out_channels() const { return weight.tensor.dim(0); }
  std::size_t kernel() const { return weight.tensor.dim(2); }

  Tensor conv(const Tensor& x, std::size_t stride) const {
    return conv2d(x, weight.tensor, stride, Padding::Circular);
  }
  Tensor bn(const Tensor& x, bool training) {
    return batchnorm2d(x, gamma.tensor, beta.tensor, stats, training);
  }

  void collect(std::vector<std::reference_wrapper<Parameter>>& out) {
    out.emplace_back(weight);
    out.emplace_back(gamma);
    out.emplace_back(beta);
  }
};

namespace detail {

inline void check_pool_variant(const PoolKind& pool, BlockOrderVariant variant) {
  const bool strided = pool.kind == PoolKind::Kind::StridedConv;
  if (strided != (variant == BlockOrderVariant::Original)) {
    throw Error(ErrorCode::InvalidConfig,
                "variant (" + to_string(variant) + ") cannot be combined with pool '" + to_string(pool) +
                    "': the original block uses stride-2 convolutions, (b) and (c) need a pooling operator");
  }
}

}  // namespace detail

/// 1x1 reduce -> 3x3 -> 1x1 expand bottleneck with a projection shortcut
/// whenever the shape changes.
class BottleneckBlock {
 public:
  BottleneckBlock(std::string name, std::size_t in_ch, std::size_t mid_ch, std::size_t out_ch,
                  bool downsample, PoolKind pool, BlockOrderVariant variant, Rng& rng)
      : name_(std::move(name)),
        downsample_(downsample),
        pool_(std::move(pool)),
        variant_(variant),
        reduce_(name_ + ".reduce", in_ch, mid_ch, 1, rng),
        spatial_(name_ + ".spatial", mid_ch, mid_ch, 3, rng),
        expand_(name_ + ".expand", mid_ch, out_ch, 1, rng) {
    if (downsample || in_ch != out_ch) projection_.emplace(name_ + ".projection", in_ch, out_ch, 1, rng);
  }

  const std::string& name() const { return name_; }
  bool downsample() const { return downsample_; }
  const PoolKind& pool() const { return pool_; }
  BlockOrderVariant variant() const { return variant_; }
  const ConvBn& reduce() const { return reduce_; }
  const ConvBn& spatial() const { return spatial_; }
  const ConvBn& expand() const { return expand_; }
  const std::optional<ConvBn>& projection() const { return projection_; }
  std::size_t in_channels() const { return reduce_.in_channels(); }
  std::size_t out_channels() const { return expand_.out_channels(); }

  Tensor main_path(const Tensor& x, bool training) {
    Tensor a = relu(reduce_.bn(reduce_.conv(x, 1), training));
    Tensor b;
    if (!downsample_) {
      b = spatial_.conv(a, 1);
    } else if (variant_ == BlockOrderVariant::Original) {
      b = spatial_.conv(a, 2);
    } else {
      b = wavepool::pool(spatial_.conv(a, 1), pool_);
    }
    b = relu(spatial_.bn(b, training));
    return expand_.bn(expand_.conv(b, 1), training);
  }

  /// Shortcut before batchnorm; exposes where (b) and (c) differ.
  Tensor skip_conv_path(const Tensor& x) const {
    if (!projection_) return x;
    if (!downsample_) return projection_->conv(x, 1);
    switch (variant_) {
      case BlockOrderVariant::Original: return projection_->conv(x, 2);
      case BlockOrderVariant::PoolBeforeConvSkip: return projection_->conv(wavepool::pool(x, pool_), 1);
      case BlockOrderVariant::ConsistentPoolAfterConv: return wavepool::pool(projection_->conv(x, 1), pool_);
    }
    return x;
  }

  Tensor skip_path(const Tensor& x, bool training) {
    if (!projection_) return x;
    return projection_->bn(skip_conv_path(x), training);
  }

  Tensor forward(const Tensor& x, bool training) {
    return relu(add(main_path(x, training), skip_path(x, training)));
  }

  void collect(std::vector<std::reference_wrapper<Parameter>>& out) {
    reduce_.collect(out);
    spatial_.collect(out);
    expand_.collect(out);
    if (projection_) projection_->collect(out);
  }

  void collect_stats(std::vector<ConvBn*>& out) {
    for (ConvBn* unit : {&reduce_, &spatial_, &expand_}) out.push_back(unit);
    if (projection_) out.push_back(&*projection_);
  }

 private:
  std::string name_;
  bool downsample_;
  PoolKind pool_;
  BlockOrderVariant variant_;
  ConvBn reduce_, spatial_, expand_;
  std::optional<ConvBn> projection_;
};

inline BottleneckBlock build_block(std::size_t in_ch, std::size_t out_ch, bool downsample,
                                   const PoolKind& pool, BlockOrderVariant variant, Rng& rng,
                                   std::size_t expansion = 4, std::string name = "block") {
  if (in_ch == 0 || out_ch == 0 || expansion == 0 || out_ch % expansion != 0) {
    throw Error(ErrorCode::InvalidConfig, "block channels must be positive and divisible by the expansion");
  }
  detail::check_pool_variant(pool, variant);
  return BottleneckBlock(std::move(name), in_ch, out_ch / expansion, out_ch, downsample, pool, variant, rng);
}

struct NetworkConfig {
  StageSchedule schedule = micro_schedule();
  PoolKind pool = PoolKind::wavelet_pool(make_haar());
  BlockOrderVariant variant = BlockOrderVariant::ConsistentPoolAfterConv;
  std::size_t num_classes = 10;
  std::size_t input_channels = 3;
  std::size_t input_height = 32;
  std::size_t input_width = 32;
  std::vector<double> input_mean;  // fixed per-channel standardization; empty = identity
  std::vector<double> input_std;
};

/// stem -> bottleneck stages -> global average pool -> linear classifier.
class Network {
 public:
  Network(NetworkConfig config, std::uint64_t seed) : config_(std::move(config)) {
    detail::check_pool_variant(config_.pool, config_.variant);
    validate_geometry(config_.input_height, config_.input_width);
    const auto& sched = config_.schedule;
    if (sched.stages.empty()) throw Error(ErrorCode::InvalidConfig, "schedule has no stages");
    if (config_.num_classes == 0) throw Error(ErrorCode::InvalidConfig, "num_classes must be positive");
    const std::size_t c = config_.input_channels;
    if (config_.input_mean.empty()) config_.input_mean.assign(c, 0.0);
    if (config_.input_std.empty()) config_.input_std.assign(c, 1.0);
    if (config_.input_mean.size() != c || config_.input_std.size() != c) {
      throw Error(ErrorCode::InvalidConfig, "input normalization needs one mean/std per channel");
    }
    for (double s : config_.input_std) {
      if (!(s > 0.0)) throw Error(ErrorCode::InvalidConfig, "input std must be positive");
    }

    Rng rng(seed);
    stem_ = ConvBn("stem", c, sched.stem.channels, sched.stem.kernel, rng);
    std::size_t channels = sched.stem.channels;
    for (std::size_t s = 0; s < sched.stages.size(); ++s) {
      const StageSpec& stage = sched.stages[s];
      if (stage.blocks == 0 || stage.width == 0) {
        throw Error(ErrorCode::InvalidConfig, "stage " + std::to_string(s + 1) + " is empty");
      }
      const std::size_t out_ch = stage.width * sched.expansion;
      for (std::size_t b = 0; b < stage.blocks; ++b) {
        const std::string name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
        blocks_.push_back(build_block(channels, out_ch, b == 0 && stage.downsample, config_.pool,
                                      config_.variant, rng, sched.expansion, name));
        channels = out_ch;
      }
    }
    fc_weight_ = Parameter("fc.weight", kaiming_uniform({config_.num_classes, channels}, channels, rng));
    fc_bias_ = Parameter("fc.bias", Tensor({config_.num_classes}, 0.0));
  }

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  const NetworkConfig& config() const { return config_; }
  const ConvBn& stem() const { return stem_; }
  std::vector<BottleneckBlock>& blocks() { return blocks_; }
  const std::vector<BottleneckBlock>& blocks() const { return blocks_; }
  const Parameter& fc_weight() const { return fc_weight_; }
  const Parameter& fc_bias() const { return fc_bias_; }

  /// Throws InvalidConfig naming the first layer that would see an odd size.
  void validate_geometry(std::size_t height, std::size_t width) const {
    const auto& sched = config_.schedule;
    auto halve = [&](const std::string& where) {
      if (height % 2 != 0 || width % 2 != 0) {
        throw Error(ErrorCode::InvalidConfig, where + " receives odd spatial size " + std::to_string(height) +
                                                  "x" + std::to_string(width));
      }
      height /= 2;
      width /= 2;
    };
    if (height == 0 || width == 0) throw Error(ErrorCode::InvalidConfig, "empty input size");
    if (sched.stem.conv_downsample) halve("stem");
    if (sched.stem.pool_downsample) halve("stem.pool");
    for (std::size_t s = 0; s < sched.stages.size(); ++s) {
      if (sched.stages[s].downsample) halve("stage" + std::to_string(s + 1) + ".block1");
    }
  }

  Tensor forward(const Tensor& x, bool training) {
    if (x.rank() != 4 || x.dim(1) != config_.input_channels) {
      throw Error(ErrorCode::ShapeMismatch, "network input must be N x " +
                                                std::to_string(config_.input_channels) + " x H x W, got " +
                                                shape_string(x.shape()));
    }
    validate_geometry(x.dim(2), x.dim(3));
    std::vector<double> mul(config_.input_channels), shift(config_.input_channels);
    for (std::size_t c = 0; c < mul.size(); ++c) {
      mul[c] = 1.0 / config_.input_std[c];
      shift[c] = -config_.input_mean[c] / config_.input_std[c];
    }
    Tensor h = channel_affine(x, mul, shift);
    h = stem_forward(h, training);
    for (auto& block : blocks_) h = block.forward(h, training);
    return linear(global_avg_pool(h), fc_weight_.tensor, fc_bias_.tensor);
  }

  /// Every trainable tensor in a stable, name-addressable order.
  std::vector<std::reference_wrapper<Parameter>> parameters() {
    std::vector<std::reference_wrapper<Parameter>> out;
    stem_.collect(out);
    for (auto& block : blocks_) block.collect(out);
    out.emplace_back(fc_weight_);
    out.emplace_back(fc_bias_);
    return out;
  }

  /// Every conv-bn unit, for running-statistics checkpointing.
  std::vector<ConvBn*> units() {
    std::vector<ConvBn*> out{&stem_};
    for (auto& block : blocks_) block.collect_stats(out);
    return out;
  }

 private:
  Tensor stem_forward(const Tensor& x, bool training) {
    const auto& stem = config_.schedule.stem;
    const bool strided = config_.pool.kind == PoolKind::Kind::StridedConv;
    Tensor h;
    if (stem.conv_downsample && strided) {
      h = stem_.conv(x, 2);
    } else if (stem.conv_downsample) {
      h = pool(stem_.conv(x, 1), config_.pool);
    } else {
      h = stem_.conv(x, 1);
    }
    h = relu(stem_.bn(h, training));
    if (stem.pool_downsample) h = strided ? max_pool2(h) : pool(h, config_.pool);
    return h;
  }

  NetworkConfig config_;
  ConvBn stem_;
  std::vector<BottleneckBlock> blocks_;
  Parameter fc_weight_;
  Parameter fc_bias_;
};

inline Network build_network(const StageSchedule& schedule, const PoolKind& pool,
                             BlockOrderVariant variant, std::size_t num_classes, std::uint64_t seed = 0,
                             std::size_t input_height = 32, std::size_t input_width = 32) {
  NetworkConfig config;
  config.schedule = schedule;
  config.pool = pool;
  config.variant = variant;
  config.num_classes = num_classes;
  config.input_height = input_height;
  config.input_width = input_width;
  return Network(std::move(config), seed);
}

// ---------------------------------------------------------------------------
// Parameter and FLOP accounting
//
// FLOP convention (bit-reproducible):
//   conv / linear      2 per multiply-accumulate; linear adds 1 per bias
//   batchnorm, input   2 per element (scale and shift)
//   relu, residual add 1 per element
//   pooling            1 per output element per tap of the 2D window
//                      (2x2 for max/avg, k x k for blur, L x L for a
//                      wavelet with low-pass length L)
//   global avg pool    1 per input element

struct LayerCost {
  std::string name;
  std::string kind;
  Shape output;  // C x H x W, batch 1
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

/// FLOPs per pooled output element: linear pools count a multiply-add per
/// tap, max pooling one comparison per tap, subsampling one copy.
inline std::uint64_t pool_flops(const PoolKind& pool) {
  switch (pool.kind) {
    case PoolKind::Kind::MaxPool2: return 4;
    case PoolKind::Kind::AvgPool2: return 2 * 4;
    case PoolKind::Kind::StridedConv: return 1;
    case PoolKind::Kind::BlurPool: return 2 * pool.blur_kernel.size() * pool.blur_kernel.size();
    case PoolKind::Kind::WaveletPool:
      return 2 * pool.wavelet->analysis_low.size() * pool.wavelet->analysis_low.size();
  }
  return 0;
}

/// Cost of one bias-free k x k convolution with "same" padding.
inline LayerCost conv_cost(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
                           std::size_t height, std::size_t width) {
  const std::uint64_t params = static_cast<std::uint64_t>(out_ch) * in_ch * kernel * kernel;
  const std::size_t oh = height / stride, ow = width / stride;
  return LayerCost{"conv", "conv" + std::to_string(kernel) + "x" + std::to_string(kernel) + "/" + std::to_string(stride),
                   {out_ch, oh, ow}, params, 2 * params * oh * ow};
}

namespace detail {

class CostTracer {
 public:
  CostTracer(std::size_t c, std::size_t h, std::size_t w) : c_(c), h_(h), w_(w) {}

  std::vector<LayerCost> layers;

  std::size_t channels() const { return c_; }
  std::uint64_t elements() const { return static_cast<std::uint64_t>(c_) * h_ * w_; }

  void conv(const std::string& name, std::size_t out_ch, std::size_t kernel, std::size_t stride) {
    LayerCost cost = conv_cost(c_, out_ch, kernel, stride, h_, w_);
    cost.name = name;
    c_ = out_ch;
    h_ /= stride;
    w_ /= stride;
    layers.push_back(std::move(cost));
  }
  void bn(const std::string& name) { push(name, "batchnorm", 2 * static_cast<std::uint64_t>(c_), 2 * elements()); }
  void relu(const std::string& name) { push(name, "relu", 0, elements()); }
  void add(const std::string& name) { push(name, "add", 0, elements()); }
  void affine(const std::string& name) { push(name, "input-affine", 0, 2 * elements()); }
  void pool(const std::string& name, const PoolKind& kind) {
    h_ /= 2;
    w_ /= 2;
    push(name, to_string(kind), 0, pool_flops(kind) * elements());
  }
  void global_pool(const std::string& name) {
    const std::uint64_t in = elements();
    h_ = w_ = 1;
    push(name, "global-avg-pool", 0, in);
  }
  void fc(const std::string& name, std::size_t out) {
    const std::uint64_t weights = static_cast<std::uint64_t>(out) * c_;
    c_ = out;
    push(name, "linear", weights + out, 2 * weights + out);
  }

  // Shortcut branches restart from the block input.
  struct State {
    std::size_t c, h, w;
  };
  State state() const { return {c_, h_, w_}; }
  void restore(State s) {
    c_ = s.c;
    h_ = s.h;
    w_ = s.w;
  }

 private:
  void push(const std::string& name, std::string kind, std::uint64_t params, std::uint64_t flops) {
    layers.push_back(LayerCost{name, std::move(kind), {c_, h_, w_}, params, flops});
  }

  std::size_t c_, h_, w_;
};

}  // namespace detail

/// Layer-by-layer parameter and FLOP table for a batch-1 input of h x w.
inline std::vector<LayerCost> profile(const Network& model, std::size_t height, std::size_t width) {
  model.validate_geometry(height, width);
  const auto& cfg = model.config();
  const auto& stem = cfg.schedule.stem;
  const bool strided = cfg.pool.kind == PoolKind::Kind::StridedConv;
  detail::CostTracer t(cfg.input_channels, height, width);

  t.affine("input");
  if (stem.conv_downsample && strided) {
    t.conv("stem", stem.channels, stem.kernel, 2);
  } else {
    t.conv("stem", stem.channels, stem.kernel, 1);
    if (stem.conv_downsample) t.pool("stem.pool", cfg.pool);
  }
  t.bn("stem.bn");
  t.relu("stem.relu");
  if (stem.pool_downsample) t.pool("stem.maxpool", strided ? PoolKind::max() : cfg.pool);

  for (const auto& block : model.blocks()) {
    const std::string& n = block.name();
    const auto input = t.state();
    const bool ds = block.downsample();
    const bool original = block.variant() == BlockOrderVariant::Original;

    t.conv(n + ".reduce", block.reduce().out_channels(), 1, 1);
    t.bn(n + ".reduce.bn");
    t.relu(n + ".reduce.relu");
    t.conv(n + ".spatial", block.spatial().out_channels(), 3, ds && original ? 2 : 1);
    if (ds && !original) t.pool(n + ".spatial.pool", block.pool());
    t.bn(n + ".spatial.bn");
    t.relu(n + ".spatial.relu");
    t.conv(n + ".expand", block.expand().out_channels(), 1, 1);
    t.bn(n + ".expand.bn");
    const auto main_out = t.state();

    if (block.projection()) {
      t.restore(input);
      const std::size_t out_ch = block.projection()->out_channels();
      if (!ds) {
        t.conv(n + ".projection", out_ch, 1, 1);
      } else if (original) {
        t.conv(n + ".projection", out_ch, 1, 2);
      } else if (block.variant() == BlockOrderVariant::PoolBeforeConvSkip) {
        t.pool(n + ".projection.pool", block.pool());
        t.conv(n + ".projection", out_ch, 1, 1);
      } else {
        t.conv(n + ".projection", out_ch, 1, 1);
        t.pool(n + ".projection.pool", block.pool());
      }
      t.bn(n + ".projection.bn");
    }
    t.restore(main_out);
    t.add(n + ".add");
    t.relu(n + ".relu");
  }
  t.global_pool("head.pool");
  t.fc("head.fc", cfg.num_classes);
  return t.layers;
}

inline std::uint64_t count_params(const Network& model) {
  std::uint64_t total = model.stem().weight.tensor.numel() + 2 * model.stem().gamma.tensor.numel();
  auto unit = [](const ConvBn& u) -> std::uint64_t { return u.weight.tensor.numel() + 2 * u.gamma.tensor.numel(); };
  for (const auto& b : model.blocks()) {
    total += unit(b.reduce()) + unit(b.spatial()) + unit(b.expand());
    if (b.projection()) total += unit(*b.projection());
  }
  return total + model.fc_weight().tensor.numel() + model.fc_bias().tensor.numel();
}

inline std::uint64_t count_flops(const Network& model, std::size_t height, std::size_t width) {
  std::uint64_t total = 0;
  for (const auto& layer : profile(model, height, width)) total += layer.flops;
  return total;
}

}  // namespace wavepool
