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

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <string>

#include "wavepool/analysis.hpp"
#include "wavepool/backbone.hpp"
#include "wavepool/checkpoint.hpp"
#include "wavepool/config.hpp"
#include "wavepool/data.hpp"
#include "wavepool/metrics.hpp"
#include "wavepool/optim.hpp"

namespace wavepool {

struct ExperimentData {
  LabeledImageSet train;
  LabeledImageSet test;
};

/// Explicit path first, then $WAVEPOOL_DATA_DIR.
inline std::filesystem::path resolve_data_root(const ExperimentConfig& cfg) {
  if (!cfg.data_path.empty()) return cfg.data_path;
  if (const char* env = std::getenv("WAVEPOOL_DATA_DIR"); env != nullptr && *env != '\0') return env;
  throw Error(ErrorCode::DatasetNotFound, "no data path configured and WAVEPOOL_DATA_DIR is unset");
}

inline ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  if (cfg.data_source == "synthetic") {
    TinyObjectConfig t;
    t.image_size = cfg.image_size;
    t.object_size = cfg.object_size;
    t.classes = cfg.classes;
    t.seed = cfg.data_seed;
    auto [train, test] = make_tiny_object_splits(t, cfg.train_size, cfg.test_size);
    return {std::move(train), std::move(test)};
  }
  const auto root = resolve_data_root(cfg);
  if (!std::filesystem::is_directory(root)) {
    throw Error(ErrorCode::DatasetNotFound, "dataset directory not found: " + root.string());
  }
  if (cfg.data_source == "cifar100") return {load_cifar100(root, "train"), load_cifar100(root, "test")};
  if (cfg.data_source == "file") {
    return {import_image_set(root / "train.wpds"), import_image_set(root / "test.wpds")};
  }
  throw Error(ErrorCode::InvalidConfig, "unknown data source '" + cfg.data_source + "'");
}

inline StageSchedule experiment_schedule(const ExperimentConfig& cfg) {
  StageSchedule s;
  if (cfg.schedule == "micro") {
    s = micro_schedule();
  } else if (cfg.schedule == "resnet50") {
    s = resnet50_schedule();
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown schedule '" + cfg.schedule + "'");
  }
  return cfg.bottom_heavy_shift > 0 ? bottom_heavy(s, cfg.bottom_heavy_shift) : s;
}

inline NetworkConfig network_config(const ExperimentConfig& cfg, const std::string& pool, const std::string& variant,
                                    std::size_t classes, std::size_t side) {
  NetworkConfig n;
  n.schedule = experiment_schedule(cfg);
  try {
    n.pool = parse_pool_kind(pool);
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("pool: ") + e.what());
  }
  n.variant = parse_variant(variant);
  n.num_classes = classes;
  n.input_height = n.input_width = side;
  return n;
}

/// Normalization constants come from the training split.
inline Network build_experiment_model(const ExperimentConfig& cfg, const LabeledImageSet& train,
                                      const std::string& pool, const std::string& variant, std::uint64_t seed) {
  NetworkConfig n = network_config(cfg, pool, variant, train.class_count, train.height());
  if (train.height() != train.width()) throw Error(ErrorCode::InvalidConfig, "images must be square");
  std::tie(n.input_mean, n.input_std) = channel_statistics(train);
  return Network(std::move(n), seed);
}

/// The freshly initialized model a run with this config starts from.
inline Network make_initial_model(const ExperimentConfig& cfg, const LabeledImageSet& train) {
  Rng root(cfg.seed);
  return build_experiment_model(cfg, train, cfg.pool, cfg.variant, root.next_u64());
}

struct LrPlan {
  int epochs;
  std::string kind;
  std::vector<int> milestones;
  double factor;

  double at(const ExperimentConfig& cfg, int epoch) const {
    if (kind == "step") return step_decay(cfg.lr, milestones, factor, epoch);
    if (kind == "cosine") return cosine(cfg.lr, cfg.lr_min, cfg.period, epoch);
    return cfg.lr;
  }
};

/// Short schedule: ten epochs, learning rate divided by ten at 3, 6 and 9.
inline LrPlan lr_plan(const ExperimentConfig& cfg) {
  if (cfg.mode != TrainMode::Plain) return {10, "step", {3, 6, 9}, 0.1};
  return {cfg.epochs, cfg.lr_schedule, cfg.milestones, cfg.factor};
}

inline void validate_config(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (!(cfg.lr > 0.0)) fail("lr must be positive");
  if (cfg.epochs < 1) fail("epochs must be at least 1");
  if (cfg.batch_size == 0) fail("batch_size must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (cfg.weight_decay < 0.0) fail("weight_decay must be non-negative");
  if (!(cfg.factor > 0.0 && cfg.factor <= 1.0)) fail("factor must lie in (0, 1]");
  if (cfg.lr_schedule != "step" && cfg.lr_schedule != "cosine" && cfg.lr_schedule != "constant") {
    fail("optimizer schedule must be step, cosine or constant");
  }
  if (cfg.lr_schedule == "cosine" && cfg.period <= 0) fail("cosine period must be positive");
  if (cfg.mode == TrainMode::Kd && !(cfg.temperature > 0.0)) fail("kd temperature must be positive");
  if (cfg.mode == TrainMode::Kd && !(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) fail("kd alpha must lie in [0, 1]");
  if (cfg.data_source != "synthetic" && cfg.data_source != "cifar100" && cfg.data_source != "file") {
    fail("data source must be synthetic, cifar100 or file, got '" + cfg.data_source + "'");
  }
  const NetworkConfig n = network_config(cfg, cfg.pool, cfg.variant, 2, 32);
  detail::check_pool_variant(n.pool, n.variant);
  if (cfg.mode == TrainMode::Kd) {
    const NetworkConfig t = network_config(cfg, cfg.teacher_pool, cfg.teacher_variant, 2, 32);
    detail::check_pool_variant(t.pool, t.variant);
  }
}

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

inline EvalResult evaluate(Network& model, const LabeledImageSet& set, std::size_t batch = 250) {
  NoGradGuard no_grad;
  EvalResult r;
  std::vector<std::size_t> idx;
  for (std::size_t b0 = 0; b0 < set.size(); b0 += batch) {
    idx.clear();
    for (std::size_t i = b0; i < std::min(set.size(), b0 + batch); ++i) idx.push_back(i);
    const auto labels = set.gather_labels(idx);
    const Tensor logits = model.forward(set.gather(idx), false);
    r.loss += softmax_cross_entropy(logits, labels).item() * static_cast<double>(idx.size());
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (argmax(logits.values().subspan(i * k, k)) == static_cast<std::size_t>(labels[i])) r.accuracy += 1.0;
    }
  }
  r.accuracy /= static_cast<double>(set.size());
  r.loss /= static_cast<double>(set.size());
  return r;
}

inline std::filesystem::path run_directory(const ExperimentConfig& cfg) {
  return std::filesystem::path(cfg.output_dir) / (cfg.name + "-" + config_hash(cfg));
}

struct RunOptions {
  bool write_outputs = true;
  std::function<void(const std::string&)> log;
};

/// Trains the configured model and evaluates it after every epoch.
/// Writes <run dir>/train-<hash>.{csv,json} and <run dir>/checkpoint.bin.
inline MetricsReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  validate_config(cfg);
  const ExperimentData data = load_experiment_data(cfg);
  const LrPlan plan = lr_plan(cfg);

  Rng root(cfg.seed);
  root.next_u64();
  Rng order = root.split();
  Network model = make_initial_model(cfg, data.train);

  std::optional<Network> teacher;
  if (cfg.mode == TrainMode::Kd) {
    if (cfg.teacher.empty() || !std::filesystem::is_regular_file(cfg.teacher)) {
      throw Error(ErrorCode::MissingArtifact, "kd mode needs a teacher checkpoint, not found: '" + cfg.teacher + "'");
    }
    teacher.emplace(build_experiment_model(cfg, data.train, cfg.teacher_pool, cfg.teacher_variant, 0));
    load_checkpoint(*teacher, cfg.teacher);
  }

  MetricsReport report;
  report.name = "train";
  report.config_hash = config_hash(cfg);
  report.seed = cfg.seed;
  const auto dir = run_directory(cfg);

  auto params = model.parameters();
  const std::size_t n = data.train.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  EvalResult test;
  double train_loss = 0.0;

  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    const SgdOptions sgd{plan.at(cfg, epoch), cfg.momentum, cfg.weight_decay};
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[order.below(i)]);
    double loss_sum = 0.0, correct = 0.0;
    for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
      const std::span<const std::size_t> idx(perm.data() + b0, std::min(cfg.batch_size, n - b0));
      const Tensor x = data.train.gather(idx);
      const auto labels = data.train.gather_labels(idx);
      Tensor teacher_logits;
      if (teacher) {
        NoGradGuard no_grad;
        teacher_logits = teacher->forward(x, false);
        if (epoch == 0 && b0 == 0) {
          const Tensor student_eval = model.forward(x, false);
          report.add("kd.initial_soft_term", kd_loss(student_eval, teacher_logits, labels, cfg.temperature, 0.0).item(),
                     "nats");
        }
      }
      zero_grad(params);
      const Tensor logits = model.forward(x, true);
      const Tensor loss = teacher ? kd_loss(logits, teacher_logits, labels, cfg.temperature, cfg.alpha)
                                  : softmax_cross_entropy(logits, labels);
      backward(loss);
      sgd_step(params, sgd);
      loss_sum += loss.item() * static_cast<double>(idx.size());
      const std::size_t k = logits.dim(1);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (argmax(logits.values().subspan(i * k, k)) == static_cast<std::size_t>(labels[i])) correct += 1.0;
      }
    }
    train_loss = loss_sum / static_cast<double>(n);
    test = evaluate(model, data.test);
    const std::string e = "epoch" + std::to_string(epoch + 1) + ".";
    report.add(e + "lr", sgd.lr, "");
    report.add(e + "train_loss", train_loss, "nats");
    report.add(e + "train_accuracy", correct / static_cast<double>(n), "fraction");
    report.add(e + "test_loss", test.loss, "nats");
    report.add(e + "test_accuracy", test.accuracy, "fraction");
    if (opt.write_outputs) save_checkpoint(model, dir / "checkpoint.bin");
    if (opt.log) {
      opt.log(cfg.name + " epoch " + std::to_string(epoch + 1) + "/" + std::to_string(plan.epochs) +
              " lr " + MetricsReport::format_double(sgd.lr) + " train_loss " +
              MetricsReport::format_double(train_loss) + " test_acc " + MetricsReport::format_double(test.accuracy));
    }
  }
  report.add("final.train_loss", train_loss, "nats");
  report.add("final.test_loss", test.loss, "nats");
  report.add("final.test_accuracy", test.accuracy, "fraction");
  report.add("model.params", static_cast<double>(count_params(model)), "count");
  report.add("model.flops", static_cast<double>(count_flops(model, data.train.height(), data.train.width())),
             "flops");
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (opt.write_outputs) report.write(dir);
  return report;
}

/// Test-split accuracy and loss of a stored checkpoint.
inline MetricsReport evaluate_checkpoint(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint) {
  validate_config(cfg);
  const ExperimentData data = load_experiment_data(cfg);
  Network model = build_experiment_model(cfg, data.train, cfg.pool, cfg.variant, 0);
  load_checkpoint(model, checkpoint);
  const EvalResult r = evaluate(model, data.test);
  MetricsReport report;
  report.name = "eval";
  report.config_hash = config_hash(cfg);
  report.seed = cfg.seed;
  report.add("eval.test_accuracy", r.accuracy, "fraction");
  report.add("eval.test_loss", r.loss, "nats");
  return report;
}

}  // namespace wavepool
