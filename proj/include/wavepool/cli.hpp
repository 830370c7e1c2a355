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

// Command implementations behind tools/wavepool. Each returns what it wrote
// so the same code paths can be tested without spawning a process.

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "wavepool/analysis.hpp"
#include "wavepool/experiment.hpp"
#include "wavepool/image_io.hpp"

namespace wavepool::cli {

namespace fs = std::filesystem;

inline constexpr const char* kBandNames[4] = {"ll", "lh", "hl", "hh"};

/// Subband dump. Files in `out_dir`:
///   <stem>-{ll,lh,hl,hh}.pgm|ppm  16-bit, each channel rescaled from [min, max] to [0, 65535]
///   <stem>-lowpass.pgm|ppm        reconstruct_lowpass, 8-bit
///   <stem>-transform.json         wavelet, sizes, per-band energy and the [min, max] ranges
/// "ac" energies come from the mean-removed image.
inline nlohmann::json cmd_transform(const fs::path& input, const std::string& wavelet, const fs::path& out_dir) {
  const WaveletSpec spec = parse_wavelet(wavelet);
  const Image img = read_netpbm(input);
  const std::string stem = input.stem().string();
  const std::string ext = img.channels == 1 ? ".pgm" : ".ppm";
  const double tiny = 1e-9 * img.maxval;

  std::vector<SubbandSet> sets;
  Image lowpass{img.channels, img.height, img.width, img.maxval, {}};
  for (const Matrix& plane : img.planes) {
    sets.push_back(dwt2d(plane, spec));
    lowpass.planes.push_back(reconstruct_lowpass(plane, spec));
  }

  nlohmann::json summary;
  summary["input"] = input.filename().string();
  summary["wavelet"] = spec.name;
  summary["width"] = img.width;
  summary["height"] = img.height;
  summary["channels"] = img.channels;
  summary["maxval"] = img.maxval;

  double band_total = 0.0, ac_total = 0.0;
  std::array<double, 4> band_energy{}, ac_energy{};
  for (int b = 0; b < 4; ++b) {
    Image out{img.channels, img.height / 2, img.width / 2, 65535, {}};
    nlohmann::json ranges = nlohmann::json::array();
    for (SubbandSet& s : sets) {
      Matrix& m = b == 0 ? s.ll : b == 1 ? s.lh : b == 2 ? s.hl : s.hh;
      for (double& v : m.values) {
        if (std::abs(v) < tiny) v = 0.0;
      }
      band_energy[b] += energy(m);
      const auto [lo, hi] = std::minmax_element(m.values.begin(), m.values.end());
      const double span = *hi - *lo;
      Matrix q(m.rows, m.cols);
      if (span > 0.0) {
        for (std::size_t i = 0; i < m.values.size(); ++i) q.values[i] = (m.values[i] - *lo) / span * 65535.0;
      }
      out.planes.push_back(std::move(q));
      ranges.push_back({{"min", *lo}, {"max", *hi}});
    }
    band_total += band_energy[b];
    const std::string file = stem + "-" + kBandNames[b] + ext;
    write_netpbm(out_dir / file, out);
    summary["bands"][kBandNames[b]] = {{"file", file}, {"energy", band_energy[b]}, {"ranges", ranges}};
  }
  for (const Matrix& plane : img.planes) {
    Matrix centered = plane;
    const double mean = std::accumulate(plane.values.begin(), plane.values.end(), 0.0) /
                        static_cast<double>(plane.values.size());
    for (double& v : centered.values) v -= mean;
    const SubbandSet c = dwt2d(centered, spec);
    const Matrix* bands[4] = {&c.ll, &c.lh, &c.hl, &c.hh};
    for (int b = 0; b < 4; ++b) {
      double e = 0.0;
      for (double v : bands[b]->values) e += std::abs(v) < tiny ? 0.0 : v * v;
      ac_energy[b] += e;
      ac_total += e;
    }
  }
  for (int b = 0; b < 4; ++b) {
    auto& band = summary["bands"][kBandNames[b]];
    band["fraction"] = band_total > 0.0 ? band_energy[b] / band_total : 0.0;
    band["ac_energy"] = ac_energy[b];
    band["ac_fraction"] = ac_total > 0.0 ? ac_energy[b] / ac_total : 0.0;
  }
  double input_energy = 0.0;
  for (const Matrix& p : img.planes) input_energy += energy(p);
  summary["input_energy"] = input_energy;
  summary["band_energy"] = band_total;

  const std::string lp_file = stem + "-lowpass" + ext;
  write_netpbm(out_dir / lp_file, lowpass);
  double lp_energy = 0.0;
  for (const Matrix& p : lowpass.planes) lp_energy += energy(p);
  summary["lowpass"] = {{"file", lp_file}, {"energy", lp_energy}};

  std::ofstream(out_dir / (stem + "-transform.json"), std::ios::trunc) << summary.dump(2) << "\n";
  return summary;
}

/// Rebuilds the image from the files named in a transform summary.
inline Image cmd_inverse(const fs::path& summary_path) {
  std::ifstream in(summary_path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open " + summary_path.string());
  nlohmann::json summary;
  try {
    summary = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::UnsupportedFormat, summary_path.string() + ": " + e.what());
  }
  const WaveletSpec spec = parse_wavelet(summary.at("wavelet").get<std::string>());
  const fs::path dir = summary_path.parent_path();
  const std::size_t channels = summary.at("channels").get<std::size_t>();
  std::vector<SubbandSet> sets(channels);
  for (int b = 0; b < 4; ++b) {
    const auto& band = summary.at("bands").at(kBandNames[b]);
    const Image q = read_netpbm(dir / band.at("file").get<std::string>());
    if (q.channels != channels || q.maxval != 65535) {
      throw Error(ErrorCode::UnsupportedFormat, "subband image does not match the summary");
    }
    for (std::size_t c = 0; c < channels; ++c) {
      const double lo = band.at("ranges").at(c).at("min").get<double>();
      const double hi = band.at("ranges").at(c).at("max").get<double>();
      Matrix m = q.planes[c];
      for (double& v : m.values) v = lo + v / 65535.0 * (hi - lo);
      SubbandSet& s = sets[c];
      (b == 0 ? s.ll : b == 1 ? s.lh : b == 2 ? s.hl : s.hh) = std::move(m);
    }
  }
  Image img{channels, summary.at("height").get<std::size_t>(), summary.at("width").get<std::size_t>(),
            summary.at("maxval").get<std::uint32_t>(), {}};
  for (const SubbandSet& s : sets) img.planes.push_back(idwt2d(s, spec));
  return img;
}

/// Classes and input side implied by the data section, without loading pixels
/// when that can be avoided.
inline std::pair<std::size_t, std::size_t> data_geometry(const ExperimentConfig& cfg) {
  if (cfg.data_source == "synthetic") return {cfg.classes, cfg.image_size};
  if (cfg.data_source == "cifar100") return {100, 32};
  const ExperimentData data = load_experiment_data(cfg);
  return {data.train.class_count, data.train.height()};
}

struct CountResult {
  std::vector<LayerCost> layers;
  MetricsReport report;
};

/// height/width 0 means the configured data size.
inline CountResult cmd_count(const ExperimentConfig& cfg, std::size_t height = 0, std::size_t width = 0) {
  validate_config(cfg);
  const auto [classes, side] = data_geometry(cfg);
  if (height == 0) height = side;
  if (width == 0) width = side;
  NetworkConfig n = network_config(cfg, cfg.pool, cfg.variant, classes, 32);
  n.input_height = height;
  n.input_width = width;
  Network model(std::move(n), 0);
  CountResult r;
  r.layers = profile(model, height, width);
  r.report.name = "count-" + std::to_string(height) + "x" + std::to_string(width);
  r.report.config_hash = config_hash(cfg);
  r.report.seed = cfg.seed;
  r.report.add("model.params", static_cast<double>(count_params(model)), "count");
  r.report.add("model.flops", static_cast<double>(count_flops(model, height, width)), "flops");
  r.report.add("input.height", static_cast<double>(height), "px");
  r.report.add("input.width", static_cast<double>(width), "px");
  return r;
}

inline std::string format_layer_table(const std::vector<LayerCost>& layers) {
  std::ostringstream out;
  out << std::left << std::setw(28) << "layer" << std::setw(12) << "kind" << std::setw(16) << "output"
      << std::right << std::setw(12) << "params" << std::setw(16) << "flops" << "\n";
  std::uint64_t params = 0, flops = 0;
  for (const LayerCost& l : layers) {
    std::string shape;
    for (std::size_t i = 0; i < l.output.size(); ++i) shape += (i ? "x" : "") + std::to_string(l.output[i]);
    out << std::left << std::setw(28) << l.name << std::setw(12) << l.kind << std::setw(16) << shape << std::right
        << std::setw(12) << l.params << std::setw(16) << l.flops << "\n";
    params += l.params;
    flops += l.flops;
  }
  out << std::left << std::setw(56) << "total" << std::right << std::setw(12) << params << std::setw(16) << flops
      << "\n";
  return out.str();
}

/// Report named alias-<pool>, hashed over the pool and frequency list.
inline MetricsReport cmd_alias(const std::string& pool, const std::vector<std::string>& freqs, std::size_t n = 64) {
  const PoolKind kind = parse_pool_kind(pool);
  std::vector<double> omegas;
  std::string key = to_string(kind);
  for (const std::string& f : freqs) {
    omegas.push_back(parse_frequency(f));
    key += "|" + MetricsReport::format_double(omegas.back());
  }
  MetricsReport r = alias_energy_sweep(kind, omegas, n);
  std::string safe = to_string(kind);
  std::ranges::replace(safe, ':', '_');
  r.name = "alias-" + safe;
  r.config_hash = hash_text(key + "|" + std::to_string(n));
  return r;
}

inline MetricsReport cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint) {
  return evaluate_checkpoint(cfg, checkpoint);
}

/// Test-split shift consistency of a checkpoint; samples 0 means all.
inline MetricsReport cmd_consistency(const ExperimentConfig& cfg, const fs::path& checkpoint, ShiftOptions opt,
                                     std::size_t samples = 0) {
  validate_config(cfg);
  const ExperimentData data = load_experiment_data(cfg);
  Network model = build_experiment_model(cfg, data.train, cfg.pool, cfg.variant, 0);
  load_checkpoint(model, checkpoint);
  const std::size_t n = samples == 0 ? data.test.size() : std::min(samples, data.test.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  MetricsReport r = shift_consistency(model, data.test.gather(idx), opt);
  r.config_hash = config_hash(cfg);
  r.seed = cfg.seed;
  return r;
}

/// Runs independent configs on up to `jobs` threads; reports keep input order.
inline std::vector<MetricsReport> cmd_train(const std::vector<ExperimentConfig>& configs, std::size_t jobs,
                                            const std::function<void(const std::string&)>& log = {}) {
  for (const auto& cfg : configs) validate_config(cfg);
  std::vector<MetricsReport> reports(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::mutex log_mutex;
  RunOptions opt;
  if (log) {
    opt.log = [&](const std::string& line) {
      std::lock_guard lock(log_mutex);
      log(line);
    };
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        reports[i] = run_experiment(configs[i], opt);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(configs.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return reports;
}

}  // namespace wavepool::cli
