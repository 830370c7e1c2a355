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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wavepool/error.hpp"

namespace wavepool {

struct Metric {
  std::string name;
  double value = 0.0;
  std::string unit;

  bool operator==(const Metric&) const = default;
};

/// Named scalar results plus the run metadata they came from.
struct MetricsReport {
  std::string name;
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_clock_seconds = 0.0;
  std::vector<Metric> metrics;

  void add(std::string metric, double value, std::string unit = "") {
    metrics.push_back({std::move(metric), value, std::move(unit)});
  }

  void append(const MetricsReport& other, const std::string& prefix = "") {
    for (const auto& m : other.metrics) metrics.push_back({prefix + m.name, m.value, m.unit});
  }

  std::optional<double> find(std::string_view metric) const {
    for (const auto& m : metrics) {
      if (m.name == metric) return m.value;
    }
    return std::nullopt;
  }

  double at(std::string_view metric) const {
    if (auto v = find(metric)) return *v;
    throw Error(ErrorCode::MissingArtifact, "report has no metric '" + std::string(metric) + "'");
  }

  /// Equal metrics and metadata, ignoring wall-clock time.
  bool same_results(const MetricsReport& other) const {
    return name == other.name && config_hash == other.config_hash && seed == other.seed &&
           metrics == other.metrics;
  }

  std::string to_csv() const {
    std::string out = "name,value,unit\n";
    for (const auto& m : metrics) out += m.name + "," + format_double(m.value) + "," + m.unit + "\n";
    return out;
  }

  static MetricsReport from_csv(const std::string& text) {
    MetricsReport r;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (line != "name,value,unit") throw Error(ErrorCode::UnsupportedFormat, "missing CSV header");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto a = line.find(','), b = line.rfind(',');
      if (a == std::string::npos || a == b) throw Error(ErrorCode::UnsupportedFormat, "bad CSV row: " + line);
      const std::string value = line.substr(a + 1, b - a - 1);
      double v = 0.0;
      if (std::from_chars(value.data(), value.data() + value.size(), v).ec != std::errc{}) {
        throw Error(ErrorCode::UnsupportedFormat, "bad CSV value: " + value);
      }
      r.add(line.substr(0, a), v, line.substr(b + 1));
    }
    return r;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["metadata"] = {{"config_hash", config_hash}, {"seed", seed}, {"wall_clock_seconds", wall_clock_seconds}};
    j["metrics"] = nlohmann::json::array();
    for (const auto& m : metrics) j["metrics"].push_back({{"name", m.name}, {"value", m.value}, {"unit", m.unit}});
    return j;
  }

  static MetricsReport from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.name = j.at("name").get<std::string>();
    const auto& meta = j.at("metadata");
    r.config_hash = meta.at("config_hash").get<std::string>();
    r.seed = meta.at("seed").get<std::uint64_t>();
    r.wall_clock_seconds = meta.at("wall_clock_seconds").get<double>();
    for (const auto& m : j.at("metrics")) {
      r.add(m.at("name").get<std::string>(), m.at("value").get<double>(), m.at("unit").get<std::string>());
    }
    return r;
  }

  /// Writes <dir>/<name>-<hash>.csv and .json, replacing earlier copies.
  std::filesystem::path write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    const std::string stem = name + (config_hash.empty() ? "" : "-" + config_hash);
    const auto base = dir / stem;
    std::ofstream(base.string() + ".csv", std::ios::trunc) << to_csv();
    std::ofstream(base.string() + ".json", std::ios::trunc) << to_json().dump(2) << "\n";
    return base;
  }

  static std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  }
};

}  // namespace wavepool
