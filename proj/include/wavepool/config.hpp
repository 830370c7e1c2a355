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

// Experiment files are line-oriented:
//
//   # comment
//   [section]
//   key = value
//
// Every key has a default; unknown sections or keys are rejected.
// serialize() prints every key in a fixed order (the canonical form).

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "wavepool/error.hpp"
#include "wavepool/metrics.hpp"

namespace wavepool {

enum class TrainMode { Plain, Short, Kd };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Plain: return "plain";
    case TrainMode::Short: return "short";
    case TrainMode::Kd: return "kd";
  }
  return "?";
}

struct ExperimentConfig {
  // [experiment]
  std::string name = "experiment";
  TrainMode mode = TrainMode::Plain;
  std::uint64_t seed = 0;
  std::string output_dir = "runs";

  // [data]
  std::string data_source = "synthetic";  // synthetic | cifar100 | file
  std::string data_path;                  // empty: $WAVEPOOL_DATA_DIR
  std::size_t train_size = 2000;
  std::size_t test_size = 500;
  std::size_t image_size = 32;
  std::size_t object_size = 4;
  std::size_t classes = 4;
  std::uint64_t data_seed = 1;

  // [model]
  std::string schedule = "micro";  // micro | resnet50
  std::size_t bottom_heavy_shift = 0;
  std::string pool = "wavelet:haar";
  std::string variant = "c";

  // [optimizer]
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
  std::string lr_schedule = "step";  // step | cosine | constant
  int epochs = 12;
  std::vector<int> milestones = {8, 11};
  double factor = 0.1;
  double lr_min = 0.0;
  int period = 30;

  // [kd]
  std::string teacher;
  std::string teacher_pool = "max";
  std::string teacher_variant = "c";
  double alpha = 0.5;
  double temperature = 4.0;

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_value(double v) { return MetricsReport::format_double(v); }

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw Error(ErrorCode::InvalidConfig, "key '" + key + "': cannot parse '" + text + "'");
  }
  return v;
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  return out;
}

inline std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename T>
Field number_field(std::string section, std::string key, T ExperimentConfig::*member) {
  return Field{section, key,
               [member](const ExperimentConfig& c) {
                 if constexpr (std::is_floating_point_v<T>) {
                   return format_value(c.*member);
                 } else {
                   return std::to_string(c.*member);
                 }
               },
               [member, key](ExperimentConfig& c, const std::string& v) { c.*member = parse_number<T>(key, v); }};
}

inline Field string_field(std::string section, std::string key, std::string ExperimentConfig::*member) {
  return Field{section, key, [member](const ExperimentConfig& c) { return c.*member; },
               [member](ExperimentConfig& c, const std::string& v) { c.*member = v; }};
}

inline const std::vector<Field>& config_fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> fields = {
      string_field("experiment", "name", &C::name),
      Field{"experiment", "mode", [](const C& c) { return to_string(c.mode); },
            [](C& c, const std::string& v) {
              if (v == "plain") c.mode = TrainMode::Plain;
              else if (v == "short") c.mode = TrainMode::Short;
              else if (v == "kd") c.mode = TrainMode::Kd;
              else throw Error(ErrorCode::InvalidConfig, "mode must be plain, short or kd, got '" + v + "'");
            }},
      number_field("experiment", "seed", &C::seed),
      string_field("experiment", "output_dir", &C::output_dir),
      string_field("data", "source", &C::data_source),
      string_field("data", "path", &C::data_path),
      number_field("data", "train_size", &C::train_size),
      number_field("data", "test_size", &C::test_size),
      number_field("data", "image_size", &C::image_size),
      number_field("data", "object_size", &C::object_size),
      number_field("data", "classes", &C::classes),
      number_field("data", "seed", &C::data_seed),
      string_field("model", "schedule", &C::schedule),
      number_field("model", "bottom_heavy_shift", &C::bottom_heavy_shift),
      string_field("model", "pool", &C::pool),
      string_field("model", "variant", &C::variant),
      number_field("optimizer", "lr", &C::lr),
      number_field("optimizer", "momentum", &C::momentum),
      number_field("optimizer", "weight_decay", &C::weight_decay),
      number_field("optimizer", "batch_size", &C::batch_size),
      string_field("optimizer", "schedule", &C::lr_schedule),
      number_field("optimizer", "epochs", &C::epochs),
      Field{"optimizer", "milestones", [](const C& c) { return join(c.milestones); },
            [](C& c, const std::string& v) { c.milestones = parse_int_list("milestones", v); }},
      number_field("optimizer", "factor", &C::factor),
      number_field("optimizer", "lr_min", &C::lr_min),
      number_field("optimizer", "period", &C::period),
      string_field("kd", "teacher", &C::teacher),
      string_field("kd", "teacher_pool", &C::teacher_pool),
      string_field("kd", "teacher_variant", &C::teacher_variant),
      number_field("kd", "alpha", &C::alpha),
      number_field("kd", "temperature", &C::temperature),
  };
  return fields;
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::pair<std::string, std::string>, const detail::Field*> index;
  for (const auto& f : detail::config_fields()) index[{f.section, f.key}] = &f;

  std::istringstream in(text);
  std::string raw, section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorCode::InvalidConfig, where + "unterminated section header");
      section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
      bool known = false;
      for (const auto& f : detail::config_fields()) known = known || f.section == section;
      if (!known) throw Error(ErrorCode::InvalidConfig, where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidConfig, where + "expected key = value");
    if (section.empty()) throw Error(ErrorCode::InvalidConfig, where + "key outside any section");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    auto it = index.find({section, key});
    if (it == index.end()) {
      throw Error(ErrorCode::InvalidConfig, where + "unknown key '" + key + "' in [" + section + "]");
    }
    try {
      it->second->set(cfg, value);
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidConfig, where + e.what());
    }
  }
  return cfg;
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out, section;
  for (const auto& f : detail::config_fields()) {
    if (f.section != section) {
      out += (section.empty() ? "" : "\n") + ("[" + f.section + "]\n");
      section = f.section;
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// FNV-1a, as 16 hex digits.
inline std::string hash_text(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Hash of the canonical form.
inline std::string config_hash(const ExperimentConfig& cfg) { return hash_text(serialize_config(cfg)); }

}  // namespace wavepool
