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

// wavepool: transform, train, eval, count, alias, consistency.

#include <cstdlib>
#include <iostream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "wavepool/cli.hpp"

namespace {

using namespace wavepool;
namespace fs = std::filesystem;

void print_written(const fs::path& base) {
  std::cout << "wrote " << base.string() << ".csv and .json\n";
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Wavelet pooling experiments: transforms, training, counters and aliasing reports"};
  app.require_subcommand(1);

  auto* transform = app.add_subcommand("transform", "Dump the subbands of a PGM/PPM image");
  std::string image, wavelet = "haar", inverse;
  fs::path out_dir = ".", out_file;
  transform->add_option("image", image, "Binary PGM (P5) or PPM (P6) input");
  transform->add_option("-w,--wavelet", wavelet, "haar, db2..db4, ch3.3, ch5.5")->capture_default_str();
  transform->add_option("-o,--out", out_dir, "Output directory")->capture_default_str();
  transform->add_option("--inverse", inverse, "Rebuild an image from a *-transform.json summary");
  transform->add_option("--image-out", out_file, "Destination of the rebuilt image (with --inverse)");

  auto* train = app.add_subcommand("train", "Train one model per config file");
  std::vector<std::string> train_configs;
  std::size_t jobs = 1;
  train->add_option("configs", train_configs, "Config files")->required()->check(CLI::ExistingFile);
  train->add_option("-j,--jobs", jobs, "Configs trained in parallel")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  std::string config_path, checkpoint;
  eval->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  eval->add_option("checkpoint", checkpoint, "Checkpoint (default: the run directory's checkpoint.bin)");

  auto* count = app.add_subcommand("count", "Per-layer parameter and FLOP table");
  std::size_t height = 0, width = 0;
  count->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  count->add_option("--height", height, "Input height (default: data size)");
  count->add_option("--width", width, "Input width (default: data size)");

  auto* alias = app.add_subcommand("alias", "Energy retained by a pooling operator on plane waves");
  std::string pool;
  std::vector<std::string> freqs = {"pi/4", "pi/2", "3pi/4", "pi"};
  std::size_t grid = 64;
  fs::path alias_out = "runs/alias";
  alias->add_option("pool", pool, "max, avg, strided, blur:1-2-1, wavelet:haar, ...")->required();
  alias->add_option("-f,--freq", freqs, "Frequencies in radians or as pi fractions")->capture_default_str();
  alias->add_option("-n,--size", grid, "Grid side")->capture_default_str();
  alias->add_option("-o,--out", alias_out, "Output directory")->capture_default_str();

  auto* consistency = app.add_subcommand("consistency", "Prediction stability under circular shifts");
  ShiftOptions shift;
  std::size_t samples = 0;
  consistency->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  consistency->add_option("checkpoint", checkpoint, "Checkpoint (default: the run directory's checkpoint.bin)");
  consistency->add_option("--max-shift", shift.max_shift, "Largest shift per axis")->capture_default_str();
  consistency->add_option("--step", shift.step, "Shift increment")->capture_default_str();
  consistency->add_option("--samples", samples, "Test images used (0 = all)")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (transform->parsed()) {
      if (!inverse.empty()) {
        if (out_file.empty()) throw Error(ErrorCode::InvalidConfig, "--inverse needs --image-out");
        Image img = cli::cmd_inverse(inverse);
        img.maxval = 255;
        write_netpbm(out_file, img);
        std::cout << "wrote " << out_file.string() << "\n";
      } else {
        if (image.empty()) throw Error(ErrorCode::InvalidConfig, "transform needs an input image");
        fs::create_directories(out_dir);
        const auto summary = cli::cmd_transform(image, wavelet, out_dir);
        for (const char* band : cli::kBandNames) {
          std::cout << band << " energy fraction " << summary["bands"][band]["fraction"].get<double>()
                    << " (mean removed " << summary["bands"][band]["ac_fraction"].get<double>() << ")\n";
        }
      }
    } else if (train->parsed()) {
      std::vector<ExperimentConfig> configs;
      for (const auto& p : train_configs) configs.push_back(load_config(p));
      const auto reports =
          cli::cmd_train(configs, jobs, [](const std::string& line) { std::cerr << line << std::endl; });
      for (std::size_t i = 0; i < reports.size(); ++i) {
        std::cout << configs[i].name << ": final test accuracy " << reports[i].at("final.test_accuracy") << "\n";
        print_written(run_directory(configs[i]) / (reports[i].name + "-" + reports[i].config_hash));
      }
    } else if (eval->parsed() || consistency->parsed()) {
      const ExperimentConfig cfg = load_config(config_path);
      const fs::path ckpt = checkpoint.empty() ? run_directory(cfg) / "checkpoint.bin" : fs::path(checkpoint);
      const MetricsReport r =
          eval->parsed() ? cli::cmd_eval(cfg, ckpt) : cli::cmd_consistency(cfg, ckpt, shift, samples);
      std::cout << r.to_csv();
      print_written(r.write(run_directory(cfg)));
    } else if (count->parsed()) {
      const ExperimentConfig cfg = load_config(config_path);
      const auto r = cli::cmd_count(cfg, height, width);
      std::cout << cli::format_layer_table(r.layers);
      print_written(r.report.write(run_directory(cfg)));
    } else if (alias->parsed()) {
      const MetricsReport r = cli::cmd_alias(pool, freqs, grid);
      std::cout << r.to_csv();
      print_written(r.write(alias_out));
    }
  } catch (const std::exception& e) {
    std::cerr << "wavepool: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
