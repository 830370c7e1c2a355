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

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "test_util.hpp"
#include "wavepool/analysis.hpp"
#include "wavepool/data.hpp"

#ifndef WAVEPOOL_TEST_DATA_DIR
#error "WAVEPOOL_TEST_DATA_DIR must point at tests/data"
#endif

namespace wavepool {
namespace {

namespace fs = std::filesystem;

const fs::path kFixture = fs::path(WAVEPOOL_TEST_DATA_DIR) / "cifar100";

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class TempDir : public ::testing::Test {
 protected:
  fs::path dir = fs::temp_directory_path() / ("wavepool_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  void SetUp() override { fs::create_directories(dir); }
  void TearDown() override { fs::remove_all(dir); }
};

TEST(Cifar, FixtureGoldenValues) {
  const auto set = load_cifar100(kFixture, "train");
  ASSERT_EQ(set.size(), 3u);
  EXPECT_EQ(set.class_count, 100u);
  EXPECT_EQ(set.images.shape(), (Shape{3, 3, 32, 32}));
  EXPECT_EQ(set.labels, (std::vector<int>{6, 59, 77}));
  // Values from a separate byte-level reader.
  const double golden[3] = {0.50256587009803921, 0.49664522058823529, 0.4967141544117647};
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 1024; ++i) mean += set.images[c * 1024 + i];
    EXPECT_NEAR(mean / 1024.0, golden[c], 1e-15);
  }
  EXPECT_EQ(load_cifar100(kFixture, "test").size(), 2u);
}

TEST(Cifar, LabelsWithinRangeAndPixelsScaled) {
  const auto set = load_cifar100(kFixture, "train");
  for (int y : set.labels) {
    EXPECT_GE(y, 0);
    EXPECT_LT(y, 100);
  }
  for (double v : set.images.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Cifar, RecordsReserializeByteExact) {
  const auto set = load_cifar100(kFixture, "train");
  const auto raw = read_bytes(kFixture / "train.bin");
  for (std::size_t r = 0; r < set.size(); ++r) {
    const auto rec = cifar100_record(set, r);
    EXPECT_TRUE(std::equal(rec.begin(), rec.end(), raw.begin() + static_cast<std::ptrdiff_t>(r * 3074)));
  }
}

TEST_F(TempDir, CifarErrors) {
  try {
    load_cifar100(dir, "train");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DatasetNotFound);
  }
  std::ofstream(dir / "train.bin", std::ios::binary) << std::string(3075, '\0');
  try {
    load_cifar100(dir, "train");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptDataset);
  }
  std::string bad(3074, '\0');
  bad[1] = static_cast<char>(100);
  std::ofstream(dir / "test.bin", std::ios::binary) << bad;
  EXPECT_THROW(load_cifar100(dir, "test"), Error);
  EXPECT_THROW(load_cifar100(dir, "validation"), Error);
}

TEST(Cifar, FullDatasetWhenAvailable) {
  const char* root = std::getenv("WAVEPOOL_DATA_DIR");
  if (root == nullptr) GTEST_SKIP() << "WAVEPOOL_DATA_DIR not set";
  try {
    cifar100_file(root, "train");
  } catch (const Error&) {
    GTEST_SKIP() << "no CIFAR-100 under WAVEPOOL_DATA_DIR";
  }
  const auto train = load_cifar100(root, "train");
  EXPECT_EQ(train.size(), 50000u);
  EXPECT_EQ(load_cifar100(root, "test").size(), 10000u);
}

TEST(TinyObjects, RejectsInvalidSizes) {
  TinyObjectConfig cfg;
  cfg.n = 0;
  try {
    make_tiny_object_set(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
  }
  cfg.n = 10;
  for (std::size_t bad : {1u, 9u}) {
    cfg.object_size = bad;
    EXPECT_THROW(make_tiny_object_set(cfg), Error);
  }
  cfg.object_size = 8;
  cfg.image_size = 32;  // 8 is not below 32 / 4
  EXPECT_THROW(make_tiny_object_set(cfg), Error);
  cfg.object_size = 4;
  cfg.image_size = 33;
  EXPECT_THROW(make_tiny_object_set(cfg), Error);
  cfg.image_size = 32;
  cfg.classes = 9;
  EXPECT_THROW(make_tiny_object_set(cfg), Error);
}

TEST(TinyObjects, DeterministicPerSeed) {
  TinyObjectConfig cfg;
  cfg.n = 40;
  cfg.seed = 5;
  const auto a = make_tiny_object_set(cfg), b = make_tiny_object_set(cfg);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_TRUE(std::ranges::equal(a.images.values(), b.images.values()));
  cfg.seed = 6;
  const auto c = make_tiny_object_set(cfg);
  EXPECT_FALSE(std::ranges::equal(a.images.values(), c.images.values()));
}

TEST(TinyObjects, ClassBalanceAndRange) {
  TinyObjectConfig cfg;
  cfg.n = 103;
  cfg.classes = 4;
  const auto set = make_tiny_object_set(cfg);
  std::vector<int> counts(4, 0);
  for (int y : set.labels) ++counts.at(static_cast<std::size_t>(y));
  for (int c : counts) EXPECT_LE(std::abs(c - 103.0 / 4.0), 1.0);
  for (double v : set.images.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(set.images.shape(), (Shape{103, 3, 32, 32}));
}

TEST(TinyObjects, CheckerboardSpectrumPeaksAtPi) {
  for (std::size_t k : {2u, 4u, 6u, 8u}) {
    const auto patch = texture_patch(0, k);
    Matrix m(k, k);
    m.values = patch;
    const auto X = dft2(m);
    std::size_t best = 0;
    for (std::size_t i = 1; i < X.values.size(); ++i) {
      if (std::norm(X.values[i]) > std::norm(X.values[best])) best = i;
    }
    EXPECT_EQ(best, (k / 2) * k + k / 2) << "size " << k;
  }
}

TEST(TinyObjects, TexturesAreHighFrequency) {
  for (std::size_t cls = 0; cls < kTextureNames.size(); ++cls) {
    for (std::size_t k = 2; k <= 8; ++k) {
      Matrix m(k, k);
      m.values = texture_patch(cls, k);
      EXPECT_GE(energy_above(dft2(m), std::numbers::pi / 2), 0.5) << kTextureNames[cls] << " size " << k;
    }
  }
}

TEST(TinyObjects, PatchCarriesTheHighFrequencies) {
  // Subtracting the periodic background leaves only the patch; check that
  // the image's energy above pi/2 sits within one even-aligned window.
  TinyObjectConfig cfg;
  cfg.n = 8;
  cfg.seed = 3;
  const auto set = make_tiny_object_set(cfg);
  for (std::size_t n = 0; n < set.size(); ++n) {
    Matrix m(32, 32);
    for (std::size_t i = 0; i < 1024; ++i) m.values[i] = set.images[n * 3 * 1024 + i];
    const auto hp = reconstruct_lowpass(m, make_haar());
    std::size_t r0 = 32, r1 = 0, c0 = 32, c1 = 0;
    for (std::size_t r = 0; r < 32; ++r) {
      for (std::size_t c = 0; c < 32; ++c) {
        if (std::abs(m(r, c) - hp(r, c)) > 0.1) {
          r0 = std::min(r0, r), r1 = std::max(r1, r), c0 = std::min(c0, c), c1 = std::max(c1, c);
        }
      }
    }
    ASSERT_LT(r0, 32u) << "image " << n;
    EXPECT_LT(r1 - r0, cfg.object_size);
    EXPECT_LT(c1 - c0, cfg.object_size);
    EXPECT_EQ(r0 % 2, 0u);
    EXPECT_EQ(c0 % 2, 0u);
  }
}

TEST_F(TempDir, ExportImportRoundTrip) {
  TinyObjectConfig cfg;
  cfg.n = 12;
  const auto set = make_tiny_object_set(cfg);
  export_image_set(set, dir / "train.wpds");
  const auto back = import_image_set(dir / "train.wpds");
  EXPECT_EQ(back.labels, set.labels);
  EXPECT_EQ(back.class_count, set.class_count);
  EXPECT_EQ(back.images.shape(), set.images.shape());
  EXPECT_TRUE(std::ranges::equal(back.images.values(), set.images.values()));
  EXPECT_EQ(fs::file_size(dir / "train.wpds"), 4 + 4 + 5 * 8 + 12 * 4 + 12 * 3 * 32 * 32 * 8u);

  try {
    import_image_set(dir / "missing.wpds");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DatasetNotFound);
  }
  std::ofstream(dir / "bad.wpds", std::ios::binary) << "XXXX";
  try {
    import_image_set(dir / "bad.wpds");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptDataset);
  }
}

TEST(TinyObjects, SplitsAreIndependent) {
  TinyObjectConfig cfg;
  const auto [train, test] = make_tiny_object_splits(cfg, 20, 10);
  EXPECT_EQ(train.size(), 20u);
  EXPECT_EQ(test.size(), 10u);
  EXPECT_EQ(test.split, "test");
  EXPECT_FALSE(std::equal(test.images.values().begin(), test.images.values().end(), train.images.values().begin()));
}

TEST(ImageSet, GatherAndStatistics) {
  TinyObjectConfig cfg;
  cfg.n = 6;
  const auto set = make_tiny_object_set(cfg);
  const std::vector<std::size_t> idx{4, 1};
  const Tensor b = set.gather(idx);
  EXPECT_EQ(b.shape(), (Shape{2, 3, 32, 32}));
  EXPECT_EQ(b[0], set.images[4 * 3072]);
  EXPECT_EQ(b[3072 + 5], set.images[3072 + 5]);
  EXPECT_EQ(set.gather_labels(idx), (std::vector<int>{set.labels[4], set.labels[1]}));
  const auto [mean, stdev] = channel_statistics(set);
  ASSERT_EQ(mean.size(), 3u);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_GT(mean[c], 0.2);
    EXPECT_LT(mean[c], 0.8);
    EXPECT_GT(stdev[c], 0.0);
  }
}

}  // namespace
}  // namespace wavepool
