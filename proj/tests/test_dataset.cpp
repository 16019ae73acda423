// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "tdlt/dataset.hpp"
#include "tdlt/synthetic.hpp"

using tdlt::Dataset;

namespace {

std::filesystem::path scratch_dir(const char* name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("longtail profile matches the frozen reference row") {
  // imbalance 100, 5000 max, 10 classes
  auto c = tdlt::longtail_counts(10, 5000, 100.0);
  std::vector<int> want{5000, 2997, 1796, 1077, 645, 387, 232, 139, 83, 50};
  CHECK(c == want);
  CHECK(std::accumulate(c.begin(), c.end(), 0) == 12406);

  // alternative imbalance verified against the closed form element-wise
  auto c50 = tdlt::longtail_counts(10, 5000, 50.0);
  for (int i = 0; i < 10; ++i) {
    int expect = static_cast<int>(std::floor(5000.0 * std::pow(50.0, -i / 9.0)));
    CHECK(c50[i] == expect);
  }
  CHECK(c50[0] == 5000);
  CHECK(c50[9] == 100);

  // monotone nonincreasing is part of the contract
  for (int i = 1; i < 10; ++i) CHECK(c[i] <= c[i - 1]);

  CHECK_THROWS_AS(tdlt::longtail_counts(1, 100, 10.0), tdlt::ParamError);
  CHECK_THROWS_AS(tdlt::longtail_counts(10, 100, 0.5), tdlt::ParamError);
}

TEST_CASE("synthetic corpus: deterministic, balanced, CIFAR layout") {
  auto dir = scratch_dir("tdlt_synth_a");
  tdlt::write_synthetic_cifar(dir.string(), 77, /*train_per_class=*/6,
                              /*test_per_class=*/3);
  for (int i = 1; i <= 5; ++i) {
    auto p = dir / ("data_batch_" + std::to_string(i) + ".bin");
    REQUIRE(std::filesystem::exists(p));
    CHECK(std::filesystem::file_size(p) == 12 * 3073);
  }
  CHECK(std::filesystem::file_size(dir / "test_batch.bin") == 30 * 3073);

  auto train = tdlt::load_cifar10(dir.string(), true);
  auto test = tdlt::load_cifar10(dir.string(), false);
  CHECK(train.count() == 60);
  CHECK(test.count() == 30);
  auto counts = tdlt::class_counts(train);
  for (int c : counts) CHECK(c == 6);

  // round-robin interleave: first ten labels are 0..9
  for (int i = 0; i < 10; ++i) CHECK(train.labels[i] == i);

  // regeneration with the same seed is byte-identical
  auto dir2 = scratch_dir("tdlt_synth_b");
  tdlt::write_synthetic_cifar(dir2.string(), 77, 6, 3);
  std::ifstream f1(dir / "data_batch_1.bin", std::ios::binary);
  std::ifstream f2(dir2 / "data_batch_1.bin", std::ios::binary);
  std::vector<char> b1(std::istreambuf_iterator<char>(f1), {});
  std::vector<char> b2(std::istreambuf_iterator<char>(f2), {});
  CHECK(b1 == b2);

  // a different seed changes the pixels
  auto dir3 = scratch_dir("tdlt_synth_c");
  tdlt::write_synthetic_cifar(dir3.string(), 78, 6, 3);
  std::ifstream f3(dir3 / "data_batch_1.bin", std::ios::binary);
  std::vector<char> b3(std::istreambuf_iterator<char>(f3), {});
  CHECK(b1 != b3);

  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
  std::filesystem::remove_all(dir3);
}

TEST_CASE("synthetic classes are separable by a nearest-centroid probe") {
  auto dir = scratch_dir("tdlt_synth_sep");
  tdlt::write_synthetic_cifar(dir.string(), 5, /*train_per_class=*/40,
                              /*test_per_class=*/20);
  auto train = tdlt::load_cifar10(dir.string(), true);
  auto test = tdlt::load_cifar10(dir.string(), false);
  const size_t ib = train.image_bytes();
  std::vector<std::vector<double>> cent(10, std::vector<double>(ib, 0.0));
  std::vector<int> n(10, 0);
  for (size_t i = 0; i < train.count(); ++i) {
    int l = train.labels[i];
    const uint8_t* img = train.image(i);
    for (size_t j = 0; j < ib; ++j) cent[l][j] += img[j];
    ++n[l];
  }
  for (int c = 0; c < 10; ++c)
    for (size_t j = 0; j < ib; ++j) cent[c][j] /= n[c];
  int correct = 0;
  for (size_t i = 0; i < test.count(); ++i) {
    const uint8_t* img = test.image(i);
    double best = 1e300;
    int arg = -1;
    for (int c = 0; c < 10; ++c) {
      double d = 0;
      for (size_t j = 0; j < ib; ++j) {
        double diff = img[j] - cent[c][j];
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    correct += arg == test.labels[i];
  }
  double acc = static_cast<double>(correct) / test.count();
  // 10-way chance is 0.1. Hues are shared within class pairs, so a raw-pixel
  // centroid probe has to read motif geometry to split a pair; well above
  // 5x chance means the motifs dominate the jitter and noise.
  CHECK(acc > 0.5);
  std::filesystem::remove_all(dir);
}

TEST_CASE("long-tailed subset: counts, determinism, provenance") {
  auto dir = scratch_dir("tdlt_synth_lt");
  tdlt::write_synthetic_cifar(dir.string(), 9, 30, 2);
  auto full = tdlt::load_cifar10(dir.string(), true);
  auto counts = tdlt::longtail_counts(10, 30, 10.0);
  CHECK(counts[0] == 30);
  CHECK(counts[9] == 3);

  auto lt = tdlt::make_longtailed(full, counts, 123);
  CHECK(tdlt::class_counts(lt) == counts);
  CHECK(lt.count() == static_cast<size_t>(
                          std::accumulate(counts.begin(), counts.end(), 0)));

  auto lt2 = tdlt::make_longtailed(full, counts, 123);
  CHECK(lt.images == lt2.images);
  CHECK(lt.labels == lt2.labels);

  auto lt3 = tdlt::make_longtailed(full, counts, 124);
  CHECK(lt.images != lt3.images);  // different split seed, different subset

  // every selected image exists verbatim in the source set with its label
  const size_t ib = full.image_bytes();
  for (size_t i = 0; i < std::min<size_t>(lt.count(), 20); ++i) {
    bool found = false;
    for (size_t j = 0; j < full.count() && !found; ++j)
      found = full.labels[j] == lt.labels[i] &&
              std::equal(lt.image(i), lt.image(i) + ib, full.image(j));
    CHECK(found);
  }

  // asking for more images than a class has is a data error
  auto too_many = counts;
  too_many[9] = 31;
  CHECK_THROWS_AS(tdlt::make_longtailed(full, too_many, 1), tdlt::DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("head/mid/tail grouping") {
  auto g10 = tdlt::group_of_class(std::vector<int>(10, 1));
  CHECK(g10 == std::vector<int>{0, 0, 0, 1, 1, 1, 1, 2, 2, 2});

  auto g100 = tdlt::group_of_class(std::vector<int>(100, 1));
  for (int i = 0; i < 100; ++i)
    CHECK(g100[i] == (i <= 35 ? 0 : (i <= 70 ? 1 : 2)));

  auto gn = tdlt::group_of_class({500, 101, 100, 20, 19, 1});
  CHECK(gn == std::vector<int>{0, 0, 1, 1, 2, 2});
}

TEST_CASE("channel stats and manifest") {
  Dataset ds;
  ds.num_classes = 2;
  ds.channels = 3;
  ds.height = ds.width = 2;
  // image 0: all channels 0; image 1: channels 255, 0, 51
  ds.labels = {0, 1};
  ds.images.assign(12, 0);
  std::vector<uint8_t> img1(12, 0);
  for (int j = 0; j < 4; ++j) img1[j] = 255;
  for (int j = 8; j < 12; ++j) img1[j] = 51;
  ds.images.insert(ds.images.end(), img1.begin(), img1.end());
  auto st = tdlt::compute_channel_stats(ds);
  CHECK(st.mean[0] == doctest::Approx(0.5));
  CHECK(st.mean[1] == doctest::Approx(0.0));
  CHECK(st.mean[2] == doctest::Approx(0.1));
  CHECK(st.std[0] == doctest::Approx(0.5));
  CHECK(st.std[1] == doctest::Approx(1e-8));
  CHECK(st.std[2] == doctest::Approx(0.1));

  auto path = std::filesystem::temp_directory_path() / "tdlt_counts.csv";
  tdlt::write_split_manifest(path.string(), {500, 50, 5});
  std::ifstream f(path);
  std::string all(std::istreambuf_iterator<char>(f), {});
  CHECK(all == "class_index,count,group\n0,500,head\n1,50,mid\n2,5,tail\n");
  std::filesystem::remove(path);
}

TEST_CASE("malformed CIFAR files raise DataError") {
  CHECK_THROWS_AS(tdlt::load_cifar10("/tmp/definitely_missing_dir_tdlt", true),
                  tdlt::DataError);
  auto dir = scratch_dir("tdlt_badcifar");
  {
    std::ofstream f(dir / "test_batch.bin", std::ios::binary);
    f << "short";
  }
  CHECK_THROWS_AS(tdlt::load_cifar10(dir.string(), false), tdlt::DataError);
  {
    // right size, impossible label
    std::vector<char> rec(3073, 0);
    rec[0] = 11;
    std::ofstream f(dir / "test_batch.bin", std::ios::binary);
    f.write(rec.data(), rec.size());
  }
  CHECK_THROWS_AS(tdlt::load_cifar10(dir.string(), false), tdlt::DataError);
  std::filesystem::remove_all(dir);
}
