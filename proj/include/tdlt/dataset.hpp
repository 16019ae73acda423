// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Image classification datasets in the CIFAR binary layout, the exponential
// long-tail resampling profile, and the head/mid/tail class grouping used by
// the evaluation reports.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "tdlt/common.hpp"
#include "tdlt/rng.hpp"

namespace tdlt {

struct Dataset {
  int num_classes = 10;
  int channels = 3, height = 32, width = 32;
  std::vector<uint8_t> images;  // N * C*H*W, planar channels per image
  std::vector<int> labels;      // N
  size_t count() const { return labels.size(); }
  size_t image_bytes() const {
    return static_cast<size_t>(channels) * height * width;
  }
  const uint8_t* image(size_t i) const { return images.data() + i * image_bytes(); }
};

// Reads the CIFAR-10 binary batches (data_batch_1..5.bin or test_batch.bin):
// 10000 records per file, record = label byte + 3072 image bytes (R,G,B
// planes, row-major).
inline Dataset load_cifar10(const std::string& dir, bool train) {
  Dataset ds;
  std::vector<std::string> files;
  if (train)
    for (int i = 1; i <= 5; ++i)
      files.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
  else
    files.push_back(dir + "/test_batch.bin");
  const size_t rec = 1 + ds.image_bytes();
  for (const auto& path : files) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("dataset: cannot open " + path);
    std::vector<uint8_t> buf(std::istreambuf_iterator<char>(f), {});
    if (buf.empty() || buf.size() % rec != 0)
      throw DataError("dataset: " + path + " is not a multiple of " +
                      std::to_string(rec) + " bytes");
    size_t n = buf.size() / rec;
    for (size_t r = 0; r < n; ++r) {
      uint8_t label = buf[r * rec];
      if (label >= 10)
        throw DataError("dataset: label " + std::to_string(label) +
                        " out of range in " + path);
      ds.labels.push_back(label);
      ds.images.insert(ds.images.end(), buf.begin() + r * rec + 1,
                       buf.begin() + (r + 1) * rec);
    }
  }
  return ds;
}

// Exponential class-size profile: N_i = floor(n_max * imb^(-i/(C-1))).
// Class 0 keeps n_max images; class C-1 keeps n_max / imb.
inline std::vector<int> longtail_counts(int num_classes, int n_max, double imb) {
  if (num_classes < 2) throw ParamError("longtail_counts: need >= 2 classes");
  if (n_max < 1 || imb < 1.0)
    throw ParamError("longtail_counts: n_max >= 1 and imbalance >= 1 required");
  std::vector<int> counts(num_classes);
  for (int i = 0; i < num_classes; ++i) {
    double frac = static_cast<double>(i) / (num_classes - 1);
    counts[i] = static_cast<int>(std::floor(n_max * std::pow(imb, -frac)));
    if (counts[i] < 1)
      throw DataError("longtail_counts: class " + std::to_string(i) +
                      " would be empty");
  }
  return counts;
}

// Keeps the first `counts[c]` images of each class after a seeded per-class
// shuffle. Selected images retain their original relative order.
inline Dataset make_longtailed(const Dataset& full, const std::vector<int>& counts,
                               uint64_t split_seed) {
  if (static_cast<int>(counts.size()) != full.num_classes)
    throw ParamError("make_longtailed: counts size != num_classes");
  std::vector<std::vector<uint32_t>> by_class(full.num_classes);
  for (size_t i = 0; i < full.count(); ++i)
    by_class[full.labels[i]].push_back(static_cast<uint32_t>(i));
  std::vector<uint32_t> keep;
  for (int c = 0; c < full.num_classes; ++c) {
    if (counts[c] > static_cast<int>(by_class[c].size()))
      throw DataError("make_longtailed: class " + std::to_string(c) + " has " +
                      std::to_string(by_class[c].size()) + " images, needs " +
                      std::to_string(counts[c]));
    Rng rng(derive_seed(split_seed, static_cast<uint64_t>(c)));
    rng.shuffle(by_class[c]);
    by_class[c].resize(counts[c]);
    std::sort(by_class[c].begin(), by_class[c].end());
    keep.insert(keep.end(), by_class[c].begin(), by_class[c].end());
  }
  std::sort(keep.begin(), keep.end());
  Dataset out;
  out.num_classes = full.num_classes;
  out.channels = full.channels;
  out.height = full.height;
  out.width = full.width;
  const size_t ib = full.image_bytes();
  out.images.reserve(keep.size() * ib);
  out.labels.reserve(keep.size());
  for (uint32_t i : keep) {
    out.labels.push_back(full.labels[i]);
    out.images.insert(out.images.end(), full.image(i), full.image(i) + ib);
  }
  return out;
}

inline std::vector<int> class_counts(const Dataset& ds) {
  std::vector<int> counts(ds.num_classes, 0);
  for (int l : ds.labels) ++counts[l];
  return counts;
}

// Head/mid/tail group id (0/1/2) per class. 10- and 100-class datasets use
// the conventional fixed index splits; anything else falls back to count
// thresholds (>100 head, 20..100 mid, <20 tail).
inline std::vector<int> group_of_class(const std::vector<int>& counts) {
  int C = static_cast<int>(counts.size());
  std::vector<int> g(C);
  if (C == 10) {
    for (int i = 0; i < C; ++i) g[i] = i <= 2 ? 0 : (i <= 6 ? 1 : 2);
  } else if (C == 100) {
    for (int i = 0; i < C; ++i) g[i] = i <= 35 ? 0 : (i <= 70 ? 1 : 2);
  } else {
    for (int i = 0; i < C; ++i)
      g[i] = counts[i] > 100 ? 0 : (counts[i] >= 20 ? 1 : 2);
  }
  return g;
}

struct ChannelStats {
  std::vector<double> mean;  // per channel, in [0,1] scale
  std::vector<double> std;   // population std, floored at 1e-8
};

inline ChannelStats compute_channel_stats(const Dataset& ds) {
  ChannelStats st;
  st.mean.assign(ds.channels, 0.0);
  st.std.assign(ds.channels, 0.0);
  if (ds.count() == 0) throw DataError("channel stats: empty dataset");
  const size_t plane = static_cast<size_t>(ds.height) * ds.width;
  std::vector<double> sum(ds.channels, 0.0), sq(ds.channels, 0.0);
  for (size_t i = 0; i < ds.count(); ++i) {
    const uint8_t* img = ds.image(i);
    for (int c = 0; c < ds.channels; ++c) {
      const uint8_t* p = img + c * plane;
      for (size_t j = 0; j < plane; ++j) {
        double v = p[j] / 255.0;
        sum[c] += v;
        sq[c] += v * v;
      }
    }
  }
  const double n = static_cast<double>(ds.count()) * plane;
  for (int c = 0; c < ds.channels; ++c) {
    st.mean[c] = sum[c] / n;
    double var = sq[c] / n - st.mean[c] * st.mean[c];
    st.std[c] = std::sqrt(std::max(var, 1e-16));
    if (st.std[c] < 1e-8) st.std[c] = 1e-8;
  }
  return st;
}

inline const char* group_name(int g) {
  static const char* names[3] = {"head", "mid", "tail"};
  if (g < 0 || g > 2) throw ParamError("group_name: invalid group id");
  return names[g];
}

// Split manifest ("class_index,count,group" CSV), staged and renamed.
inline void write_split_manifest(const std::string& path,
                                 const std::vector<int>& counts) {
  auto groups = group_of_class(counts);
  std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "w");
  if (!f) throw DataError("manifest: cannot open " + tmp);
  std::fprintf(f, "class_index,count,group\n");
  for (size_t c = 0; c < counts.size(); ++c)
    std::fprintf(f, "%zu,%d,%s\n", c, counts[c], group_name(groups[c]));
  if (std::fclose(f) != 0 || std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("manifest: cannot write " + path);
  }
}

}  // namespace tdlt
