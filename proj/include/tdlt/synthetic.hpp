// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Procedural 10-class image generator in the CIFAR binary layout. Each class
// is a geometric motif; base hues are shared between class pairs so color
// identifies only the pair and the motif must be read to separate its two
// members. Position, scale, brightness, and pixel noise are jittered per
// image. Used where no real photographic corpus is available, and by the
// fast tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "tdlt/common.hpp"
#include "tdlt/rng.hpp"

namespace tdlt {

namespace detail {

struct Rgb {
  double r, g, b;
};

// Five base hues, each shared by one frequent-style and one rare-style motif
// (classes c and 9-c under the usual descending-frequency ordering). Color
// alone cannot separate a pair, which forces shape features and creates the
// within-pair confusions that frequency-aware training has to resolve.
inline Rgb class_hue(int c) {
  static const Rgb hues[5] = {
      {0.85, 0.25, 0.25},  // red:     disc (0) / triangle (9)
      {0.25, 0.75, 0.30},  // green:   ring (1) / bars (8)
      {0.25, 0.40, 0.85},  // blue:    square (2) / checker (7)
      {0.85, 0.75, 0.25},  // yellow:  frame (3) / h-stripes (6)
      {0.75, 0.30, 0.80},  // magenta: cross (4) / diag-stripes (5)
  };
  return hues[c < 5 ? c : 9 - c];
}

// Paints one 32x32 image for class `cls` into img (3 planes, row-major).
inline void draw_synthetic(int cls, Rng& rng, uint8_t* img) {
  const int H = 32, W = 32;
  double cx = 15.5 + rng.uniform(-5.0, 5.0);
  double cy = 15.5 + rng.uniform(-5.0, 5.0);
  double scale = rng.uniform(0.75, 1.25);
  double rot = rng.uniform(-0.35, 0.35);
  Rgb hue = class_hue(cls);
  double hj = rng.uniform(0.82, 1.18);
  Rgb bg{rng.uniform(0.05, 0.35), rng.uniform(0.05, 0.35), rng.uniform(0.05, 0.35)};
  const double cr = std::cos(rot), sr = std::sin(rot);

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      // rotated, scaled coordinates relative to the jittered center
      double ux = ((x - cx) * cr - (y - cy) * sr) / scale;
      double uy = ((x - cx) * sr + (y - cy) * cr) / scale;
      double rad = std::sqrt(ux * ux + uy * uy);
      bool on = false;
      switch (cls) {
        case 0: on = rad < 9.0; break;                                   // disc
        case 1: on = rad > 5.5 && rad < 9.5; break;                      // ring
        case 2: on = std::fabs(ux) < 7.5 && std::fabs(uy) < 7.5; break;  // square
        case 3:                                                          // frame
          on = std::max(std::fabs(ux), std::fabs(uy)) < 9.0 &&
               std::max(std::fabs(ux), std::fabs(uy)) > 5.5;
          break;
        case 4:                                                          // cross
          on = (std::fabs(ux) < 2.8 && std::fabs(uy) < 10.0) ||
               (std::fabs(uy) < 2.8 && std::fabs(ux) < 10.0);
          break;
        case 5: on = std::fmod(ux - uy + 64.0, 6.0) < 3.0 && rad < 11.0; break;
        case 6: on = std::fmod(uy + 64.0, 6.0) < 3.0 && rad < 11.0; break;
        case 7:                                                          // checker
          on = (static_cast<int>(std::floor(ux / 4.0)) +
                static_cast<int>(std::floor(uy / 4.0))) % 2 == 0 &&
               rad < 11.0;
          break;
        case 8:                                                          // bars
          on = std::fabs(ux) < 10.0 && std::fabs(uy) < 9.0 &&
               std::fmod(ux + 64.0, 8.0) < 3.2;
          break;
        case 9:                                                          // triangle
          on = uy > -8.0 && uy < 8.0 && std::fabs(ux) < (uy + 8.0) * 0.55;
          break;
        default: throw ParamError("draw_synthetic: class out of range");
      }
      double r = bg.r, g = bg.g, b = bg.b;
      if (on) {
        r = std::clamp(hue.r * hj, 0.0, 1.0);
        g = std::clamp(hue.g * hj, 0.0, 1.0);
        b = std::clamp(hue.b * hj, 0.0, 1.0);
      }
      // per-pixel sensor-style noise
      r += rng.uniform(-0.05, 0.05);
      g += rng.uniform(-0.05, 0.05);
      b += rng.uniform(-0.05, 0.05);
      auto q = [](double v) {
        return static_cast<uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
      };
      img[0 * H * W + y * W + x] = q(r);
      img[1 * H * W + y * W + x] = q(g);
      img[2 * H * W + y * W + x] = q(b);
    }
}

inline void write_batch_file(const std::string& path,
                             const std::vector<uint8_t>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("synthetic: cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(records.data()),
          static_cast<std::streamsize>(records.size()));
  if (!f) throw DataError("synthetic: short write to " + path);
}

}  // namespace detail

// Writes data_batch_1..5.bin and test_batch.bin in `dir` using the CIFAR
// record layout. Classes are interleaved round-robin so every batch file is
// class-balanced. train_per_class*10 must divide evenly into 5 files.
inline void write_synthetic_cifar(const std::string& dir, uint64_t seed,
                                  int train_per_class = 5000,
                                  int test_per_class = 1000) {
  if (train_per_class < 1 || test_per_class < 1)
    throw ParamError("synthetic: per-class counts must be positive");
  const size_t rec = 3073;
  auto make_records = [&](int per_class, bool is_test) {
    std::vector<uint8_t> out;
    out.reserve(static_cast<size_t>(per_class) * 10 * rec);
    std::vector<uint8_t> img(3072);
    for (int i = 0; i < per_class; ++i)
      for (int c = 0; c < 10; ++c) {
        uint64_t idx = static_cast<uint64_t>(i) * 10 + c;
        Rng rng(derive_seed(seed, is_test ? 1 : 0, idx));
        detail::draw_synthetic(c, rng, img.data());
        out.push_back(static_cast<uint8_t>(c));
        out.insert(out.end(), img.begin(), img.end());
      }
    return out;
  };
  auto train = make_records(train_per_class, false);
  size_t total = train.size() / rec;
  size_t per_file = total / 5;
  size_t extra = total % 5;
  size_t off = 0;
  for (int f = 0; f < 5; ++f) {
    size_t n = per_file + (static_cast<size_t>(f) < extra ? 1 : 0);
    std::vector<uint8_t> chunk(train.begin() + off * rec,
                               train.begin() + (off + n) * rec);
    detail::write_batch_file(dir + "/data_batch_" + std::to_string(f + 1) + ".bin",
                             chunk);
    off += n;
  }
  detail::write_batch_file(dir + "/test_batch.bin",
                           make_records(test_per_class, true));
}

}  // namespace tdlt
