// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tdlt/common.hpp"

namespace tdlt {

// splitmix64, used for seeding and for deriving stateless sub-streams.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic counter-based seed derivation: same inputs, same stream,
// independent of call order. Used to key per-image / per-batch RNGs.
inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0,
                            uint64_t c = 0) {
  uint64_t s = base;
  uint64_t out = splitmix64(s);
  s ^= a * 0x9e3779b97f4a7c15ull;
  out ^= splitmix64(s);
  s ^= b * 0xc2b2ae3d27d4eb4full;
  out ^= splitmix64(s);
  s ^= c * 0x165667b19e3779f9ull;
  out ^= splitmix64(s);
  return out;
}

// xoshiro256** with hand-rolled distributions. All sampling in the project
// goes through this class so runs are reproducible independent of the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  uint64_t below(uint64_t n) {
    // Lemire's multiply-shift with rejection.
    uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    uint64_t l = static_cast<uint64_t>(m);
    if (l < n) {
      uint64_t t = (0ull - n) % n;
      while (l < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        l = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(below(
                    static_cast<uint64_t>(hi_inclusive - lo + 1)));
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Box-Muller without caching; two uniforms per sample.
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

  // Normal truncated to +-2 sigma, the usual token/positional init.
  double trunc_normal(double stddev) {
    for (;;) {
      double v = normal(0.0, stddev);
      if (std::fabs(v) <= 2.0 * stddev) return v;
    }
  }

  // Marsaglia-Tsang for k >= 1, with the standard boost for k < 1.
  double gamma(double k) {
    if (k <= 0.0) throw ParamError("gamma: shape must be positive");
    if (k < 1.0) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      return gamma(k + 1.0) * std::pow(u, 1.0 / k);
    }
    const double d = k - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

// One master seed fans out to the four sub-streams used by a run; all four
// are logged in the run manifest.
struct SeedFanout {
  uint64_t master = 0;
  uint64_t split = 0;    // long-tail subsampling
  uint64_t init = 0;     // parameter initialization
  uint64_t augment = 0;  // augmentation / mixing
  uint64_t order = 0;    // batch ordering

  static SeedFanout from_master(uint64_t master) {
    SeedFanout f;
    f.master = master;
    uint64_t s = master;
    f.split = splitmix64(s);
    f.init = splitmix64(s);
    f.augment = splitmix64(s);
    f.order = splitmix64(s);
    return f;
  }
};

}  // namespace tdlt
