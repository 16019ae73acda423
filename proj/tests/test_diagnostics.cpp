// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "lapacke.h"
#include "tdlt/diagnostics.hpp"
#include "tdlt/rng.hpp"
#include "tdlt/tensor.hpp"
#include "tdlt/vit.hpp"

using namespace tdlt;

namespace {

// random attention record: rows are normalized positive values
AttentionRecordT<float> random_attention(int blocks, int B, int H, int T,
                                         uint64_t seed) {
  Rng rng(seed);
  AttentionRecordT<float> rec;
  for (int b = 0; b < blocks; ++b) {
    auto t = Tensor::zeros({B, H, T, T});
    auto& v = t.data();
    for (size_t row = 0; row < t.size() / T; ++row) {
      double s = 0;
      for (int j = 0; j < T; ++j) {
        v[row * T + j] = static_cast<float>(rng.uniform(0.01, 1.0));
        s += v[row * T + j];
      }
      for (int j = 0; j < T; ++j) v[row * T + j] /= static_cast<float>(s);
    }
    rec.blocks.push_back(t);
  }
  return rec;
}

// direct double-loop oracle for mean attention distance
std::vector<double> brute_distance(const AttentionRecordT<float>& rec,
                                   int patch, int g) {
  const int P = g * g, T = P + 2;
  const int B = rec.blocks[0].dim(0), H = rec.blocks[0].dim(1);
  std::vector<double> out;
  for (const auto& blk : rec.blocks)
    for (int h = 0; h < H; ++h) {
      double acc = 0;
      for (int img = 0; img < B; ++img)
        for (int q = 0; q < P; ++q)
          for (int k = 0; k < P; ++k) {
            double dr = q / g - k / g, dc = q % g - k % g;
            acc += blk.data()[(((static_cast<size_t>(img) * H + h) * T) + q + 2) *
                                  T +
                              k + 2] *
                   patch * std::sqrt(dr * dr + dc * dc);
          }
      out.push_back(acc / (static_cast<double>(B) * P));
    }
  return out;
}

// 3x3 row-major product helper for the hand oracle
std::vector<double> mat3_mul(const std::vector<double>& a,
                             const std::vector<double>& b) {
  std::vector<double> c(9, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int l = 0; l < 3; ++l)
      for (int j = 0; j < 3; ++j) c[i * 3 + j] += a[i * 3 + l] * b[l * 3 + j];
  return c;
}

// V columns of the column-centered matrix, via LAPACK (independent oracle)
std::vector<double> lapack_right_vectors(std::vector<double> a, int n, int d,
                                         int* k_out) {
  for (int j = 0; j < d; ++j) {
    double m = 0;
    for (int i = 0; i < n; ++i) m += a[static_cast<size_t>(i) * d + j];
    m /= n;
    for (int i = 0; i < n; ++i) a[static_cast<size_t>(i) * d + j] -= m;
  }
  const int k = std::min(n, d);
  std::vector<double> s(k), u(static_cast<size_t>(n) * k),
      vt(static_cast<size_t>(k) * d), superb(k);
  int info = LAPACKE_dgesvd(LAPACK_ROW_MAJOR, 'S', 'S', n, d, a.data(), d,
                            s.data(), u.data(), k, vt.data(), d,
                            superb.data());
  REQUIRE(info == 0);
  *k_out = k;
  return vt;  // row j = v_j^T
}

}  // namespace

TEST_CASE("attention distance: identity and uniform oracles") {
  // identity over patches -> zero distance everywhere
  {
    AttentionRecordT<float> rec;
    auto t = Tensor::zeros({2, 3, 6, 6});
    for (int img = 0; img < 2; ++img)
      for (int h = 0; h < 3; ++h)
        for (int i = 0; i < 6; ++i)
          t.data()[(((static_cast<size_t>(img) * 3 + h) * 6) + i) * 6 + i] = 1.f;
    rec.blocks.push_back(t);
    auto prof = mean_attention_distance(rec, 1, 2);
    REQUIRE(prof.n_blocks == 1);
    REQUIRE(prof.n_heads == 3);
    for (double d : prof.mean_dist_px) CHECK(d == doctest::Approx(0.0));
  }
  // uniform over the 4 patches of a 2x2 grid, centers 1 unit apart
  {
    AttentionRecordT<float> rec;
    auto t = Tensor::zeros({1, 1, 6, 6});
    for (int q = 0; q < 6; ++q)
      for (int k = 2; k < 6; ++k)
        t.data()[static_cast<size_t>(q) * 6 + k] = 0.25f;
    rec.blocks.push_back(t);
    auto prof = mean_attention_distance(rec, 1, 2);
    CHECK(prof.at(0, 0) == doctest::Approx((2.0 + std::sqrt(2.0)) / 4.0)
                               .epsilon(1e-6));
  }
}

TEST_CASE("attention distance: farthest-corner brute force on a 3x3 grid") {
  const int g = 3, P = 9, T = 11, patch = 4;
  AttentionRecordT<float> rec;
  auto t = Tensor::zeros({1, 2, T, T});
  double expect = 0.0;
  for (int q = 0; q < P; ++q) {
    int best = 0;
    double bd = -1.0;
    for (int k = 0; k < P; ++k) {
      double dr = q / g - k / g, dc = q % g - k % g;
      double d = std::sqrt(dr * dr + dc * dc);
      if (d > bd) {
        bd = d;
        best = k;
      }
    }
    expect += patch * bd;
    for (int h = 0; h < 2; ++h)
      t.data()[((static_cast<size_t>(h) * T) + q + 2) * T + best + 2] = 1.f;
  }
  expect /= P;
  rec.blocks.push_back(t);
  auto prof = mean_attention_distance(rec, patch, patch * g);
  CHECK(prof.at(0, 0) == doctest::Approx(expect).epsilon(1e-6));
  CHECK(prof.at(0, 1) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("attention distance matches brute force on random records") {
  for (uint64_t seed = 1; seed <= 6; ++seed) {
    const int g = (seed % 2 == 0) ? 2 : 4;
    auto rec = random_attention(2, 2, 3, g * g + 2, seed);
    auto prof = mean_attention_distance(rec, 5, 5 * g);
    auto oracle = brute_distance(rec, 5, g);
    REQUIRE(prof.mean_dist_px.size() == oracle.size());
    const double diag = 5.0 * g * std::sqrt(2.0);
    for (size_t i = 0; i < oracle.size(); ++i) {
      CHECK(prof.mean_dist_px[i] == doctest::Approx(oracle[i]).epsilon(1e-6));
      CHECK(prof.mean_dist_px[i] >= 0.0);
      CHECK(prof.mean_dist_px[i] <= diag);
    }
  }
  auto rec = random_attention(1, 1, 1, 7, 9);
  CHECK_THROWS_AS(mean_attention_distance(rec, 1, 2), ShapeError);
}

TEST_CASE("rollout: identity blocks give identity for any depth") {
  for (int depth : {1, 3, 5}) {
    AttentionRecordT<float> rec;
    for (int b = 0; b < depth; ++b) {
      auto t = Tensor::zeros({1, 2, 6, 6});
      for (int h = 0; h < 2; ++h)
        for (int i = 0; i < 6; ++i)
          t.data()[((static_cast<size_t>(h) * 6) + i) * 6 + i] = 1.f;
      rec.blocks.push_back(t);
    }
    auto mats = rollout_matrices(rec);
    REQUIRE(mats.size() == 1);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        CHECK(mats[0][static_cast<size_t>(i) * 6 + j] ==
              doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
    // saliency of patch token 2 is one-hot at patch 0
    auto sal = attention_rollout(rec, 2);
    REQUIRE(sal.grid == 2);
    CHECK(sal.map(0)[0] == doctest::Approx(1.0));
    CHECK(sal.map(0)[1] == doctest::Approx(0.0));
  }
}

TEST_CASE("rollout: two 3x3 blocks match the hand-computed product") {
  std::vector<double> a1 = {0.6, 0.2, 0.2,  //
                            0.1, 0.8, 0.1,  //
                            0.3, 0.3, 0.4};
  std::vector<double> a2 = {0.2, 0.5, 0.3,  //
                            0.4, 0.4, 0.2,  //
                            0.1, 0.1, 0.8};
  AttentionRecordT<float> rec;
  for (const auto& a : {a1, a2}) {
    auto t = Tensor::zeros({1, 1, 3, 3});
    for (int i = 0; i < 9; ++i) t.data()[i] = static_cast<float>(a[i]);
    rec.blocks.push_back(t);
  }
  // expected: renormalized 0.5*(A+I), later block multiplied on the left
  auto tilde = [](std::vector<double> a) {
    for (int i = 0; i < 3; ++i) {
      double s = 0;
      for (int j = 0; j < 3; ++j) {
        a[i * 3 + j] = 0.5 * (a[i * 3 + j] + (i == j ? 1.0 : 0.0));
        s += a[i * 3 + j];
      }
      for (int j = 0; j < 3; ++j) a[i * 3 + j] /= s;
    }
    return a;
  };
  auto expect = mat3_mul(tilde(a2), tilde(a1));
  auto mats = rollout_matrices(rec);
  for (int i = 0; i < 9; ++i)
    CHECK(mats[0][i] == doctest::Approx(expect[i]).epsilon(1e-6));
}

TEST_CASE("rollout rows of random attention sum to one") {
  auto rec = random_attention(3, 2, 2, 6, 77);
  auto mats = rollout_matrices(rec);
  for (const auto& R : mats)
    for (int i = 0; i < 6; ++i) {
      double s = 0;
      for (int j = 0; j < 6; ++j) s += R[static_cast<size_t>(i) * 6 + j];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("feature rank: containment, zero matrix, exhaustion flag") {
  Rng rng(5);
  // rank-3 reference: F_all = G(40x3) * W(3x10)
  FeatureMatrix all;
  all.n = 40;
  all.d = 10;
  std::vector<double> G(40 * 3), W(3 * 10);
  for (auto& v : G) v = rng.uniform(-1, 1);
  for (auto& v : W) v = rng.uniform(-1, 1);
  all.values.assign(400, 0.0);
  for (int i = 0; i < 40; ++i)
    for (int l = 0; l < 3; ++l)
      for (int j = 0; j < 10; ++j)
        all.values[static_cast<size_t>(i) * 10 + j] += G[i * 3 + l] * W[l * 10 + j];
  // center columns so the row space equals the centered row space exactly
  for (int j = 0; j < 10; ++j) {
    double m = 0;
    for (int i = 0; i < 40; ++i) m += all.values[static_cast<size_t>(i) * 10 + j];
    m /= 40;
    for (int i = 0; i < 40; ++i) all.values[static_cast<size_t>(i) * 10 + j] -= m;
  }
  // tail rows = random combinations of reference rows -> inside the span
  FeatureMatrix tail;
  tail.n = 8;
  tail.d = 10;
  tail.values.assign(80, 0.0);
  for (int i = 0; i < 8; ++i) {
    for (int r = 0; r < 5; ++r) {
      int pick = static_cast<int>(rng.below(40));
      double c = rng.uniform(-1, 1);
      for (int j = 0; j < 10; ++j)
        tail.values[static_cast<size_t>(i) * 10 + j] +=
            c * all.values[static_cast<size_t>(pick) * 10 + j];
    }
  }
  auto r = feature_rank(all, tail, 0.01);
  CHECK(r.met);
  CHECK(r.k <= 3);

  FeatureMatrix zero = tail;
  std::fill(zero.values.begin(), zero.values.end(), 0.0);
  auto rz = feature_rank(all, zero, 0.01);
  CHECK(rz.k == 0);
  CHECK(rz.met);

  // a tail direction orthogonal to a 3-row reference's span cannot be met
  FeatureMatrix small;
  small.n = 3;
  small.d = 8;
  small.values.assign(24, 0.0);
  for (int i = 0; i < 3; ++i) small.values[static_cast<size_t>(i) * 8 + i] = 1.0;
  FeatureMatrix ortho;
  ortho.n = 1;
  ortho.d = 8;
  ortho.values.assign(8, 0.0);
  ortho.values[7] = 1.0;
  auto ro = feature_rank(small, ortho, 0.01);
  CHECK_FALSE(ro.met);
  CHECK(ro.k == 3);
  CHECK(ro.residual > 0.01);
}

TEST_CASE("feature rank: exact agreement with a brute-force LAPACK scan") {
  Rng rng(11);
  for (int inst = 0; inst < 8; ++inst) {
    const int n = 64, d = 16, nt = 12;
    FeatureMatrix all;
    all.n = n;
    all.d = d;
    all.values.resize(static_cast<size_t>(n) * d);
    // noisy low-rank mixture
    const int rank = 5;
    std::vector<double> G(static_cast<size_t>(n) * rank),
        W(static_cast<size_t>(rank) * d);
    for (auto& v : G) v = rng.uniform(-1, 1);
    for (auto& v : W) v = rng.uniform(-1, 1);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        double s = 0;
        for (int l = 0; l < rank; ++l) s += G[i * rank + l] * W[l * d + j];
        all.values[static_cast<size_t>(i) * d + j] =
            s + 0.05 * rng.uniform(-1, 1);
      }
    FeatureMatrix tail;
    tail.n = nt;
    tail.d = d;
    tail.values.resize(static_cast<size_t>(nt) * d);
    for (int i = 0; i < nt; ++i)
      for (int j = 0; j < d; ++j) {
        double s = 0;
        for (int l = 0; l < rank; ++l)
          s += rng.uniform(-1, 1) * W[l * d + j] * 0.3;
        tail.values[static_cast<size_t>(i) * d + j] =
            s + 0.02 * rng.uniform(-1, 1);
      }

    const double tol = (inst % 2 == 0) ? 0.01 : 0.05;
    auto fast = feature_rank(all, tail, tol);

    // brute force: explicit reconstruction through LAPACK's right vectors
    int kmax = 0;
    auto vt = lapack_right_vectors(all.values, n, d, &kmax);
    double total = 0;
    for (double v : tail.values) total += v * v;
    int brute_k = kmax;
    bool brute_met = false;
    double brute_res = 0;
    for (int k = 0; k <= kmax; ++k) {
      // recon = tail * V_k * V_k^T
      double err = 0;
      for (int i = 0; i < nt; ++i) {
        std::vector<double> proj(d, 0.0);
        for (int l = 0; l < k; ++l) {
          double dot = 0;
          for (int j = 0; j < d; ++j)
            dot += tail.values[static_cast<size_t>(i) * d + j] * vt[static_cast<size_t>(l) * d + j];
          for (int j = 0; j < d; ++j)
            proj[j] += dot * vt[static_cast<size_t>(l) * d + j];
        }
        for (int j = 0; j < d; ++j) {
          double e = tail.values[static_cast<size_t>(i) * d + j] - proj[j];
          err += e * e;
        }
      }
      if (err / total <= tol) {
        brute_k = k;
        brute_met = true;
        brute_res = err / total;
        break;
      }
      if (k == kmax) brute_res = err / total;
    }
    CHECK(fast.k == brute_k);
    CHECK(fast.met == brute_met);
    if (fast.met) CHECK(fast.residual == doctest::Approx(brute_res).epsilon(1e-6));
  }
}

TEST_CASE("feature rank: monotone in tol and rotation invariant") {
  Rng rng(23);
  const int n = 30, d = 8, nt = 6;
  FeatureMatrix all, tail;
  all.n = n;
  all.d = d;
  all.values.resize(static_cast<size_t>(n) * d);
  for (auto& v : all.values) v = rng.uniform(-1, 1);
  tail.n = nt;
  tail.d = d;
  tail.values.resize(static_cast<size_t>(nt) * d);
  for (auto& v : tail.values) v = rng.uniform(-1, 1);

  int prev = 1 << 30;
  for (double tol : {0.001, 0.01, 0.05, 0.2, 0.9}) {
    auto r = feature_rank(all, tail, tol);
    CHECK(r.k <= prev);
    prev = r.k;
  }

  // random orthogonal Q from the SVD of a random matrix
  std::vector<double> rnd(static_cast<size_t>(d) * d);
  for (auto& v : rnd) v = rng.uniform(-1, 1);
  auto q = svd(rnd, d, d);  // q.U is orthogonal
  auto rotate = [&](const FeatureMatrix& f) {
    FeatureMatrix g = f;
    for (int i = 0; i < f.n; ++i)
      for (int j = 0; j < d; ++j) {
        double s = 0;
        for (int l = 0; l < d; ++l)
          s += f.values[static_cast<size_t>(i) * d + l] * q.U[static_cast<size_t>(l) * d + j];
        g.values[static_cast<size_t>(i) * d + j] = s;
      }
    return g;
  };
  auto base = feature_rank(all, tail, 0.05);
  auto rot = feature_rank(rotate(all), rotate(tail), 0.05);
  CHECK(base.k == rot.k);
  CHECK(base.met == rot.met);

  CHECK_THROWS_AS(feature_rank(all, tail, 0.0), ParamError);
  FeatureMatrix wrong = tail;
  wrong.d = d - 1;
  CHECK_THROWS_AS(feature_rank(all, wrong, 0.01), ShapeError);
}

TEST_CASE("prediction entropy: closed forms and maximality at uniform") {
  auto u = Tensor::full({1, 10}, 0.1f);
  CHECK(prediction_entropy(u)[0] == doctest::Approx(std::log(10.0)).epsilon(1e-6));
  auto one = Tensor::from_vector({1, 4}, {0.f, 1.f, 0.f, 0.f});
  CHECK(prediction_entropy(one)[0] == doctest::Approx(0.0));
  auto half = Tensor::from_vector({1, 3}, {0.5f, 0.25f, 0.25f});
  CHECK(prediction_entropy(half)[0] ==
        doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-6));
  auto neg = Tensor::from_vector({1, 2}, {1.5f, -0.5f});
  CHECK_THROWS_AS(prediction_entropy(neg), ParamError);

  // perturbing the uniform row strictly lowers entropy
  Rng rng(3);
  const int C = 6;
  const double hu = std::log(static_cast<double>(C));
  for (int t = 0; t < 20; ++t) {
    std::vector<float> row(C, 1.0f / C);
    int i = static_cast<int>(rng.below(C)), j = static_cast<int>(rng.below(C));
    while (j == i) j = static_cast<int>(rng.below(C));
    float d = static_cast<float>(rng.uniform(0.01, 1.0 / C));
    row[i] += d;
    row[j] -= d;
    auto h = prediction_entropy(Tensor::from_vector({1, C}, row));
    CHECK(h[0] < hu);
  }
}

TEST_CASE("token divergence: closed forms and exclusions") {
  auto a = Tensor::from_vector({3, 2}, {1.f, 0.f,   //
                                        0.f, 2.f,   //
                                        1.f, 1.f});
  CHECK(cls_dist_divergence(a, a).mean_distance == doctest::Approx(0.0));

  auto u = Tensor::from_vector({1, 2}, {1.f, 0.f});
  auto v = Tensor::from_vector({1, 2}, {0.f, 3.f});
  CHECK(cls_dist_divergence(u, v).mean_distance == doctest::Approx(1.0));
  auto w = Tensor::from_vector({1, 2}, {-2.f, 0.f});
  CHECK(cls_dist_divergence(u, w).mean_distance == doctest::Approx(2.0));

  auto fc = Tensor::from_vector({3, 2}, {1.f, 0.f,   //
                                         0.f, 0.f,   //
                                         0.f, 1.f});
  auto fd = Tensor::from_vector({3, 2}, {1.f, 0.f,   //
                                         1.f, 1.f,   //
                                         0.f, 2.f});
  auto r = cls_dist_divergence(fc, fd);
  CHECK(r.counted == 2);
  CHECK(r.excluded == 1);
  CHECK(r.mean_distance == doctest::Approx(0.0).epsilon(1e-6));

  CHECK_THROWS_AS(cls_dist_divergence(u, a), ShapeError);
}

TEST_CASE("diagnostics consume a real forward pass") {
  ViTConfig cfg;
  cfg.embed = 32;
  cfg.depth = 2;
  cfg.heads = 2;
  DualTokenViT model(cfg, 3);
  Rng rng(9);
  auto x = Tensor::zeros({2, 3, 32, 32});
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-1, 1));
  NoGrad ng;
  auto out = model.forward(x, true);

  auto prof = mean_attention_distance(out.attention, cfg.patch, cfg.image);
  const double diag = cfg.image * std::sqrt(2.0);
  for (double d : prof.mean_dist_px) {
    CHECK(d >= 0.0);
    CHECK(d <= diag);
  }
  auto sal = attention_rollout(out.attention, 1);
  REQUIRE(sal.grid == 8);
  double total = 0;
  for (int j = 0; j < 64; ++j) {
    CHECK(sal.map(0)[j] >= 0.0);
    total += sal.map(0)[j];
  }
  CHECK(total <= 1.0 + 1e-6);  // patch columns are a sub-row of a stochastic matrix

  auto fm_all = make_feature_matrix(out.features_cls.cast<double>());
  auto fm_tail = make_feature_matrix(out.features_dist.cast<double>());
  auto rk = feature_rank(fm_all, fm_tail, 0.5);
  CHECK(rk.k <= 2);

  auto dv = cls_dist_divergence(out.features_cls, out.features_dist);
  CHECK(dv.counted == 2);
  CHECK(dv.mean_distance >= 0.0);
  CHECK(dv.mean_distance <= 2.0);
}
