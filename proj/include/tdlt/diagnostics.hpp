// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Quantitative analyses over captured model state: attention locality
// (mean attention distance in pixels), attention rollout saliency,
// SVD-threshold feature rank, prediction entropy, and the cosine
// divergence between the two token representations. All functions are
// pure and accumulate in double precision.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tdlt/common.hpp"
#include "tdlt/svd.hpp"
#include "tdlt/tensor.hpp"
#include "tdlt/vit.hpp"

namespace tdlt {

// ---------------------------------------------------------------------------
// Mean attention distance
// ---------------------------------------------------------------------------

// Per-block, per-head attention-weighted mean pixel distance between patch
// centers. Low values mean convolution-like local attention.
struct LocalityProfile {
  int n_blocks = 0;
  int n_heads = 0;
  std::vector<double> mean_dist_px;  // row-major [block][head]

  double at(int block, int head) const {
    return mean_dist_px[static_cast<size_t>(block) * n_heads + head];
  }
};

// For every head: sum_q sum_k A[q,k] * dist_px(q,k) / n_queries, with q and k
// both restricted to patch tokens (the two class-level tokens are excluded
// from queries and keys), averaged over all images in the record.
template <class S>
LocalityProfile mean_attention_distance(const AttentionRecordT<S>& rec,
                                        int patch_size, int image_size) {
  if (rec.blocks.empty())
    throw ShapeError("mean_attention_distance: empty attention record");
  if (patch_size <= 0 || image_size <= 0 || image_size % patch_size != 0)
    throw ShapeError("mean_attention_distance: image not divisible by patch");
  const int g = image_size / patch_size;
  const int P = g * g;
  const int T = P + 2;
  const auto& s0 = rec.blocks[0].shape();
  if (s0.size() != 4 || s0[2] != T || s0[3] != T)
    throw ShapeError("mean_attention_distance: token count " +
                     std::to_string(s0.size() == 4 ? s0[2] : -1) +
                     " inconsistent with a " + std::to_string(g) + "x" +
                     std::to_string(g) + " patch grid");

  // pairwise patch-center distances in pixels
  std::vector<double> dist(static_cast<size_t>(P) * P);
  for (int a = 0; a < P; ++a)
    for (int b = 0; b < P; ++b) {
      const double dr = (a / g) - (b / g), dc = (a % g) - (b % g);
      dist[static_cast<size_t>(a) * P + b] =
          patch_size * std::sqrt(dr * dr + dc * dc);
    }

  LocalityProfile prof;
  prof.n_blocks = static_cast<int>(rec.blocks.size());
  prof.n_heads = s0[1];
  prof.mean_dist_px.assign(
      static_cast<size_t>(prof.n_blocks) * prof.n_heads, 0.0);
  for (int bl = 0; bl < prof.n_blocks; ++bl) {
    const auto& t = rec.blocks[bl];
    if (t.shape() != s0)
      throw ShapeError("mean_attention_distance: inconsistent block shapes");
    const int B = s0[0], H = s0[1];
    const auto& v = t.data();
    for (int h = 0; h < H; ++h) {
      double acc = 0.0;
      for (int img = 0; img < B; ++img) {
        const S* a = v.data() +
                     ((static_cast<size_t>(img) * H + h) * T) * T;
        for (int q = 0; q < P; ++q) {
          const S* row = a + static_cast<size_t>(q + 2) * T + 2;
          const double* dq = dist.data() + static_cast<size_t>(q) * P;
          for (int k = 0; k < P; ++k) acc += static_cast<double>(row[k]) * dq[k];
        }
      }
      prof.mean_dist_px[static_cast<size_t>(bl) * H + h] =
          acc / (static_cast<double>(s0[0]) * P);
    }
  }
  return prof;
}

// ---------------------------------------------------------------------------
// Attention rollout
// ---------------------------------------------------------------------------

// Per-image rollout matrices R = A~_L * ... * A~_1 where A~ = 0.5*(Abar + I)
// with rows renormalized and Abar the head-averaged attention of one block.
// Returned row-major, one [T*T] matrix per image.
template <class S>
std::vector<std::vector<double>> rollout_matrices(
    const AttentionRecordT<S>& rec) {
  if (rec.blocks.empty())
    throw ShapeError("attention_rollout: empty attention record");
  const auto& s0 = rec.blocks[0].shape();
  if (s0.size() != 4 || s0[2] != s0[3])
    throw ShapeError("attention_rollout: expected square [B,H,T,T] blocks");
  const int B = s0[0], H = s0[1], T = s0[2];

  std::vector<std::vector<double>> out(
      B, std::vector<double>(static_cast<size_t>(T) * T, 0.0));
  for (int img = 0; img < B; ++img)
    for (int i = 0; i < T; ++i) out[img][static_cast<size_t>(i) * T + i] = 1.0;

  std::vector<double> abar(static_cast<size_t>(T) * T);
  std::vector<double> next(static_cast<size_t>(T) * T);
  for (const auto& blk : rec.blocks) {
    if (blk.shape() != s0)
      throw ShapeError("attention_rollout: inconsistent block shapes");
    const auto& v = blk.data();
    for (int img = 0; img < B; ++img) {
      // head-average, add residual, renormalize rows
      for (int i = 0; i < T; ++i) {
        double rowsum = 0.0;
        for (int j = 0; j < T; ++j) {
          double m = 0.0;
          for (int h = 0; h < H; ++h)
            m += static_cast<double>(
                v[(((static_cast<size_t>(img) * H + h) * T) + i) * T + j]);
          m = 0.5 * (m / H + (i == j ? 1.0 : 0.0));
          abar[static_cast<size_t>(i) * T + j] = m;
          rowsum += m;
        }
        if (rowsum <= 0.0)
          throw NumericError("attention_rollout: non-positive row sum");
        for (int j = 0; j < T; ++j)
          abar[static_cast<size_t>(i) * T + j] /= rowsum;
      }
      // R := abar * R
      auto& R = out[img];
      std::fill(next.begin(), next.end(), 0.0);
      for (int i = 0; i < T; ++i)
        for (int l = 0; l < T; ++l) {
          const double a = abar[static_cast<size_t>(i) * T + l];
          if (a == 0.0) continue;
          const double* rl = R.data() + static_cast<size_t>(l) * T;
          double* ni = next.data() + static_cast<size_t>(i) * T;
          for (int j = 0; j < T; ++j) ni[j] += a * rl[j];
        }
      R = next;
    }
  }
  return out;
}

// Saliency over the patch grid for one target token (0 = CLS, 1 = DIST):
// the target's rollout row restricted to patch columns, reshaped to [g,g].
struct RolloutMap {
  int batch = 0;
  int grid = 0;
  std::vector<double> maps;  // row-major [batch][g][g]

  const double* map(int img) const {
    return maps.data() + static_cast<size_t>(img) * grid * grid;
  }
};

template <class S>
RolloutMap attention_rollout(const AttentionRecordT<S>& rec, int target_token) {
  auto mats = rollout_matrices(rec);
  const int T = rec.blocks[0].dim(2);
  const int P = T - 2;
  const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(P))));
  if (g * g != P)
    throw ShapeError("attention_rollout: patch count is not a square grid");
  if (target_token < 0 || target_token >= T)
    throw ShapeError("attention_rollout: target token out of range");
  RolloutMap r;
  r.batch = static_cast<int>(mats.size());
  r.grid = g;
  r.maps.reserve(static_cast<size_t>(r.batch) * P);
  for (const auto& R : mats)
    for (int j = 0; j < P; ++j)
      r.maps.push_back(R[static_cast<size_t>(target_token) * T + 2 + j]);
  return r;
}

// ---------------------------------------------------------------------------
// Feature rank
// ---------------------------------------------------------------------------

struct FeatureMatrix {
  int n = 0, d = 0;
  std::vector<double> values;       // row-major n x d
  std::vector<int> source_classes;  // per-row label, may be empty
};

template <class S>
FeatureMatrix make_feature_matrix(const TensorT<S>& t,
                                  std::vector<int> labels = {}) {
  if (t.ndim() != 2)
    throw ShapeError("make_feature_matrix: expected [N,D], got " +
                     shape_str(t.shape()));
  FeatureMatrix f;
  f.n = t.dim(0);
  f.d = t.dim(1);
  f.values.resize(t.size());
  for (size_t i = 0; i < t.size(); ++i) {
    const double v = static_cast<double>(t.data()[i]);
    if (!std::isfinite(v))
      throw NumericError("make_feature_matrix: non-finite feature entry");
    f.values[i] = v;
  }
  if (!labels.empty() && static_cast<int>(labels.size()) != f.n)
    throw ShapeError("make_feature_matrix: label count != row count");
  f.source_classes = std::move(labels);
  return f;
}

struct RankResult {
  int k = 0;        // least k meeting the threshold (or k_max when !met)
  bool met = true;  // false if even the full basis misses the threshold
  double residual = 0.0;  // relative squared error at the returned k
};

// Least k such that projecting `tail` onto the top-k right singular vectors
// of the column-centered `all` matrix reconstructs it within `tol` relative
// squared error. A zero tail matrix yields k = 0 by convention.
inline RankResult feature_rank(const FeatureMatrix& all,
                               const FeatureMatrix& tail, double tol = 0.01) {
  if (all.d != tail.d)
    throw ShapeError("feature_rank: feature widths differ");
  if (all.n <= 0 || tail.n <= 0)
    throw ShapeError("feature_rank: empty feature matrix");
  if (tol <= 0.0) throw ParamError("feature_rank: tol must be positive");
  const int d = all.d;

  double total = 0.0;
  for (double v : tail.values) total += v * v;
  if (total == 0.0) return {0, true, 0.0};

  // column-center the reference matrix, then economy SVD
  std::vector<double> centered = all.values;
  for (int j = 0; j < d; ++j) {
    double m = 0.0;
    for (int i = 0; i < all.n; ++i)
      m += centered[static_cast<size_t>(i) * d + j];
    m /= all.n;
    for (int i = 0; i < all.n; ++i)
      centered[static_cast<size_t>(i) * d + j] -= m;
  }
  auto dec = svd(centered, all.n, d);

  // Projection residual via Pythagoras: ||F - F V_k V_k^T||^2
  //   = ||F||^2 - sum_{j<k} ||F v_j||^2.
  RankResult res;
  double captured = 0.0;
  for (int j = 0; j < dec.k; ++j) {
    double rel = (total - captured) / total;
    if (rel <= tol) {
      res.k = j;
      res.residual = rel;
      return res;
    }
    double col = 0.0;
    for (int i = 0; i < tail.n; ++i) {
      double dot = 0.0;
      const double* row = tail.values.data() + static_cast<size_t>(i) * d;
      for (int a = 0; a < d; ++a)
        dot += row[a] * dec.V[static_cast<size_t>(a) * dec.k + j];
      col += dot * dot;
    }
    captured += col;
  }
  double rel = (total - captured) / total;
  res.k = dec.k;
  res.residual = rel;
  res.met = rel <= tol;
  return res;
}

// ---------------------------------------------------------------------------
// Prediction entropy
// ---------------------------------------------------------------------------

// Shannon entropy in nats per row, with 0*log(0) := 0.
template <class S>
std::vector<double> prediction_entropy(const TensorT<S>& probs) {
  if (probs.ndim() != 2)
    throw ShapeError("prediction_entropy: expected [B,C], got " +
                     shape_str(probs.shape()));
  const int B = probs.dim(0), C = probs.dim(1);
  std::vector<double> out(B, 0.0);
  for (int i = 0; i < B; ++i) {
    double h = 0.0;
    for (int j = 0; j < C; ++j) {
      const double p =
          static_cast<double>(probs.data()[static_cast<size_t>(i) * C + j]);
      if (p < 0.0)
        throw ParamError("prediction_entropy: negative probability");
      if (p > 0.0) h -= p * std::log(p);
    }
    out[i] = h;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Token divergence
// ---------------------------------------------------------------------------

struct DivergenceResult {
  double mean_distance = 0.0;  // mean over counted rows of 1 - cos(u, v)
  int counted = 0;
  int excluded = 0;  // rows skipped because one side had zero norm
};

template <class S>
DivergenceResult cls_dist_divergence(const TensorT<S>& fc,
                                     const TensorT<S>& fd) {
  if (fc.ndim() != 2 || fc.shape() != fd.shape())
    throw ShapeError("cls_dist_divergence: shapes must match, got " +
                     shape_str(fc.shape()) + " vs " + shape_str(fd.shape()));
  const int B = fc.dim(0), D = fc.dim(1);
  DivergenceResult r;
  double acc = 0.0;
  for (int i = 0; i < B; ++i) {
    const S* u = fc.data().data() + static_cast<size_t>(i) * D;
    const S* v = fd.data().data() + static_cast<size_t>(i) * D;
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (int j = 0; j < D; ++j) {
      uu += static_cast<double>(u[j]) * u[j];
      vv += static_cast<double>(v[j]) * v[j];
      uv += static_cast<double>(u[j]) * v[j];
    }
    if (uu == 0.0 || vv == 0.0) {
      ++r.excluded;
      continue;
    }
    acc += 1.0 - uv / (std::sqrt(uu) * std::sqrt(vv));
    ++r.counted;
  }
  r.mean_distance = r.counted > 0 ? acc / r.counted : 0.0;
  return r;
}

}  // namespace tdlt
