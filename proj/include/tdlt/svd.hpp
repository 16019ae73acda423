// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Economy singular value decomposition via one-sided Jacobi rotations, in
// double precision: A (m x n) = U (m x k) * diag(s) * V^T (k x n) with
// k = min(m, n) and s descending. Adequate for the spectra this project
// needs (feature matrices with a few thousand rows, a few hundred columns).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "tdlt/common.hpp"
#include "tdlt/tensor.hpp"

namespace tdlt {

struct SvdResult {
  int m = 0, n = 0, k = 0;
  std::vector<double> U;  // m x k, row-major, column-orthonormal
  std::vector<double> s;  // k, descending
  std::vector<double> V;  // n x k, row-major, column-orthonormal
};

namespace detail {

// One-sided Jacobi on the columns of A (m x n, row-major). Right-multiplies
// rotations into V (n x n). Columns whose norm falls below 1e-15 * ||A||_F
// are treated as zero. Throws NumericError if the sweep cap is hit.
inline void jacobi_onesided(std::vector<double>& A, int m, int n,
                            std::vector<double>& V) {
  V.assign(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) V[static_cast<size_t>(i) * n + i] = 1.0;
  double fro2 = 0;
  for (double v : A) fro2 += v * v;
  if (fro2 == 0.0) return;
  const double floor2 = fro2 * 1e-30;  // (1e-15 * ||A||_F)^2
  const double tol = 1e-13;
  const int max_sweeps = 60;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) {
        double alpha = 0, beta = 0, gamma = 0;
        for (int i = 0; i < m; ++i) {
          double ap = A[static_cast<size_t>(i) * n + p];
          double aq = A[static_cast<size_t>(i) * n + q];
          alpha += ap * ap;
          beta += aq * aq;
          gamma += ap * aq;
        }
        if (alpha <= floor2 || beta <= floor2) continue;
        if (std::fabs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        double zeta = (beta - alpha) / (2.0 * gamma);
        double t = (zeta >= 0 ? 1.0 : -1.0) /
                   (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double sn = c * t;
        for (int i = 0; i < m; ++i) {
          double ap = A[static_cast<size_t>(i) * n + p];
          double aq = A[static_cast<size_t>(i) * n + q];
          A[static_cast<size_t>(i) * n + p] = c * ap - sn * aq;
          A[static_cast<size_t>(i) * n + q] = sn * ap + c * aq;
        }
        for (int i = 0; i < n; ++i) {
          double vp = V[static_cast<size_t>(i) * n + p];
          double vq = V[static_cast<size_t>(i) * n + q];
          V[static_cast<size_t>(i) * n + p] = c * vp - sn * vq;
          V[static_cast<size_t>(i) * n + q] = sn * vp + c * vq;
        }
        rotated = true;
      }
    if (!rotated) return;
  }
  throw NumericError("svd: Jacobi sweeps did not converge");
}

// Fills zero columns of the m x k column matrix U with unit vectors
// orthogonal to all other columns (rank-deficient inputs).
inline void complete_basis(std::vector<double>& U, int m, int k,
                           const std::vector<char>& is_zero) {
  for (int j = 0; j < k; ++j) {
    if (!is_zero[j]) continue;
    for (int cand = 0; cand < m; ++cand) {
      std::vector<double> v(m, 0.0);
      v[cand] = 1.0;
      for (int pass = 0; pass < 2; ++pass)
        for (int c = 0; c < k; ++c) {
          if (c == j) continue;
          double dot = 0;
          for (int i = 0; i < m; ++i) dot += v[i] * U[static_cast<size_t>(i) * k + c];
          for (int i = 0; i < m; ++i) v[i] -= dot * U[static_cast<size_t>(i) * k + c];
        }
      double norm = 0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 0.5) {
        for (int i = 0; i < m; ++i) U[static_cast<size_t>(i) * k + j] = v[i] / norm;
        break;
      }
    }
  }
}

}  // namespace detail

inline SvdResult svd(std::vector<double> A, int m, int n) {
  if (m <= 0 || n <= 0) throw ShapeError("svd: empty matrix");
  SvdResult r;
  r.m = m;
  r.n = n;
  r.k = std::min(m, n);
  if (m >= n) {
    std::vector<double> V;
    detail::jacobi_onesided(A, m, n, V);
    double fro2 = 0;
    for (double v : A) fro2 += v * v;
    const double floor1 = std::sqrt(fro2) * 1e-15;
    r.s.assign(n, 0.0);
    r.U.assign(static_cast<size_t>(m) * n, 0.0);
    std::vector<char> is_zero(n, 0);
    for (int j = 0; j < n; ++j) {
      double norm = 0;
      for (int i = 0; i < m; ++i) {
        double v = A[static_cast<size_t>(i) * n + j];
        norm += v * v;
      }
      norm = std::sqrt(norm);
      if (norm > floor1) {
        r.s[j] = norm;
        for (int i = 0; i < m; ++i)
          r.U[static_cast<size_t>(i) * n + j] =
              A[static_cast<size_t>(i) * n + j] / norm;
      } else {
        is_zero[j] = 1;
      }
    }
    detail::complete_basis(r.U, m, n, is_zero);
    r.V = std::move(V);
  } else {
    // factor the transpose: A^T = U' S V'^T  =>  A = V' S U'^T
    std::vector<double> At(static_cast<size_t>(n) * m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        At[static_cast<size_t>(j) * m + i] = A[static_cast<size_t>(i) * n + j];
    SvdResult rt = svd(std::move(At), n, m);
    r.s = std::move(rt.s);
    r.U = std::move(rt.V);  // m x m == m x k
    r.V = std::move(rt.U);  // n x m == n x k
    return r;               // already sorted by the recursive call
  }
  // sort descending, permuting U and V columns to match
  const int k = r.k;
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return r.s[a] > r.s[b]; });
  bool sorted = true;
  for (int j = 0; j < k; ++j) sorted = sorted && idx[j] == j;
  if (sorted) return r;
  SvdResult o;
  o.m = m;
  o.n = n;
  o.k = k;
  o.s.resize(k);
  o.U.assign(r.U.size(), 0.0);
  o.V.assign(r.V.size(), 0.0);
  for (int j = 0; j < k; ++j) {
    o.s[j] = r.s[idx[j]];
    for (int i = 0; i < m; ++i)
      o.U[static_cast<size_t>(i) * k + j] = r.U[static_cast<size_t>(i) * k + idx[j]];
    for (int i = 0; i < n; ++i)
      o.V[static_cast<size_t>(i) * k + j] = r.V[static_cast<size_t>(i) * k + idx[j]];
  }
  return o;
}

// Singular values only, descending, length min(m, n).
inline std::vector<double> singular_values(const std::vector<double>& A, int m,
                                           int n) {
  return svd(A, m, n).s;
}

// Tensor convenience overload (2D, any scalar type; computes in double).
template <class S>
SvdResult svd(const TensorT<S>& a) {
  if (a.ndim() != 2) throw ShapeError("svd: expected a 2D tensor");
  std::vector<double> A(a.size());
  for (size_t i = 0; i < A.size(); ++i) A[i] = static_cast<double>(a.data()[i]);
  return svd(std::move(A), a.dim(0), a.dim(1));
}

}  // namespace tdlt
