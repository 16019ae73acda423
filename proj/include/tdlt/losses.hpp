// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Loss functions for long-tail training: smoothed / soft-target cross
// entropy, margin-based (count-aware) cross entropy for the teacher, the
// deferred re-weighting schedule built on effective numbers, and the
// half-and-half combined objective over the two student heads.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "tdlt/common.hpp"
#include "tdlt/tensor.hpp"

namespace tdlt {

// e = (1 - beta^n) / (1 - beta); the "effective number" of samples behind a
// class of size n under re-sampling overlap factor beta.
inline double effective_number(double n, double beta) {
  if (beta <= 0.0 || beta >= 1.0)
    throw ParamError("effective_number: beta must lie in (0,1)");
  if (n < 0.0) throw ParamError("effective_number: negative count");
  return (1.0 - std::pow(beta, n)) / (1.0 - beta);
}

struct DrwSchedule {
  double beta = 0.9999;          // effective-number hyperparameter
  int start_epoch = 0;           // K: first epoch with re-weighting active
  std::vector<int> class_counts; // N_y per class
  bool normalize = false;        // rescale active weights to mean 1
};

// w_y = 1 before epoch K, 1/e_y afterwards (optionally mean-normalized).
inline std::vector<double> drw_weights(const DrwSchedule& s, int epoch) {
  if (s.class_counts.empty()) throw ParamError("drw_weights: no class counts");
  std::vector<double> w(s.class_counts.size(), 1.0);
  if (epoch < s.start_epoch) return w;
  for (size_t c = 0; c < w.size(); ++c) {
    double e = effective_number(static_cast<double>(s.class_counts[c]), s.beta);
    if (e <= 0.0)
      throw ParamError("drw_weights: class " + std::to_string(c) +
                       " has zero effective number");
    w[c] = 1.0 / e;
  }
  if (s.normalize) {
    double mean = 0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    for (double& v : w) v /= mean;
  }
  return w;
}

// -sum(t * log_softmax(z)) averaged over the batch. Targets are per-row
// distributions (each row sums to 1, entries nonnegative).
template <class S>
TensorT<S> ce_soft(const TensorT<S>& logits, const TensorT<S>& targets) {
  if (logits.shape() != targets.shape())
    throw ShapeError("ce_soft: logits and targets must share shape");
  if (logits.ndim() != 2) throw ShapeError("ce_soft: expected [B,C] logits");
  for (S v : targets.data())
    if (v < S(0)) throw ParamError("ce_soft: negative target entry");
  int B = logits.dim(0);
  auto lsm = log_softmax(logits, -1);
  return scale(sum(mul(lsm, targets)), S(-1) / static_cast<S>(B));
}

// Cross entropy against hard labels with label smoothing: the target row
// puts 1-eps on the label and eps/(C-1) on each other class.
template <class S>
TensorT<S> ce_smoothed(const TensorT<S>& logits, const std::vector<int>& labels,
                       double eps) {
  if (eps < 0.0 || eps >= 1.0)
    throw ParamError("ce_smoothed: eps must lie in [0,1)");
  if (logits.ndim() != 2 || logits.dim(0) != static_cast<int>(labels.size()))
    throw ShapeError("ce_smoothed: logits/labels shape mismatch");
  int B = logits.dim(0), C = logits.dim(1);
  if (eps > 0.0 && C < 2) throw ParamError("ce_smoothed: smoothing needs C >= 2");
  auto t = TensorT<S>::full({B, C}, C >= 2 ? static_cast<S>(eps / (C - 1)) : S(0));
  for (int i = 0; i < B; ++i) {
    if (labels[i] < 0 || labels[i] >= C)
      throw DataError("ce_smoothed: label out of range");
    t.data()[static_cast<size_t>(i) * C + labels[i]] = static_cast<S>(1.0 - eps);
  }
  return ce_soft(logits, t);
}

// Per-sample CE against hard teacher labels, scaled by the class weight of
// the teacher label; plain mean over the batch.
template <class S>
TensorT<S> drw_distill_loss(const TensorT<S>& logits_dist,
                            const std::vector<int>& teacher_labels,
                            const std::vector<double>& weights) {
  if (logits_dist.ndim() != 2 ||
      logits_dist.dim(0) != static_cast<int>(teacher_labels.size()))
    throw ShapeError("drw_distill_loss: logits/labels shape mismatch");
  int B = logits_dist.dim(0), C = logits_dist.dim(1);
  if (static_cast<int>(weights.size()) != C)
    throw ParamError("drw_distill_loss: weights size != classes");
  auto t = TensorT<S>::zeros({B, C});
  for (int i = 0; i < B; ++i) {
    int y = teacher_labels[i];
    if (y < 0 || y >= C)
      throw DataError("drw_distill_loss: teacher label out of range");
    t.data()[static_cast<size_t>(i) * C + y] = static_cast<S>(weights[y]);
  }
  auto lsm = log_softmax(logits_dist, -1);
  return scale(sum(mul(lsm, t)), S(-1) / static_cast<S>(B));
}

// L = 1/2 CE(classification head, soft targets)
//   + 1/2 weighted CE(distillation head, teacher hard labels).
template <class S>
TensorT<S> combined_loss(const TensorT<S>& logits_cls,
                         const TensorT<S>& logits_dist,
                         const TensorT<S>& soft_targets,
                         const std::vector<int>& teacher_labels,
                         const std::vector<double>& weights) {
  auto a = ce_soft(logits_cls, soft_targets);
  auto b = drw_distill_loss(logits_dist, teacher_labels, weights);
  return scale(add(a, b), S(0.5));
}

struct LdamParams {
  double margin_scale = 1.0;  // C_s in margins C_s / N^(1/4)
  double max_margin = 0.5;    // margins rescaled so the largest equals this
  double logit_scale = 30.0;  // s multiplier applied after the margin shift
};

// Margins per class: C_s / N_j^(1/4), rescaled so max_j margin == max_margin
// (when both are positive). Nonincreasing in class count.
inline std::vector<double> ldam_margins(const std::vector<int>& counts,
                                        const LdamParams& p) {
  std::vector<double> m(counts.size());
  double mx = 0;
  for (size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] <= 0) throw ParamError("ldam_margins: nonpositive class count");
    m[j] = p.margin_scale / std::pow(static_cast<double>(counts[j]), 0.25);
    mx = std::max(mx, m[j]);
  }
  if (mx > 0 && p.max_margin > 0)
    for (double& v : m) v *= p.max_margin / mx;
  return m;
}

// CE over s * (z with the true-class logit shifted down by its margin),
// optionally per-class weighted (plain mean over the batch).
template <class S>
TensorT<S> ldam_loss(const TensorT<S>& logits, const std::vector<int>& labels,
                     const std::vector<int>& class_counts, const LdamParams& p,
                     const std::vector<double>& weights = {}) {
  if (logits.ndim() != 2 || logits.dim(0) != static_cast<int>(labels.size()))
    throw ShapeError("ldam_loss: logits/labels shape mismatch");
  int B = logits.dim(0), C = logits.dim(1);
  if (static_cast<int>(class_counts.size()) != C)
    throw ParamError("ldam_loss: counts size != classes");
  if (!weights.empty() && static_cast<int>(weights.size()) != C)
    throw ParamError("ldam_loss: weights size != classes");
  auto margins = ldam_margins(class_counts, p);
  auto shift = TensorT<S>::zeros({B, C});
  auto wt = TensorT<S>::zeros({B, C});
  for (int i = 0; i < B; ++i) {
    int y = labels[i];
    if (y < 0 || y >= C) throw DataError("ldam_loss: label out of range");
    shift.data()[static_cast<size_t>(i) * C + y] = static_cast<S>(margins[y]);
    wt.data()[static_cast<size_t>(i) * C + y] =
        static_cast<S>(weights.empty() ? 1.0 : weights[y]);
  }
  auto adjusted = scale(sub(logits, shift), static_cast<S>(p.logit_scale));
  auto lsm = log_softmax(adjusted, -1);
  return scale(sum(mul(lsm, wt)), S(-1) / static_cast<S>(B));
}

}  // namespace tdlt
