// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Image augmentation stacks. The weak stack (pad-crop + flip) is what the
// convolutional teacher trains on; the strong stack (random resized crop,
// flip, color jitter, random erasing) plus mixup/cutmix produces the
// distillation inputs, which are deliberately far from the teacher's
// training distribution. All augmenters are pure functions of an explicit
// RNG and keep uint8 in / uint8 out at a fixed shape.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tdlt/common.hpp"
#include "tdlt/dataset.hpp"
#include "tdlt/rng.hpp"
#include "tdlt/tensor.hpp"

namespace tdlt {

namespace detail {

inline void hflip_u8(uint8_t* img, int C, int H, int W) {
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y) {
      uint8_t* row = img + (static_cast<size_t>(c) * H + y) * W;
      std::reverse(row, row + W);
    }
}

// Crop an HxW window at offset (oy, ox) out of the zero-padded image.
inline std::vector<uint8_t> crop_padded_u8(const uint8_t* img, int C, int H,
                                           int W, int pad, int oy, int ox) {
  std::vector<uint8_t> out(static_cast<size_t>(C) * H * W, 0);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y) {
      int sy = y + oy - pad;
      if (sy < 0 || sy >= H) continue;
      for (int x = 0; x < W; ++x) {
        int sx = x + ox - pad;
        if (sx < 0 || sx >= W) continue;
        out[(static_cast<size_t>(c) * H + y) * W + x] =
            img[(static_cast<size_t>(c) * H + sy) * W + sx];
      }
    }
  return out;
}

// Bilinear resample of the source window [sy0, sy0+sh) x [sx0, sx0+sw) to HxW.
inline std::vector<uint8_t> resize_window_u8(const uint8_t* img, int C, int H,
                                             int W, double sy0, double sx0,
                                             double sh, double sw) {
  std::vector<uint8_t> out(static_cast<size_t>(C) * H * W);
  for (int c = 0; c < C; ++c) {
    const uint8_t* src = img + static_cast<size_t>(c) * H * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double fy = sy0 + (y + 0.5) * sh / H - 0.5;
        double fx = sx0 + (x + 0.5) * sw / W - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        int x0 = static_cast<int>(std::floor(fx));
        double wy = fy - y0, wx = fx - x0;
        auto at = [&](int yy, int xx) -> double {
          yy = std::clamp(yy, 0, H - 1);
          xx = std::clamp(xx, 0, W - 1);
          return src[static_cast<size_t>(yy) * W + xx];
        };
        double v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x0 + 1)) +
                   wy * ((1 - wx) * at(y0 + 1, x0) + wx * at(y0 + 1, x0 + 1));
        out[(static_cast<size_t>(c) * H + y) * W + x] =
            static_cast<uint8_t>(std::clamp(v, 0.0, 255.0) + 0.5);
      }
  }
  return out;
}

inline double gray_at(const uint8_t* img, int H, int W, int y, int x) {
  size_t plane = static_cast<size_t>(H) * W;
  size_t i = static_cast<size_t>(y) * W + x;
  return 0.299 * img[i] + 0.587 * img[plane + i] + 0.114 * img[2 * plane + i];
}

}  // namespace detail

// Weak stack: 4-pixel zero padding, random crop back to HxW, then a
// horizontal flip with probability 0.5.
inline std::vector<uint8_t> weak_augment(const uint8_t* img, int C, int H,
                                         int W, Rng& rng) {
  const int pad = 4;
  int oy = static_cast<int>(rng.below(2 * pad + 1));
  int ox = static_cast<int>(rng.below(2 * pad + 1));
  auto out = detail::crop_padded_u8(img, C, H, W, pad, oy, ox);
  if (rng.bernoulli(0.5)) detail::hflip_u8(out.data(), C, H, W);
  return out;
}

struct StrongAugmentRecipe {
  double crop_prob = 1.0;        // random resized crop
  double crop_scale_min = 0.3;   // area fraction range
  double crop_scale_max = 1.0;
  double flip_prob = 0.5;
  double jitter_prob = 1.0;      // brightness/contrast/saturation jitter
  double jitter_strength = 0.3;  // factors drawn from [1-s, 1+s]
  double erase_prob = 0.25;      // random erasing with per-pixel noise
  double erase_frac_min = 0.02;  // erased area fraction range
  double erase_frac_max = 1.0 / 3.0;

  static StrongAugmentRecipe identity() {
    StrongAugmentRecipe r;
    r.crop_prob = r.flip_prob = r.jitter_prob = r.erase_prob = 0.0;
    return r;
  }
};

// Strong stack, applied in order: random resized crop, horizontal flip,
// color jitter, random erasing. With every probability at zero this is the
// identity map (same bytes out).
inline std::vector<uint8_t> strong_augment(const uint8_t* img, int C, int H,
                                           int W, Rng& rng,
                                           const StrongAugmentRecipe& rc = {}) {
  std::vector<uint8_t> out(img, img + static_cast<size_t>(C) * H * W);

  if (rc.crop_prob > 0 && rng.bernoulli(rc.crop_prob)) {
    // sample an area fraction and aspect ratio, clip the window, resize back
    double frac = rng.uniform(rc.crop_scale_min, rc.crop_scale_max);
    double aspect = std::exp(rng.uniform(std::log(3.0 / 4.0), std::log(4.0 / 3.0)));
    double area = frac * H * W;
    double sw = std::min(static_cast<double>(W), std::sqrt(area * aspect));
    double sh = std::min(static_cast<double>(H), std::sqrt(area / aspect));
    double sy0 = rng.uniform(0.0, H - sh);
    double sx0 = rng.uniform(0.0, W - sw);
    out = detail::resize_window_u8(out.data(), C, H, W, sy0, sx0, sh, sw);
  }
  if (rc.flip_prob > 0 && rng.bernoulli(rc.flip_prob))
    detail::hflip_u8(out.data(), C, H, W);

  if (rc.jitter_prob > 0 && rng.bernoulli(rc.jitter_prob)) {
    double s = rc.jitter_strength;
    double fb = rng.uniform(1.0 - s, 1.0 + s);
    double fc = rng.uniform(1.0 - s, 1.0 + s);
    double fs = rng.uniform(1.0 - s, 1.0 + s);
    const size_t plane = static_cast<size_t>(H) * W;
    // brightness
    std::vector<double> px(out.size());
    for (size_t i = 0; i < out.size(); ++i) px[i] = out[i] * fb;
    // contrast: blend toward the mean gray level
    double mg = 0;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) mg += detail::gray_at(out.data(), H, W, y, x);
    mg = mg * fb / plane;
    for (size_t i = 0; i < px.size(); ++i) px[i] = mg + (px[i] - mg) * fc;
    // saturation: blend toward per-pixel gray
    if (C == 3)
      for (size_t i = 0; i < plane; ++i) {
        double g = 0.299 * px[i] + 0.587 * px[plane + i] + 0.114 * px[2 * plane + i];
        px[i] = g + (px[i] - g) * fs;
        px[plane + i] = g + (px[plane + i] - g) * fs;
        px[2 * plane + i] = g + (px[2 * plane + i] - g) * fs;
      }
    for (size_t i = 0; i < out.size(); ++i)
      out[i] = static_cast<uint8_t>(std::clamp(px[i], 0.0, 255.0) + 0.5);
  }

  if (rc.erase_prob > 0 && rng.bernoulli(rc.erase_prob)) {
    double frac = rng.uniform(rc.erase_frac_min, rc.erase_frac_max);
    double aspect = std::exp(rng.uniform(std::log(0.3), std::log(1.0 / 0.3)));
    int eh = std::clamp(static_cast<int>(std::lround(std::sqrt(frac * H * W * aspect))), 1, H);
    int ew = std::clamp(static_cast<int>(std::lround(std::sqrt(frac * H * W / aspect))), 1, W);
    int ey = static_cast<int>(rng.below(static_cast<uint64_t>(H - eh + 1)));
    int ex = static_cast<int>(rng.below(static_cast<uint64_t>(W - ew + 1)));
    for (int c = 0; c < C; ++c)
      for (int y = ey; y < ey + eh; ++y)
        for (int x = ex; x < ex + ew; ++x)
          out[(static_cast<size_t>(c) * H + y) * W + x] =
              static_cast<uint8_t>(rng.below(256));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch assembly, soft targets, mixup / cutmix
// ---------------------------------------------------------------------------

// Stacks images into a normalized float tensor: x/255 then (x - mean)/std.
inline Tensor images_to_tensor(const std::vector<std::vector<uint8_t>>& batch,
                               int C, int H, int W, const ChannelStats& st) {
  if (batch.empty()) throw DataError("images_to_tensor: empty batch");
  const size_t plane = static_cast<size_t>(H) * W;
  auto t = Tensor::zeros({static_cast<int>(batch.size()), C, H, W});
  for (size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].size() != static_cast<size_t>(C) * plane)
      throw ShapeError("images_to_tensor: image size mismatch");
    for (int c = 0; c < C; ++c) {
      float m = static_cast<float>(st.mean[c]);
      float inv = static_cast<float>(1.0 / st.std[c]);
      const uint8_t* src = batch[b].data() + c * plane;
      float* dst = t.data().data() + (b * C + c) * plane;
      for (size_t i = 0; i < plane; ++i)
        dst[i] = (src[i] * (1.0f / 255.0f) - m) * inv;
    }
  }
  return t;
}

// Smoothed one-hot rows: 1-eps at the label, eps/(C-1) on every other class.
inline Tensor smoothed_onehot(const std::vector<int>& labels, int num_classes,
                              float eps) {
  if (eps < 0.0f || eps >= 1.0f)
    throw ParamError("smoothed_onehot: eps must lie in [0,1)");
  if (eps > 0.0f && num_classes < 2)
    throw ParamError("smoothed_onehot: smoothing needs >= 2 classes");
  float off = eps > 0.0f ? eps / (num_classes - 1) : 0.0f;
  auto t = Tensor::full({static_cast<int>(labels.size()), num_classes}, off);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw DataError("smoothed_onehot: label out of range");
    t.data()[i * num_classes + labels[i]] = 1.0f - eps;
  }
  return t;
}

struct AugmentedBatch {
  Tensor images;   // [B, C, H, W], normalized
  Tensor targets;  // [B, num_classes], rows sum to 1
  std::vector<int> labels;  // primary (unmixed) labels, for bookkeeping
};

// lambda-weighted blend of two aligned batches (explicit-lambda core).
inline AugmentedBatch mixup_with_lambda(const Tensor& xa, const std::vector<int>& ya,
                                        const Tensor& xb, const std::vector<int>& yb,
                                        int num_classes, double lambda,
                                        float smoothing) {
  if (xa.shape() != xb.shape() || ya.size() != yb.size() ||
      static_cast<size_t>(xa.dim(0)) != ya.size())
    throw ShapeError("mixup: batch shapes differ");
  AugmentedBatch out;
  out.images = Tensor::zeros(xa.shape());
  float l = static_cast<float>(lambda);
  for (size_t i = 0; i < out.images.size(); ++i)
    out.images.data()[i] = l * xa.data()[i] + (1 - l) * xb.data()[i];
  auto ta = smoothed_onehot(ya, num_classes, smoothing);
  auto tb = smoothed_onehot(yb, num_classes, smoothing);
  out.targets = Tensor::zeros(ta.shape());
  for (size_t i = 0; i < out.targets.size(); ++i)
    out.targets.data()[i] = l * ta.data()[i] + (1 - l) * tb.data()[i];
  out.labels = ya;
  return out;
}

inline AugmentedBatch mixup(const Tensor& xa, const std::vector<int>& ya,
                            const Tensor& xb, const std::vector<int>& yb,
                            int num_classes, double alpha, Rng& rng,
                            float smoothing = 0.0f) {
  if (alpha <= 0) throw ParamError("mixup: alpha must be positive");
  return mixup_with_lambda(xa, ya, xb, yb, num_classes, rng.beta(alpha, alpha),
                           smoothing);
}

// Pastes one rectangle of xb into xa (a single box for the whole batch) and
// blends targets with lambda recomputed from the clipped box area.
inline AugmentedBatch cutmix_with_box(const Tensor& xa, const std::vector<int>& ya,
                                      const Tensor& xb, const std::vector<int>& yb,
                                      int num_classes, double lambda, int cy,
                                      int cx, float smoothing) {
  if (xa.shape() != xb.shape() || ya.size() != yb.size())
    throw ShapeError("cutmix: batch shapes differ");
  int B = xa.dim(0), C = xa.dim(1), H = xa.dim(2), W = xa.dim(3);
  double cut = std::sqrt(1.0 - lambda);
  int bw = static_cast<int>(std::lround(W * cut));
  int bh = static_cast<int>(std::lround(H * cut));
  int y0 = std::clamp(cy - bh / 2, 0, H);
  int y1 = std::clamp(cy + (bh + 1) / 2, 0, H);
  int x0 = std::clamp(cx - bw / 2, 0, W);
  int x1 = std::clamp(cx + (bw + 1) / 2, 0, W);
  AugmentedBatch out;
  out.images = xa.clone();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int y = y0; y < y1; ++y) {
        size_t off = ((static_cast<size_t>(b) * C + c) * H + y) * W;
        for (int x = x0; x < x1; ++x)
          out.images.data()[off + x] = xb.data()[off + x];
      }
  double area = static_cast<double>(y1 - y0) * (x1 - x0);
  float l = static_cast<float>(1.0 - area / (static_cast<double>(H) * W));
  auto ta = smoothed_onehot(ya, num_classes, smoothing);
  auto tb = smoothed_onehot(yb, num_classes, smoothing);
  out.targets = Tensor::zeros(ta.shape());
  for (size_t i = 0; i < out.targets.size(); ++i)
    out.targets.data()[i] = l * ta.data()[i] + (1 - l) * tb.data()[i];
  out.labels = ya;
  return out;
}

inline AugmentedBatch cutmix(const Tensor& xa, const std::vector<int>& ya,
                             const Tensor& xb, const std::vector<int>& yb,
                             int num_classes, double alpha, Rng& rng,
                             float smoothing = 0.0f) {
  if (alpha <= 0) throw ParamError("cutmix: alpha must be positive");
  double lambda = rng.beta(alpha, alpha);
  int H = xa.dim(2), W = xa.dim(3);
  int cy = static_cast<int>(rng.below(static_cast<uint64_t>(H)));
  int cx = static_cast<int>(rng.below(static_cast<uint64_t>(W)));
  return cutmix_with_box(xa, ya, xb, yb, num_classes, lambda, cy, cx, smoothing);
}

// ---------------------------------------------------------------------------
// Class-balanced sampling (classifier re-training stage)
// ---------------------------------------------------------------------------

class ClassBalancedSampler {
 public:
  ClassBalancedSampler(const std::vector<int>& labels, int num_classes)
      : by_class_(num_classes) {
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= num_classes)
        throw DataError("sampler: label out of range");
      by_class_[labels[i]].push_back(i);
    }
    for (const auto& v : by_class_)
      if (v.empty()) throw DataError("sampler: a class has no examples");
  }

  // uniform class, then uniform instance within the class
  size_t draw(Rng& rng) const {
    const auto& v = by_class_[rng.below(by_class_.size())];
    return v[rng.below(v.size())];
  }

 private:
  std::vector<std::vector<size_t>> by_class_;
};

}  // namespace tdlt
