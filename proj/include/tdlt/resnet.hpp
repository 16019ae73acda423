// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Teacher convnet: a small-image residual network (3 stages of basic blocks,
// widths 16/32/64, stride-2 transitions, global average pooling). Exposes
// logits plus the pooled 64-wide feature vector, and a hard-label helper
// that resolves argmax ties toward the lowest class index.

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "tdlt/common.hpp"
#include "tdlt/rng.hpp"
#include "tdlt/tensor.hpp"

namespace tdlt {

struct TeacherConfig {
  int image = 32;
  int in_channels = 3;
  int base_width = 16;
  int blocks_per_stage = 5;  // 5 -> the classic 6n+2 = 32-layer small-image net
  int classes = 10;

  int feature_width() const { return base_width * 4; }
};

template <class S>
struct TeacherOutputT {
  TensorT<S> logits;    // [B, C]
  TensorT<S> features;  // [B, feature_width] pooled pre-head activations
};

template <class S>
class TeacherCNNT {
 public:
  using Tsr = TensorT<S>;

  explicit TeacherCNNT(const TeacherConfig& cfg, uint64_t init_seed)
      : cfg_(cfg) {
    if (cfg.base_width <= 0 || cfg.blocks_per_stage <= 0)
      throw ParamError("teacher: widths and depth must be positive");
    Rng rng(init_seed);
    auto conv_p = [&](int out_c, int in_c, int k) {
      auto t = Tsr::zeros({out_c, in_c, k, k});
      const double std = std::sqrt(2.0 / (static_cast<double>(k) * k * out_c));
      for (auto& v : t.data()) v = static_cast<S>(rng.normal() * std);
      t.set_requires_grad();
      return t;
    };
    auto tn = [&](std::vector<int> shape) {
      auto t = Tsr::zeros(std::move(shape));
      for (auto& v : t.data()) v = static_cast<S>(rng.trunc_normal(0.02));
      t.set_requires_grad();
      return t;
    };
    auto make_bn = [&](int c) {
      Bn bn;
      bn.g = Tsr::full({c}, S(1));
      bn.g.set_requires_grad();
      bn.b = Tsr::zeros({c});
      bn.b.set_requires_grad();
      bn.run_mean = Tsr::zeros({c});
      bn.run_var = Tsr::full({c}, S(1));
      return bn;
    };

    const int w1 = cfg.base_width, w2 = 2 * w1, w3 = 4 * w1;
    stem_w_ = conv_p(w1, cfg.in_channels, 3);
    stem_bn_ = make_bn(w1);
    const int widths[3] = {w1, w2, w3};
    int in_c = w1;
    for (int s = 0; s < 3; ++s) {
      for (int i = 0; i < cfg.blocks_per_stage; ++i) {
        Block b;
        b.stride = (s > 0 && i == 0) ? 2 : 1;
        const int out_c = widths[s];
        b.conv1 = conv_p(out_c, in_c, 3);
        b.bn1 = make_bn(out_c);
        b.conv2 = conv_p(out_c, out_c, 3);
        b.bn2 = make_bn(out_c);
        if (b.stride != 1 || in_c != out_c) {
          b.proj = conv_p(out_c, in_c, 1);
          b.proj_bn = make_bn(out_c);
          b.has_proj = true;
        }
        blocks_.push_back(std::move(b));
        in_c = out_c;
      }
    }
    head_w_ = tn({w3, cfg.classes});
    head_b_ = Tsr::zeros({cfg.classes});
    head_b_.set_requires_grad();
  }

  const TeacherConfig& config() const { return cfg_; }

  // Non-const: training-mode batchnorm updates the running statistics.
  TeacherOutputT<S> forward(const Tsr& x, bool training) {
    if (x.ndim() != 4 || x.dim(1) != cfg_.in_channels)
      throw ShapeError("teacher: expected input [B," +
                       std::to_string(cfg_.in_channels) + ",H,W], got " +
                       shape_str(x.shape()));
    auto h = relu(batchnorm2d(conv2d(x, stem_w_, 1, 1), stem_bn_.g, stem_bn_.b,
                              stem_bn_.run_mean, stem_bn_.run_var, training));
    for (auto& b : blocks_) {
      auto out = relu(batchnorm2d(conv2d(h, b.conv1, b.stride, 1), b.bn1.g,
                                  b.bn1.b, b.bn1.run_mean, b.bn1.run_var,
                                  training));
      out = batchnorm2d(conv2d(out, b.conv2, 1, 1), b.bn2.g, b.bn2.b,
                        b.bn2.run_mean, b.bn2.run_var, training);
      auto skip = h;
      if (b.has_proj)
        skip = batchnorm2d(conv2d(h, b.proj, b.stride, 0), b.proj_bn.g,
                           b.proj_bn.b, b.proj_bn.run_mean, b.proj_bn.run_var,
                           training);
      h = relu(add(out, skip));
    }
    TeacherOutputT<S> out;
    out.features = avgpool_global(h);
    out.logits = add(matmul(out.features, head_w_), head_b_);
    return out;
  }

  std::vector<std::pair<std::string, Tsr>> named_params() const {
    std::vector<std::pair<std::string, Tsr>> ps;
    ps.emplace_back("stem.w", stem_w_);
    ps.emplace_back("stem.bn.g", stem_bn_.g);
    ps.emplace_back("stem.bn.b", stem_bn_.b);
    for (size_t i = 0; i < blocks_.size(); ++i) {
      const auto& b = blocks_[i];
      std::string p = "blocks." + std::to_string(i) + ".";
      ps.emplace_back(p + "conv1", b.conv1);
      ps.emplace_back(p + "bn1.g", b.bn1.g);
      ps.emplace_back(p + "bn1.b", b.bn1.b);
      ps.emplace_back(p + "conv2", b.conv2);
      ps.emplace_back(p + "bn2.g", b.bn2.g);
      ps.emplace_back(p + "bn2.b", b.bn2.b);
      if (b.has_proj) {
        ps.emplace_back(p + "proj", b.proj);
        ps.emplace_back(p + "proj.bn.g", b.proj_bn.g);
        ps.emplace_back(p + "proj.bn.b", b.proj_bn.b);
      }
    }
    ps.emplace_back("head.w", head_w_);
    ps.emplace_back("head.b", head_b_);
    return ps;
  }

  // Batchnorm running statistics: state that must persist in checkpoints but
  // receives no gradient.
  std::vector<std::pair<std::string, Tsr>> named_buffers() const {
    std::vector<std::pair<std::string, Tsr>> bs;
    bs.emplace_back("stem.bn.rm", stem_bn_.run_mean);
    bs.emplace_back("stem.bn.rv", stem_bn_.run_var);
    for (size_t i = 0; i < blocks_.size(); ++i) {
      const auto& b = blocks_[i];
      std::string p = "blocks." + std::to_string(i) + ".";
      bs.emplace_back(p + "bn1.rm", b.bn1.run_mean);
      bs.emplace_back(p + "bn1.rv", b.bn1.run_var);
      bs.emplace_back(p + "bn2.rm", b.bn2.run_mean);
      bs.emplace_back(p + "bn2.rv", b.bn2.run_var);
      if (b.has_proj) {
        bs.emplace_back(p + "proj.bn.rm", b.proj_bn.run_mean);
        bs.emplace_back(p + "proj.bn.rv", b.proj_bn.run_var);
      }
    }
    return bs;
  }

  size_t param_count() const {
    size_t n = 0;
    for (const auto& [name, t] : named_params()) n += t.size();
    return n;
  }

  Tsr& first_conv() { return stem_w_; }

 private:
  struct Bn {
    Tsr g, b, run_mean, run_var;
  };
  struct Block {
    Tsr conv1, conv2, proj;
    Bn bn1, bn2, proj_bn;
    int stride = 1;
    bool has_proj = false;
  };
  TeacherConfig cfg_;
  Tsr stem_w_;
  Bn stem_bn_;
  std::vector<Block> blocks_;
  Tsr head_w_, head_b_;
};

using TeacherCNN = TeacherCNNT<float>;

// Row-wise argmax with ties resolved toward the lowest class index.
template <class S>
inline std::vector<int> hard_label(const TensorT<S>& logits) {
  if (logits.ndim() != 2)
    throw ShapeError("hard_label: expected [B,C] logits, got " +
                     shape_str(logits.shape()));
  const int B = logits.dim(0), C = logits.dim(1);
  std::vector<int> out(B);
  for (int i = 0; i < B; ++i) {
    const S* row = logits.data().data() + static_cast<size_t>(i) * C;
    int best = 0;
    for (int j = 1; j < C; ++j)
      if (row[j] > row[best]) best = j;
    out[i] = best;
  }
  return out;
}

}  // namespace tdlt
