// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dual-token vision transformer: a standard pre-norm ViT trunk over patch
// tokens plus two learned tokens — one feeding the classification head, one
// feeding the distillation head. Each head reads its own token through its
// own final layernorm. Forward optionally captures post-softmax attention
// and the two token vectors after every block for the diagnostics.

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "tdlt/common.hpp"
#include "tdlt/rng.hpp"
#include "tdlt/tensor.hpp"

namespace tdlt {

struct ViTConfig {
  int image = 32;
  int patch = 4;
  int in_channels = 3;
  int embed = 128;
  int depth = 6;
  int heads = 4;
  int mlp_ratio = 4;
  int classes = 10;

  int patches_per_side() const {
    if (patch <= 0 || image % patch != 0)
      throw ShapeError("vit: image size must be divisible by patch size");
    return image / patch;
  }
  int n_patches() const { return patches_per_side() * patches_per_side(); }
  int seq_len() const { return n_patches() + 2; }  // [CLS, DIST, patches...]
};

// Post-softmax attention maps, one [B, heads, T, T] tensor per block.
template <class S>
struct AttentionRecordT {
  std::vector<TensorT<S>> blocks;
};

template <class S>
struct ViTOutputT {
  TensorT<S> logits_cls;     // [B, C]
  TensorT<S> logits_dist;    // [B, C]
  TensorT<S> features_cls;   // [B, D] (after the CLS-side final norm)
  TensorT<S> features_dist;  // [B, D]
  AttentionRecordT<S> attention;          // filled when capture requested
  std::vector<TensorT<S>> block_cls;      // raw CLS token after each block
  std::vector<TensorT<S>> block_dist;     // raw DIST token after each block
};

template <class S>
class DualTokenViTT {
 public:
  using Tsr = TensorT<S>;

  explicit DualTokenViTT(const ViTConfig& cfg, uint64_t init_seed)
      : cfg_(cfg) {
    if (cfg.embed % cfg.heads != 0)
      throw ParamError("vit: embed dim must be divisible by heads");
    Rng rng(init_seed);
    auto tn = [&](std::vector<int> shape) {
      auto t = Tsr::zeros(std::move(shape));
      for (auto& v : t.data()) v = static_cast<S>(rng.trunc_normal(0.02));
      t.set_requires_grad();
      return t;
    };
    auto zeros_p = [&](std::vector<int> shape) {
      auto t = Tsr::zeros(std::move(shape));
      t.set_requires_grad();
      return t;
    };
    auto ones_p = [&](std::vector<int> shape) {
      auto t = Tsr::full(std::move(shape), S(1));
      t.set_requires_grad();
      return t;
    };
    const int D = cfg.embed, R = cfg.mlp_ratio * cfg.embed;
    patch_w_ = tn({D, cfg.in_channels, cfg.patch, cfg.patch});
    patch_b_ = zeros_p({D});
    pos_ = tn({cfg.seq_len(), D});
    cls_ = tn({1, D});
    dist_ = tn({1, D});
    blocks_.resize(cfg.depth);
    for (auto& b : blocks_) {
      b.ln1_g = ones_p({D});
      b.ln1_b = zeros_p({D});
      b.qkv_w = tn({D, 3 * D});
      b.qkv_b = zeros_p({3 * D});
      b.proj_w = tn({D, D});
      b.proj_b = zeros_p({D});
      b.ln2_g = ones_p({D});
      b.ln2_b = zeros_p({D});
      b.fc1_w = tn({D, R});
      b.fc1_b = zeros_p({R});
      b.fc2_w = tn({R, D});
      b.fc2_b = zeros_p({D});
    }
    norm_c_g_ = ones_p({D});
    norm_c_b_ = zeros_p({D});
    norm_d_g_ = ones_p({D});
    norm_d_b_ = zeros_p({D});
    head_c_w_ = tn({D, cfg.classes});
    head_c_b_ = zeros_p({cfg.classes});
    head_d_w_ = tn({D, cfg.classes});
    head_d_b_ = zeros_p({cfg.classes});
  }

  const ViTConfig& config() const { return cfg_; }

  ViTOutputT<S> forward(const Tsr& x, bool capture = false) const {
    if (x.ndim() != 4 || x.dim(1) != cfg_.in_channels ||
        x.dim(2) != cfg_.image || x.dim(3) != cfg_.image)
      throw ShapeError("vit: expected input [B," +
                       std::to_string(cfg_.in_channels) + "," +
                       std::to_string(cfg_.image) + "," +
                       std::to_string(cfg_.image) + "], got " +
                       shape_str(x.shape()));
    const int B = x.dim(0), D = cfg_.embed, T = cfg_.seq_len();
    const int H = cfg_.heads, hd = D / H;
    ViTOutputT<S> out;

    // patchify: conv with stride = patch, then [B,D,P] -> [B,P,D]
    auto p = conv2d(x, patch_w_, patch_b_, cfg_.patch, 0);
    p = reshape(p, {B, D, cfg_.n_patches()});
    p = permute(p, {0, 2, 1});
    auto tokens = concat<S>({expand0(cls_, B), expand0(dist_, B), p}, 1);
    auto h = embedding_add(tokens, pos_);

    const S att_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));
    auto split_heads = [&](Tsr t) {
      t = reshape(t, {B, T, H, hd});
      t = permute(t, {0, 2, 1, 3});
      return reshape(t, {B * H, T, hd});
    };
    for (const auto& b : blocks_) {
      auto n = layernorm(h, b.ln1_g, b.ln1_b);
      auto qkv = add(matmul(n, b.qkv_w), b.qkv_b);
      auto q = split_heads(slice(qkv, 2, 0, D));
      auto k = split_heads(slice(qkv, 2, D, 2 * D));
      auto v = split_heads(slice(qkv, 2, 2 * D, 3 * D));
      auto att = softmax(scale(matmul(q, transpose(k)), att_scale), -1);
      if (capture)
        out.attention.blocks.push_back(
            Tsr::from_vector({B, H, T, T}, att.data()));
      auto o = matmul(att, v);
      o = reshape(o, {B, H, T, hd});
      o = permute(o, {0, 2, 1, 3});
      o = reshape(o, {B, T, D});
      h = add(h, add(matmul(o, b.proj_w), b.proj_b));
      auto m = layernorm(h, b.ln2_g, b.ln2_b);
      m = add(matmul(m, b.fc1_w), b.fc1_b);
      m = gelu(m);
      m = add(matmul(m, b.fc2_w), b.fc2_b);
      h = add(h, m);
      if (capture) {
        out.block_cls.push_back(
            Tsr::from_vector({B, D}, reshape(slice(h, 1, 0, 1), {B, D}).data()));
        out.block_dist.push_back(
            Tsr::from_vector({B, D}, reshape(slice(h, 1, 1, 2), {B, D}).data()));
      }
    }

    auto tok_c = reshape(slice(h, 1, 0, 1), {B, D});
    auto tok_d = reshape(slice(h, 1, 1, 2), {B, D});
    out.features_cls = layernorm(tok_c, norm_c_g_, norm_c_b_);
    out.features_dist = layernorm(tok_d, norm_d_g_, norm_d_b_);
    out.logits_cls = add(matmul(out.features_cls, head_c_w_), head_c_b_);
    out.logits_dist = add(matmul(out.features_dist, head_d_w_), head_d_b_);
    return out;
  }

  std::vector<std::pair<std::string, Tsr>> named_params() const {
    std::vector<std::pair<std::string, Tsr>> ps;
    ps.emplace_back("patch.w", patch_w_);
    ps.emplace_back("patch.b", patch_b_);
    ps.emplace_back("pos", pos_);
    ps.emplace_back("cls", cls_);
    ps.emplace_back("dist", dist_);
    for (size_t i = 0; i < blocks_.size(); ++i) {
      const auto& b = blocks_[i];
      std::string p = "blocks." + std::to_string(i) + ".";
      ps.emplace_back(p + "ln1.g", b.ln1_g);
      ps.emplace_back(p + "ln1.b", b.ln1_b);
      ps.emplace_back(p + "qkv.w", b.qkv_w);
      ps.emplace_back(p + "qkv.b", b.qkv_b);
      ps.emplace_back(p + "proj.w", b.proj_w);
      ps.emplace_back(p + "proj.b", b.proj_b);
      ps.emplace_back(p + "ln2.g", b.ln2_g);
      ps.emplace_back(p + "ln2.b", b.ln2_b);
      ps.emplace_back(p + "fc1.w", b.fc1_w);
      ps.emplace_back(p + "fc1.b", b.fc1_b);
      ps.emplace_back(p + "fc2.w", b.fc2_w);
      ps.emplace_back(p + "fc2.b", b.fc2_b);
    }
    ps.emplace_back("norm_c.g", norm_c_g_);
    ps.emplace_back("norm_c.b", norm_c_b_);
    ps.emplace_back("norm_d.g", norm_d_g_);
    ps.emplace_back("norm_d.b", norm_d_b_);
    ps.emplace_back("head_c.w", head_c_w_);
    ps.emplace_back("head_c.b", head_c_b_);
    ps.emplace_back("head_d.w", head_d_w_);
    ps.emplace_back("head_d.b", head_d_b_);
    return ps;
  }

  size_t param_count() const {
    size_t n = 0;
    for (const auto& [name, t] : named_params()) n += t.size();
    return n;
  }

  // direct access used by targeted tests (tying heads, zeroing weights)
  Tsr& head_c_w() { return head_c_w_; }
  Tsr& head_d_w() { return head_d_w_; }
  Tsr& head_c_b() { return head_c_b_; }
  Tsr& head_d_b() { return head_d_b_; }
  Tsr& cls_token() { return cls_; }
  Tsr& dist_token() { return dist_; }
  Tsr& norm_c_g() { return norm_c_g_; }
  Tsr& norm_c_b() { return norm_c_b_; }
  Tsr& norm_d_g() { return norm_d_g_; }
  Tsr& norm_d_b() { return norm_d_b_; }

 private:
  struct Block {
    Tsr ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b;
    Tsr ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };
  ViTConfig cfg_;
  Tsr patch_w_, patch_b_, pos_, cls_, dist_;
  std::vector<Block> blocks_;
  Tsr norm_c_g_, norm_c_b_, norm_d_g_, norm_d_b_;
  Tsr head_c_w_, head_c_b_, head_d_w_, head_d_b_;
};

using DualTokenViT = DualTokenViTT<float>;

}  // namespace tdlt
