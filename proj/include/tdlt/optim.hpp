// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// AdamW with decoupled weight decay, the warmup + cosine learning-rate
// schedule, and a sharpness-aware two-pass step wrapper for the teacher.

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tdlt/checkpoint.hpp"
#include "tdlt/common.hpp"
#include "tdlt/tensor.hpp"

namespace tdlt {

// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to
// min_lr at total_steps.
inline double cosine_lr(long step, long total_steps, long warmup_steps,
                        double base_lr, double min_lr = 0.0) {
  if (warmup_steps >= total_steps)
    throw ParamError("cosine_lr: warmup_steps must be < total_steps");
  if (step < 0) throw ParamError("cosine_lr: negative step");
  if (warmup_steps > 0 && step < warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (step >= total_steps) return min_lr;
  double progress = static_cast<double>(step - warmup_steps) /
                    static_cast<double>(total_steps - warmup_steps);
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(progress * M_PI));
}

// AdamW over an explicit parameter list. Weight decay is decoupled and by
// default applied only to tensors of rank >= 2 (matrices/kernels), leaving
// biases, norm scales, and token/position embeddings undecayed.
class AdamW {
 public:
  struct Hyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    bool decay_rank1 = false;  // also decay rank-0/1 tensors when true
  };

  AdamW(std::vector<Tensor> params, Hyper h) : params_(std::move(params)), h_(h) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].size(), 0.0f);
      v_[i].assign(params_[i].size(), 0.0f);
    }
  }

  void set_lr(double lr) { h_.lr = lr; }
  double lr() const { return h_.lr; }
  long step_count() const { return t_; }
  const std::vector<Tensor>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  // One update from the gradients currently stored on the parameters.
  // Parameters without a populated gradient are treated as zero-gradient.
  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(h_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(h_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      const bool decay = h_.weight_decay > 0.0 && (h_.decay_rank1 || p.ndim() >= 2);
      const float wd_step = decay ? static_cast<float>(h_.lr * h_.weight_decay) : 0.0f;
      float* w = p.data().data();
      const float* g = p.has_grad() ? p.grad().data() : nullptr;
      float* m = m_[i].data();
      float* v = v_[i].data();
      for (size_t j = 0; j < p.size(); ++j) {
        float gj = g ? g[j] : 0.0f;
        m[j] = static_cast<float>(h_.beta1) * m[j] +
               static_cast<float>(1.0 - h_.beta1) * gj;
        v[j] = static_cast<float>(h_.beta2) * v[j] +
               static_cast<float>(1.0 - h_.beta2) * gj * gj;
        double mhat = m[j] / bc1;
        double vhat = v[j] / bc2;
        double upd = h_.lr * mhat / (std::sqrt(vhat) + h_.eps);
        w[j] -= static_cast<float>(upd) + wd_step * w[j];
      }
    }
  }

  // Optimizer state as named tensors ("opt." prefix) for checkpointing.
  NamedTensors state(const std::vector<std::string>& param_names) const {
    if (param_names.size() != params_.size())
      throw ParamError("optimizer state: name count mismatch");
    NamedTensors out;
    out.emplace_back("opt.step",
                     Tensor::from_vector({1}, {static_cast<float>(t_)}));
    for (size_t i = 0; i < params_.size(); ++i) {
      out.emplace_back("opt.m." + param_names[i],
                       Tensor::from_vector(params_[i].shape(), m_[i]));
      out.emplace_back("opt.v." + param_names[i],
                       Tensor::from_vector(params_[i].shape(), v_[i]));
    }
    return out;
  }

  void load_state(const NamedTensors& entries,
                  const std::vector<std::string>& param_names) {
    if (param_names.size() != params_.size())
      throw ParamError("optimizer state: name count mismatch");
    t_ = static_cast<long>(find_tensor(entries, "opt.step").data()[0]);
    for (size_t i = 0; i < params_.size(); ++i) {
      const auto& m = find_tensor(entries, "opt.m." + param_names[i]);
      const auto& v = find_tensor(entries, "opt.v." + param_names[i]);
      if (m.size() != params_[i].size() || v.size() != params_[i].size())
        throw DataError("optimizer state: size mismatch for " + param_names[i]);
      m_[i] = m.data();
      v_[i] = v.data();
    }
  }

 private:
  std::vector<Tensor> params_;
  Hyper h_;
  std::vector<std::vector<float>> m_, v_;
  long t_ = 0;
};

// One sharpness-aware step: gradient at w, ascend to w + rho * g/||g||
// (global L2 over all parameters), gradient there, restore w, inner update
// with the perturbed-point gradient. rho == 0 (or a zero gradient) takes the
// plain path, which is bit-identical to calling the inner optimizer alone.
// Returns the loss value at the unperturbed point.
inline float sam_step(AdamW& inner, const std::function<Tensor()>& loss_fn,
                      double rho) {
  if (rho < 0) throw ParamError("sam_step: rho must be >= 0");
  inner.zero_grad();
  clear_tape<float>();
  auto loss = loss_fn();
  float loss_value = loss.item();
  loss.backward();
  if (rho > 0) {
    auto params = inner.params();  // handles share nodes with the model
    double norm2 = 0;
    for (auto& p : params)
      if (p.has_grad())
        for (float g : p.grad()) norm2 += static_cast<double>(g) * g;
    double norm = std::sqrt(norm2);
    if (norm > 0) {
      std::vector<std::vector<float>> saved;
      saved.reserve(params.size());
      for (auto& p : params) saved.push_back(p.data());
      const float scale = static_cast<float>(rho / norm);
      for (auto& p : params) {
        if (!p.has_grad()) continue;
        const auto& g = p.grad();
        for (size_t j = 0; j < p.size(); ++j) p.data()[j] += scale * g[j];
      }
      inner.zero_grad();
      clear_tape<float>();
      auto loss2 = loss_fn();
      loss2.backward();
      for (size_t i = 0; i < params.size(); ++i) params[i].data() = saved[i];
    }
  }
  inner.step();
  return loss_value;
}

}  // namespace tdlt
