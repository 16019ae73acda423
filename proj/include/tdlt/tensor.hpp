// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal dense tensor with reverse-mode automatic differentiation.
// Tensors are value-semantic handles over shared nodes; every primitive
// records a vector-Jacobian product on a thread-local tape. The tape is
// rebuilt per forward pass and cleared by backward(). Scalar type is a
// template parameter: float for training, double for oracles/diagnostics.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tdlt/common.hpp"

namespace tdlt {

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline size_t numel(const std::vector<int>& s) {
  size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
    n *= static_cast<size_t>(d);
  }
  return n;
}

namespace detail {

// C[m,n] += A[m,k] * B[k,n]
template <class S>
void gemm_nn(int M, int K, int N, const S* A, const S* B, S* C) {
  for (int i = 0; i < M; ++i) {
    const S* a = A + static_cast<size_t>(i) * K;
    S* c = C + static_cast<size_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      const S av = a[k];
      const S* b = B + static_cast<size_t>(k) * N;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <class S>
void gemm_nt(int M, int K, int N, const S* A, const S* B, S* C) {
  for (int i = 0; i < M; ++i) {
    const S* a = A + static_cast<size_t>(i) * K;
    S* c = C + static_cast<size_t>(i) * N;
    for (int j = 0; j < N; ++j) {
      const S* b = B + static_cast<size_t>(j) * K;
      S acc = 0;
      for (int k = 0; k < K; ++k) acc += a[k] * b[k];
      c[j] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
template <class S>
void gemm_tn(int M, int K, int N, const S* A, const S* B, S* C) {
  for (int i = 0; i < M; ++i) {
    const S* a = A + static_cast<size_t>(i) * K;
    const S* b = B + static_cast<size_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      const S av = a[k];
      S* c = C + static_cast<size_t>(k) * N;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace detail

template <class S>
struct TensorNodeT {
  std::vector<int> shape;
  std::vector<S> value;
  std::vector<S> grad;          // empty until first accumulation
  bool requires_grad = false;   // leaf flag set by the user
  bool needs_grad = false;      // requires_grad or produced by a recorded op

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), S(0));
  }
};

// Disables tape recording while alive (forward-only evaluation).
class NoGrad {
 public:
  NoGrad() { ++depth(); }
  ~NoGrad() { --depth(); }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;
  static bool enabled() { return depth() == 0; }

 private:
  static int& depth() {
    thread_local int d = 0;
    return d;
  }
};

// Ordered record of recorded primitives. Creation order is a topological
// order of the graph, so replaying entries in reverse accumulates the full
// chain rule. One tape per thread; cleared after backward.
template <class S>
class GradTapeT {
 public:
  struct Entry {
    TensorNodeT<S>* out;
    std::function<void()> vjp;  // captures shared ownership of its operands
  };

  static GradTapeT& instance() {
    thread_local GradTapeT t;
    return t;
  }

  void record(TensorNodeT<S>* out, std::function<void()> vjp) {
    entries_.push_back(Entry{out, std::move(vjp)});
  }

  size_t size() const { return entries_.size(); }

  void clear() { entries_.clear(); }

  // Replays VJPs in reverse creation order starting from `root` (scalar).
  // Entries whose output never received gradient contribute nothing and are
  // skipped. The tape is cleared afterwards.
  void backward_from(TensorNodeT<S>* root) {
    if (root->value.size() != 1)
      throw ShapeError("backward() requires a scalar root, got shape " +
                       shape_str(root->shape));
    root->ensure_grad();
    root->grad[0] = S(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (it->out->grad.empty()) continue;
      it->vjp();
    }
    clear();
  }

 private:
  std::vector<Entry> entries_;
};

template <class S>
class TensorT {
 public:
  using Node = TensorNodeT<S>;

  TensorT() = default;

  static TensorT zeros(std::vector<int> shape) {
    return full(std::move(shape), S(0));
  }

  static TensorT full(std::vector<int> shape, S v) {
    TensorT t;
    t.node_ = std::make_shared<Node>();
    t.node_->value.assign(numel(shape), v);
    t.node_->shape = std::move(shape);
    return t;
  }

  static TensorT from_vector(std::vector<int> shape, std::vector<S> data) {
    if (numel(shape) != data.size())
      throw ShapeError("from_vector: shape " + shape_str(shape) +
                       " does not match data length " +
                       std::to_string(data.size()));
    TensorT t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    return t;
  }

  static TensorT scalar(S v) { return from_vector({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const {
    int n = ndim();
    if (i < 0) i += n;
    if (i < 0 || i >= n) throw ShapeError("dim index out of range");
    return node_->shape[i];
  }
  size_t size() const { return node_->value.size(); }

  std::vector<S>& data() { return node_->value; }
  const std::vector<S>& data() const { return node_->value; }

  S item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor");
    return node_->value[0];
  }

  TensorT& set_requires_grad(bool b = true) {
    node_->requires_grad = b;
    node_->needs_grad = b || node_->needs_grad;
    return *this;
  }
  bool requires_grad() const { return node_->requires_grad; }
  bool needs_grad() const { return node_->needs_grad; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const std::vector<S>& grad() const {
    if (!has_grad())
      throw NumericError("gradient not populated; call backward() first");
    return node_->grad;
  }
  std::vector<S>& grad_ref() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (node_ && !node_->grad.empty())
      std::fill(node_->grad.begin(), node_->grad.end(), S(0));
  }

  void backward() { GradTapeT<S>::instance().backward_from(node_.get()); }

  // Detached deep copy (a fresh leaf).
  TensorT clone() const {
    TensorT t = from_vector(node_->shape, node_->value);
    return t;
  }

  template <class T>
  TensorT<T> cast() const {
    std::vector<T> out(node_->value.size());
    for (size_t i = 0; i < out.size(); ++i)
      out[i] = static_cast<T>(node_->value[i]);
    return TensorT<T>::from_vector(node_->shape, std::move(out));
  }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;

namespace detail {

template <class S>
bool should_record(std::initializer_list<const TensorT<S>*> inputs) {
  if (!NoGrad::enabled()) return false;
  for (const auto* t : inputs)
    if (t->needs_grad()) return true;
  return false;
}

template <class S>
void record(TensorT<S>& out, std::initializer_list<const TensorT<S>*> inputs,
            std::function<void()> vjp) {
  if (!should_record<S>(inputs)) return;
  out.node()->needs_grad = true;
  GradTapeT<S>::instance().record(out.node(), std::move(vjp));
}

}  // namespace detail

inline size_t tape_size_f32() { return GradTapeT<float>::instance().size(); }

template <class S>
void clear_tape() {
  GradTapeT<S>::instance().clear();
}

// ---------------------------------------------------------------------------
// Elementwise and broadcast arithmetic
// ---------------------------------------------------------------------------

// add(a, b): identical shapes, or b.shape a suffix of a.shape (bias /
// positional-embedding broadcast over leading dimensions).
template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  bool same = sa == sb;
  bool suffix = !same && sb.size() <= sa.size() &&
                std::equal(sb.rbegin(), sb.rend(), sa.rbegin());
  if (!same && !suffix)
    throw ShapeError("add: shapes " + shape_str(sa) + " and " + shape_str(sb) +
                     " are incompatible");
  auto out = TensorT<S>::from_vector(sa, a.data());
  const size_t nb = b.size();
  auto& ov = out.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i % nb];
  detail::record<S>(out, {&a, &b}, [an = a.node_ptr(), bn = b.node_ptr(),
                                    on = out.node_ptr(), nb]() {
    const auto& g = on->grad;
    if (an->needs_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
    }
    if (bn->needs_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) bn->grad[i % nb] += g[i];
    }
  });
  return out;
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  auto out = TensorT<S>::from_vector(a.shape(), a.data());
  auto& ov = out.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] -= bv[i];
  detail::record<S>(out, {&a, &b},
                    [an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr()]() {
                      const auto& g = on->grad;
                      if (an->needs_grad) {
                        an->ensure_grad();
                        for (size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
                      }
                      if (bn->needs_grad) {
                        bn->ensure_grad();
                        for (size_t i = 0; i < g.size(); ++i) bn->grad[i] -= g[i];
                      }
                    });
  return out;
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  auto out = TensorT<S>::from_vector(a.shape(), a.data());
  auto& ov = out.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
  detail::record<S>(out, {&a, &b},
                    [an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr()]() {
                      const auto& g = on->grad;
                      if (an->needs_grad) {
                        an->ensure_grad();
                        for (size_t i = 0; i < g.size(); ++i)
                          an->grad[i] += g[i] * bn->value[i];
                      }
                      if (bn->needs_grad) {
                        bn->ensure_grad();
                        for (size_t i = 0; i < g.size(); ++i)
                          bn->grad[i] += g[i] * an->value[i];
                      }
                    });
  return out;
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, S c) {
  auto out = TensorT<S>::from_vector(a.shape(), a.data());
  for (auto& v : out.data()) v *= c;
  detail::record<S>(out, {&a}, [an = a.node_ptr(), on = out.node_ptr(), c]() {
    if (!an->needs_grad) return;
    an->ensure_grad();
    const auto& g = on->grad;
    for (size_t i = 0; i < g.size(); ++i) an->grad[i] += c * g[i];
  });
  return out;
}

template <class S>
TensorT<S> add_scalar(const TensorT<S>& a, S c) {
  auto out = TensorT<S>::from_vector(a.shape(), a.data());
  for (auto& v : out.data()) v += c;
  detail::record<S>(out, {&a}, [an = a.node_ptr(), on = out.node_ptr()]() {
    if (!an->needs_grad) return;
    an->ensure_grad();
    const auto& g = on->grad;
    for (size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Matrix multiplication: [m,k]x[k,n], [B,m,k]x[k,n], [B,m,k]x[B,k,n]
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() == 2 && sb.size() == 2) {
    int m = sa[0], k = sa[1], n = sb[1];
    if (sb[0] != k)
      throw ShapeError("matmul: inner dimensions " + shape_str(sa) + " x " +
                       shape_str(sb) + " do not match");
    auto out = TensorT<S>::zeros({m, n});
    detail::gemm_nn(m, k, n, a.data().data(), b.data().data(),
                    out.data().data());
    detail::record<S>(out, {&a, &b}, [an = a.node_ptr(), bn = b.node_ptr(),
                                      on = out.node_ptr(), m, k, n]() {
      const S* g = on->grad.data();
      if (an->needs_grad) {
        an->ensure_grad();
        detail::gemm_nt(m, n, k, g, bn->value.data(), an->grad.data());
      }
      if (bn->needs_grad) {
        bn->ensure_grad();
        detail::gemm_tn(m, k, n, an->value.data(), g, bn->grad.data());
      }
    });
    return out;
  }
  if (sa.size() == 3 && sb.size() == 2) {
    int B = sa[0], m = sa[1], k = sa[2], n = sb[1];
    if (sb[0] != k)
      throw ShapeError("matmul: inner dimensions " + shape_str(sa) + " x " +
                       shape_str(sb) + " do not match");
    auto out = TensorT<S>::zeros({B, m, n});
    for (int i = 0; i < B; ++i)
      detail::gemm_nn(m, k, n, a.data().data() + static_cast<size_t>(i) * m * k,
                      b.data().data(),
                      out.data().data() + static_cast<size_t>(i) * m * n);
    detail::record<S>(out, {&a, &b}, [an = a.node_ptr(), bn = b.node_ptr(),
                                      on = out.node_ptr(), B, m, k, n]() {
      if (an->needs_grad) {
        an->ensure_grad();
        for (int i = 0; i < B; ++i)
          detail::gemm_nt(m, n, k,
                          on->grad.data() + static_cast<size_t>(i) * m * n,
                          bn->value.data(),
                          an->grad.data() + static_cast<size_t>(i) * m * k);
      }
      if (bn->needs_grad) {
        bn->ensure_grad();
        for (int i = 0; i < B; ++i)
          detail::gemm_tn(m, k, n,
                          an->value.data() + static_cast<size_t>(i) * m * k,
                          on->grad.data() + static_cast<size_t>(i) * m * n,
                          bn->grad.data());
      }
    });
    return out;
  }
  if (sa.size() == 3 && sb.size() == 3) {
    int B = sa[0], m = sa[1], k = sa[2], n = sb[2];
    if (sb[0] != B || sb[1] != k)
      throw ShapeError("matmul: batched shapes " + shape_str(sa) + " x " +
                       shape_str(sb) + " do not match");
    auto out = TensorT<S>::zeros({B, m, n});
    for (int i = 0; i < B; ++i)
      detail::gemm_nn(m, k, n, a.data().data() + static_cast<size_t>(i) * m * k,
                      b.data().data() + static_cast<size_t>(i) * k * n,
                      out.data().data() + static_cast<size_t>(i) * m * n);
    detail::record<S>(out, {&a, &b}, [an = a.node_ptr(), bn = b.node_ptr(),
                                      on = out.node_ptr(), B, m, k, n]() {
      for (int i = 0; i < B; ++i) {
        const S* g = on->grad.data() + static_cast<size_t>(i) * m * n;
        if (an->needs_grad) {
          an->ensure_grad();
          detail::gemm_nt(m, n, k, g,
                          bn->value.data() + static_cast<size_t>(i) * k * n,
                          an->grad.data() + static_cast<size_t>(i) * m * k);
        }
        if (bn->needs_grad) {
          bn->ensure_grad();
          detail::gemm_tn(m, k, n,
                          an->value.data() + static_cast<size_t>(i) * m * k, g,
                          bn->grad.data() + static_cast<size_t>(i) * k * n);
        }
      }
    });
    return out;
  }
  throw ShapeError("matmul: unsupported ranks " + shape_str(sa) + " x " +
                   shape_str(sb));
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> reshape(const TensorT<S>& a, std::vector<int> shape) {
  if (numel(shape) != a.size())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  auto out = TensorT<S>::from_vector(std::move(shape), a.data());
  detail::record<S>(out, {&a}, [an = a.node_ptr(), on = out.node_ptr()]() {
    if (!an->needs_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
  });
  return out;
}

// Swap the last two axes (rank >= 2); leading axes are batch.
template <class S>
TensorT<S> transpose(const TensorT<S>& a) {
  const auto& s = a.shape();
  if (s.size() < 2) throw ShapeError("transpose: rank must be >= 2");
  int r = s[s.size() - 2], c = s.back();
  size_t batches = a.size() / (static_cast<size_t>(r) * c);
  std::vector<int> os = s;
  std::swap(os[os.size() - 2], os[os.size() - 1]);
  auto out = TensorT<S>::zeros(os);
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t b = 0; b < batches; ++b) {
    const S* src = av.data() + b * r * c;
    S* dst = ov.data() + b * r * c;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        dst[static_cast<size_t>(j) * r + i] = src[static_cast<size_t>(i) * c + j];
  }
  detail::record<S>(out, {&a},
                    [an = a.node_ptr(), on = out.node_ptr(), r, c, batches]() {
                      if (!an->needs_grad) return;
                      an->ensure_grad();
                      for (size_t b = 0; b < batches; ++b) {
                        const S* g = on->grad.data() + b * r * c;
                        S* dst = an->grad.data() + b * r * c;
                        for (int j = 0; j < c; ++j)
                          for (int i = 0; i < r; ++i)
                            dst[static_cast<size_t>(i) * c + j] +=
                                g[static_cast<size_t>(j) * r + i];
                      }
                    });
  return out;
}

namespace detail {

inline std::vector<size_t> row_major_strides(const std::vector<int>& shape) {
  std::vector<size_t> st(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * static_cast<size_t>(shape[i + 1]);
  return st;
}

}  // namespace detail

// General axis permutation; grad is the inverse permutation.
template <class S>
TensorT<S> permute(const TensorT<S>& a, const std::vector<int>& perm) {
  const auto& s = a.shape();
  if (perm.size() != s.size()) throw ShapeError("permute: rank mismatch");
  std::vector<int> os(s.size());
  std::vector<char> seen(s.size(), 0);
  for (size_t i = 0; i < perm.size(); ++i) {
    int p = perm[i];
    if (p < 0 || p >= static_cast<int>(s.size()) || seen[p])
      throw ShapeError("permute: invalid permutation");
    seen[p] = 1;
    os[i] = s[p];
  }
  auto in_st = detail::row_major_strides(s);
  auto out = TensorT<S>::zeros(os);
  auto out_st = detail::row_major_strides(os);
  const size_t n = a.size();
  const auto& av = a.data();
  auto& ov = out.data();
  const int nd = static_cast<int>(s.size());
  std::vector<int> idx(nd, 0);
  for (size_t lin = 0; lin < n; ++lin) {
    size_t src = 0;
    for (int d = 0; d < nd; ++d) src += idx[d] * in_st[perm[d]];
    ov[lin] = av[src];
    for (int d = nd - 1; d >= 0; --d) {
      if (++idx[d] < os[d]) break;
      idx[d] = 0;
    }
  }
  detail::record<S>(out, {&a}, [an = a.node_ptr(), on = out.node_ptr(), perm,
                                in_st, os, nd]() {
    if (!an->needs_grad) return;
    an->ensure_grad();
    std::vector<int> idx(nd, 0);
    const auto& g = on->grad;
    for (size_t lin = 0; lin < g.size(); ++lin) {
      size_t src = 0;
      for (int d = 0; d < nd; ++d) src += idx[d] * in_st[perm[d]];
      an->grad[src] += g[lin];
      for (int d = nd - 1; d >= 0; --d) {
        if (++idx[d] < os[d]) break;
        idx[d] = 0;
      }
    }
  });
  return out;
}

// Replicate a tensor along a new leading batch axis; grad sums over it.
template <class S>
TensorT<S> expand0(const TensorT<S>& a, int batch) {
  std::vector<int> os;
  os.push_back(batch);
  os.insert(os.end(), a.shape().begin(), a.shape().end());
  auto out = TensorT<S>::zeros(os);
  const size_t n = a.size();
  for (int b = 0; b < batch; ++b)
    std::copy(a.data().begin(), a.data().end(), out.data().begin() + b * n);
  detail::record<S>(out, {&a},
                    [an = a.node_ptr(), on = out.node_ptr(), batch, n]() {
                      if (!an->needs_grad) return;
                      an->ensure_grad();
                      for (int b = 0; b < batch; ++b) {
                        const S* g = on->grad.data() + static_cast<size_t>(b) * n;
                        for (size_t i = 0; i < n; ++i) an->grad[i] += g[i];
                      }
                    });
  return out;
}

namespace detail {

template <class S>
void axis_split(const TensorT<S>& a, int axis, size_t& outer, int& mid,
                size_t& inner) {
  const auto& s = a.shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw ShapeError("axis out of range for shape " + shape_str(s));
  outer = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(s[i]);
  mid = s[axis];
  inner = 1;
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= static_cast<size_t>(s[i]);
}

}  // namespace detail

// Contiguous range [from, to) along `axis`.
template <class S>
TensorT<S> slice(const TensorT<S>& a, int axis, int from, int to) {
  size_t outer, inner;
  int mid;
  detail::axis_split(a, axis, outer, mid, inner);
  if (from < 0 || to > mid || from >= to)
    throw ShapeError("slice: invalid range [" + std::to_string(from) + "," +
                     std::to_string(to) + ") along axis of size " +
                     std::to_string(mid));
  std::vector<int> os = a.shape();
  int ax = axis < 0 ? axis + static_cast<int>(os.size()) : axis;
  os[ax] = to - from;
  auto out = TensorT<S>::zeros(os);
  const int len = to - from;
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t o = 0; o < outer; ++o)
    std::copy(av.begin() + (o * mid + from) * inner,
              av.begin() + (o * mid + to) * inner,
              ov.begin() + o * len * inner);
  detail::record<S>(out, {&a}, [an = a.node_ptr(), on = out.node_ptr(), outer,
                                mid, inner, from, len]() {
    if (!an->needs_grad) return;
    an->ensure_grad();
    const auto& g = on->grad;
    for (size_t o = 0; o < outer; ++o) {
      const S* src = g.data() + o * len * inner;
      S* dst = an->grad.data() + (o * mid + from) * inner;
      for (size_t i = 0; i < static_cast<size_t>(len) * inner; ++i)
        dst[i] += src[i];
    }
  });
  return out;
}

template <class S>
TensorT<S> concat(const std::vector<TensorT<S>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  size_t outer, inner;
  int mid0;
  detail::axis_split(parts[0], axis, outer, mid0, inner);
  int ax = axis < 0 ? axis + parts[0].ndim() : axis;
  int total = 0;
  for (const auto& p : parts) {
    auto s = p.shape();
    s[ax] = parts[0].shape()[ax];
    if (s != parts[0].shape())
      throw ShapeError("concat: shapes differ outside the concat axis");
    total += p.shape()[ax];
  }
  std::vector<int> os = parts[0].shape();
  os[ax] = total;
  auto out = TensorT<S>::zeros(os);
  auto& ov = out.data();
  size_t off = 0;
  for (const auto& p : parts) {
    int mid = p.shape()[ax];
    const auto& pv = p.data();
    for (size_t o = 0; o < outer; ++o)
      std::copy(pv.begin() + o * mid * inner, pv.begin() + (o + 1) * mid * inner,
                ov.begin() + (o * total + off) * inner);
    off += static_cast<size_t>(mid);
  }
  bool rec = false;
  for (const auto& p : parts) rec = rec || p.needs_grad();
  if (NoGrad::enabled() && rec) {
    out.node()->needs_grad = true;
    std::vector<std::shared_ptr<TensorNodeT<S>>> nodes;
    std::vector<int> mids;
    for (const auto& p : parts) {
      nodes.push_back(p.node_ptr());
      mids.push_back(p.shape()[ax]);
    }
    GradTapeT<S>::instance().record(
        out.node(), [nodes, mids, on = out.node_ptr(), outer, inner, total]() {
          const auto& g = on->grad;
          size_t off = 0;
          for (size_t pi = 0; pi < nodes.size(); ++pi) {
            int mid = mids[pi];
            if (nodes[pi]->needs_grad) {
              nodes[pi]->ensure_grad();
              for (size_t o = 0; o < outer; ++o) {
                const S* src = g.data() + (o * total + off) * inner;
                S* dst = nodes[pi]->grad.data() + o * mid * inner;
                for (size_t i = 0; i < static_cast<size_t>(mid) * inner; ++i)
                  dst[i] += src[i];
              }
            }
            off += static_cast<size_t>(mid);
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> relu(const TensorT<S>& a) {
  auto out = TensorT<S>::from_vector(a.shape(), a.data());
  for (auto& v : out.data())
    if (v < S(0)) v = S(0);
  detail::record<S>(out, {&a}, [an = a.node_ptr(), on = out.node_ptr()]() {
    if (!an->needs_grad) return;
    an->ensure_grad();
    const auto& g = on->grad;
    for (size_t i = 0; i < g.size(); ++i)
      if (an->value[i] > S(0)) an->grad[i] += g[i];
  });
  return out;
}

// Exact GELU: x * Phi(x).
template <class S>
TensorT<S> gelu(const TensorT<S>& a) {
  auto out = TensorT<S>::from_vector(a.shape(), a.data());
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  for (auto& v : out.data())
    v = static_cast<S>(0.5 * static_cast<double>(v) *
                       (1.0 + std::erf(static_cast<double>(v) * inv_sqrt2)));
  detail::record<S>(out, {&a}, [an = a.node_ptr(), on = out.node_ptr()]() {
    if (!an->needs_grad) return;
    an->ensure_grad();
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    const auto& g = on->grad;
    for (size_t i = 0; i < g.size(); ++i) {
      double x = static_cast<double>(an->value[i]);
      double phi = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
      an->grad[i] += g[i] * static_cast<S>(phi + x * pdf);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Softmax family (max-subtracted; rejects non-finite lanes)
// ---------------------------------------------------------------------------

namespace detail {

template <class S, class Fn>
void for_each_lane(const TensorT<S>& a, int axis, Fn&& fn) {
  size_t outer, inner;
  int mid;
  axis_split(a, axis, outer, mid, inner);
  for (size_t o = 0; o < outer; ++o)
    for (size_t in = 0; in < inner; ++in) fn(o * mid * inner + in, inner, mid);
}

}  // namespace detail

template <class S>
TensorT<S> softmax(const TensorT<S>& a, int axis = -1) {
  auto out = TensorT<S>::from_vector(a.shape(), a.data());
  auto& v = out.data();
  detail::for_each_lane(a, axis, [&](size_t base, size_t stride, int mid) {
    S mx = v[base];
    for (int i = 1; i < mid; ++i) mx = std::max(mx, v[base + i * stride]);
    if (!std::isfinite(static_cast<double>(mx)))
      throw NumericError("softmax: non-finite input");
    S sum = 0;
    for (int i = 0; i < mid; ++i) {
      S e = std::exp(v[base + i * stride] - mx);
      v[base + i * stride] = e;
      sum += e;
    }
    if (!(sum > S(0)) || !std::isfinite(static_cast<double>(sum)))
      throw NumericError("softmax: invalid lane sum");
    for (int i = 0; i < mid; ++i) v[base + i * stride] /= sum;
  });
  detail::record<S>(out, {&a}, [an = a.node_ptr(), on = out.node_ptr(), axis]() {
    if (!an->needs_grad) return;
    an->ensure_grad();
    const auto& y = on->value;
    const auto& g = on->grad;
    std::vector<int> s = on->shape;
    int ax = axis < 0 ? axis + static_cast<int>(s.size()) : axis;
    size_t outer = 1;
    for (int i = 0; i < ax; ++i) outer *= static_cast<size_t>(s[i]);
    int mid = s[ax];
    size_t inner = 1;
    for (size_t i = ax + 1; i < s.size(); ++i) inner *= static_cast<size_t>(s[i]);
    for (size_t o = 0; o < outer; ++o)
      for (size_t in = 0; in < inner; ++in) {
        size_t base = o * mid * inner + in;
        S dot = 0;
        for (int i = 0; i < mid; ++i)
          dot += g[base + i * inner] * y[base + i * inner];
        for (int i = 0; i < mid; ++i)
          an->grad[base + i * inner] +=
              y[base + i * inner] * (g[base + i * inner] - dot);
      }
  });
  return out;
}

template <class S>
TensorT<S> log_softmax(const TensorT<S>& a, int axis = -1) {
  auto out = TensorT<S>::from_vector(a.shape(), a.data());
  auto& v = out.data();
  detail::for_each_lane(a, axis, [&](size_t base, size_t stride, int mid) {
    S mx = v[base];
    for (int i = 1; i < mid; ++i) mx = std::max(mx, v[base + i * stride]);
    if (!std::isfinite(static_cast<double>(mx)))
      throw NumericError("log_softmax: non-finite input");
    S sum = 0;
    for (int i = 0; i < mid; ++i) sum += std::exp(v[base + i * stride] - mx);
    S lse = mx + std::log(sum);
    for (int i = 0; i < mid; ++i) v[base + i * stride] -= lse;
  });
  detail::record<S>(out, {&a}, [an = a.node_ptr(), on = out.node_ptr(), axis]() {
    if (!an->needs_grad) return;
    an->ensure_grad();
    const auto& y = on->value;
    const auto& g = on->grad;
    std::vector<int> s = on->shape;
    int ax = axis < 0 ? axis + static_cast<int>(s.size()) : axis;
    size_t outer = 1;
    for (int i = 0; i < ax; ++i) outer *= static_cast<size_t>(s[i]);
    int mid = s[ax];
    size_t inner = 1;
    for (size_t i = ax + 1; i < s.size(); ++i) inner *= static_cast<size_t>(s[i]);
    for (size_t o = 0; o < outer; ++o)
      for (size_t in = 0; in < inner; ++in) {
        size_t base = o * mid * inner + in;
        S gsum = 0;
        for (int i = 0; i < mid; ++i) gsum += g[base + i * inner];
        for (int i = 0; i < mid; ++i)
          an->grad[base + i * inner] +=
              g[base + i * inner] - std::exp(y[base + i * inner]) * gsum;
      }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// Layer normalization over the last dimension. Zero-variance rows normalize
// to 0 via the epsilon in the denominator.
template <class S>
TensorT<S> layernorm(const TensorT<S>& x, const TensorT<S>& gamma,
                     const TensorT<S>& beta, S eps = S(1e-5)) {
  const auto& s = x.shape();
  int D = s.back();
  if (gamma.size() != static_cast<size_t>(D) ||
      beta.size() != static_cast<size_t>(D))
    throw ShapeError("layernorm: gamma/beta must have length " +
                     std::to_string(D));
  size_t rows = x.size() / static_cast<size_t>(D);
  auto out = TensorT<S>::zeros(s);
  auto stats = std::make_shared<std::vector<S>>(rows * 2);  // mean, inv_std
  const auto& xv = x.data();
  auto& ov = out.data();
  const auto& gv = gamma.data();
  const auto& bv = beta.data();
  for (size_t r = 0; r < rows; ++r) {
    const S* xr = xv.data() + r * D;
    S* orow = ov.data() + r * D;
    S mean = 0;
    for (int i = 0; i < D; ++i) mean += xr[i];
    mean /= static_cast<S>(D);
    S var = 0;
    for (int i = 0; i < D; ++i) {
      S d = xr[i] - mean;
      var += d * d;
    }
    var /= static_cast<S>(D);
    S inv_std = S(1) / std::sqrt(var + eps);
    (*stats)[2 * r] = mean;
    (*stats)[2 * r + 1] = inv_std;
    for (int i = 0; i < D; ++i)
      orow[i] = (xr[i] - mean) * inv_std * gv[i] + bv[i];
  }
  detail::record<S>(out, {&x, &gamma, &beta},
                    [xn = x.node_ptr(), gn = gamma.node_ptr(),
                     bn = beta.node_ptr(), on = out.node_ptr(), stats, rows, D]() {
    const auto& g = on->grad;
    for (size_t r = 0; r < rows; ++r) {
      const S* xr = xn->value.data() + r * D;
      const S* gr = g.data() + r * D;
      S mean = (*stats)[2 * r];
      S inv_std = (*stats)[2 * r + 1];
      if (gn->needs_grad) {
        gn->ensure_grad();
        for (int i = 0; i < D; ++i)
          gn->grad[i] += gr[i] * (xr[i] - mean) * inv_std;
      }
      if (bn->needs_grad) {
        bn->ensure_grad();
        for (int i = 0; i < D; ++i) bn->grad[i] += gr[i];
      }
      if (xn->needs_grad) {
        xn->ensure_grad();
        S* dxr = xn->grad.data() + r * D;
        S sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (int i = 0; i < D; ++i) {
          S xhat = (xr[i] - mean) * inv_std;
          S dxhat = gr[i] * gn->value[i];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
        }
        S invD = S(1) / static_cast<S>(D);
        for (int i = 0; i < D; ++i) {
          S xhat = (xr[i] - mean) * inv_std;
          S dxhat = gr[i] * gn->value[i];
          dxr[i] += inv_std *
                    (dxhat - invD * sum_dxhat - xhat * invD * sum_dxhat_xhat);
        }
      }
    }
  });
  return out;
}

// Batch normalization over (N, H, W) per channel, NCHW layout. In training
// mode normalizes with batch statistics and updates the running buffers
// (unbiased variance, torch convention); in eval mode uses the buffers.
template <class S>
TensorT<S> batchnorm2d(const TensorT<S>& x, const TensorT<S>& gamma,
                       const TensorT<S>& beta, TensorT<S>& running_mean,
                       TensorT<S>& running_var, bool training,
                       S momentum = S(0.1), S eps = S(1e-5)) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ShapeError("batchnorm2d: expected NCHW input");
  int N = s[0], C = s[1], H = s[2], W = s[3];
  if (gamma.size() != static_cast<size_t>(C) ||
      beta.size() != static_cast<size_t>(C) ||
      running_mean.size() != static_cast<size_t>(C) ||
      running_var.size() != static_cast<size_t>(C))
    throw ShapeError("batchnorm2d: parameter length must equal channels");
  const size_t plane = static_cast<size_t>(H) * W;
  const size_t cstride = plane;
  const size_t nstride = static_cast<size_t>(C) * plane;
  auto out = TensorT<S>::zeros(s);
  auto stats = std::make_shared<std::vector<S>>(2 * C);  // mean, inv_std used
  const auto& xv = x.data();
  auto& ov = out.data();
  const auto& gv = gamma.data();
  const auto& bv = beta.data();
  const S M = static_cast<S>(static_cast<size_t>(N) * plane);
  for (int c = 0; c < C; ++c) {
    S mean, var;
    if (training) {
      S sum = 0, sq = 0;
      for (int n = 0; n < N; ++n) {
        const S* p = xv.data() + n * nstride + c * cstride;
        for (size_t i = 0; i < plane; ++i) {
          sum += p[i];
          sq += p[i] * p[i];
        }
      }
      mean = sum / M;
      var = sq / M - mean * mean;
      if (var < S(0)) var = S(0);
      S unbiased = M > S(1) ? var * M / (M - S(1)) : var;
      running_mean.data()[c] =
          (S(1) - momentum) * running_mean.data()[c] + momentum * mean;
      running_var.data()[c] =
          (S(1) - momentum) * running_var.data()[c] + momentum * unbiased;
    } else {
      mean = running_mean.data()[c];
      var = running_var.data()[c];
    }
    S inv_std = S(1) / std::sqrt(var + eps);
    (*stats)[2 * c] = mean;
    (*stats)[2 * c + 1] = inv_std;
    for (int n = 0; n < N; ++n) {
      const S* p = xv.data() + n * nstride + c * cstride;
      S* q = ov.data() + n * nstride + c * cstride;
      for (size_t i = 0; i < plane; ++i)
        q[i] = (p[i] - mean) * inv_std * gv[c] + bv[c];
    }
  }
  detail::record<S>(out, {&x, &gamma, &beta},
                    [xn = x.node_ptr(), gn = gamma.node_ptr(),
                     bn = beta.node_ptr(), on = out.node_ptr(), stats, N, C,
                     plane, nstride, cstride, training, M]() {
    const auto& g = on->grad;
    for (int c = 0; c < C; ++c) {
      S mean = (*stats)[2 * c];
      S inv_std = (*stats)[2 * c + 1];
      S sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < N; ++n) {
        const S* xr = xn->value.data() + n * nstride + c * cstride;
        const S* gr = g.data() + n * nstride + c * cstride;
        for (size_t i = 0; i < plane; ++i) {
          sum_dy += gr[i];
          sum_dy_xhat += gr[i] * (xr[i] - mean) * inv_std;
        }
      }
      if (gn->needs_grad) {
        gn->ensure_grad();
        gn->grad[c] += sum_dy_xhat;
      }
      if (bn->needs_grad) {
        bn->ensure_grad();
        bn->grad[c] += sum_dy;
      }
      if (xn->needs_grad) {
        xn->ensure_grad();
        S gc = gn->value[c];
        if (training) {
          for (int n = 0; n < N; ++n) {
            const S* xr = xn->value.data() + n * nstride + c * cstride;
            const S* gr = g.data() + n * nstride + c * cstride;
            S* dx = xn->grad.data() + n * nstride + c * cstride;
            for (size_t i = 0; i < plane; ++i) {
              S xhat = (xr[i] - mean) * inv_std;
              dx[i] += gc * inv_std *
                       (gr[i] - sum_dy / M - xhat * sum_dy_xhat / M);
            }
          }
        } else {
          for (int n = 0; n < N; ++n) {
            const S* gr = g.data() + n * nstride + c * cstride;
            S* dx = xn->grad.data() + n * nstride + c * cstride;
            for (size_t i = 0; i < plane; ++i) dx[i] += gc * inv_std * gr[i];
          }
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Convolution / pooling
// ---------------------------------------------------------------------------

namespace detail {

// col is [Cin*KH*KW, OH*OW]
template <class S>
void im2col(const S* x, int C, int H, int W, int KH, int KW, int stride,
            int pad, int OH, int OW, S* col) {
  for (int c = 0; c < C; ++c)
    for (int kh = 0; kh < KH; ++kh)
      for (int kw = 0; kw < KW; ++kw) {
        S* dst = col + ((static_cast<size_t>(c) * KH + kh) * KW + kw) *
                           (static_cast<size_t>(OH) * OW);
        for (int oh = 0; oh < OH; ++oh) {
          int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= H) {
            for (int ow = 0; ow < OW; ++ow) dst[oh * OW + ow] = S(0);
            continue;
          }
          const S* src = x + (static_cast<size_t>(c) * H + ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            int iw = ow * stride - pad + kw;
            dst[oh * OW + ow] = (iw >= 0 && iw < W) ? src[iw] : S(0);
          }
        }
      }
}

template <class S>
void col2im_acc(const S* col, int C, int H, int W, int KH, int KW, int stride,
                int pad, int OH, int OW, S* dx) {
  for (int c = 0; c < C; ++c)
    for (int kh = 0; kh < KH; ++kh)
      for (int kw = 0; kw < KW; ++kw) {
        const S* src = col + ((static_cast<size_t>(c) * KH + kh) * KW + kw) *
                                 (static_cast<size_t>(OH) * OW);
        for (int oh = 0; oh < OH; ++oh) {
          int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= H) continue;
          S* dst = dx + (static_cast<size_t>(c) * H + ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            int iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < W) dst[iw] += src[oh * OW + ow];
          }
        }
      }
}

}  // namespace detail

// conv2d: x [N,Cin,H,W], w [O,Cin,KH,KW], optional bias [O].
template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b,
                  int stride, int pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4)
    throw ShapeError("conv2d: expected NCHW input and OIHW kernel");
  int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  int O = ws[0], KH = ws[2], KW = ws[3];
  if (ws[1] != C)
    throw ShapeError("conv2d: kernel channels " + std::to_string(ws[1]) +
                     " != input channels " + std::to_string(C));
  if (stride < 1) throw ParamError("conv2d: stride must be >= 1");
  int OH = (H + 2 * pad - KH) / stride + 1;
  int OW = (W + 2 * pad - KW) / stride + 1;
  if (OH <= 0 || OW <= 0) throw ShapeError("conv2d: empty output");
  const bool has_bias = b.defined();
  if (has_bias && b.size() != static_cast<size_t>(O))
    throw ShapeError("conv2d: bias length must equal output channels");
  const int CKK = C * KH * KW;
  const int P = OH * OW;
  auto out = TensorT<S>::zeros({N, O, OH, OW});
  std::vector<S> col(static_cast<size_t>(CKK) * P);
  for (int n = 0; n < N; ++n) {
    detail::im2col(x.data().data() + static_cast<size_t>(n) * C * H * W, C, H,
                   W, KH, KW, stride, pad, OH, OW, col.data());
    S* y = out.data().data() + static_cast<size_t>(n) * O * P;
    detail::gemm_nn(O, CKK, P, w.data().data(), col.data(), y);
    if (has_bias)
      for (int o = 0; o < O; ++o) {
        const S bo = b.data()[o];
        for (int p = 0; p < P; ++p) y[static_cast<size_t>(o) * P + p] += bo;
      }
  }
  bool rec = NoGrad::enabled() &&
             (x.needs_grad() || w.needs_grad() || (has_bias && b.needs_grad()));
  if (!rec) return out;
  out.node()->needs_grad = true;
  GradTapeT<S>::instance().record(
      out.node(), [xn = x.node_ptr(), wn = w.node_ptr(),
                   bn = has_bias ? b.node_ptr() : nullptr, on = out.node_ptr(),
                   N, C, H, W, O, KH, KW, stride, pad, OH, OW, CKK, P]() {
    std::vector<S> col(static_cast<size_t>(CKK) * P);
    std::vector<S> dcol;
    for (int n = 0; n < N; ++n) {
      const S* g = on->grad.data() + static_cast<size_t>(n) * O * P;
      if (wn->needs_grad || xn->needs_grad)
        detail::im2col(xn->value.data() + static_cast<size_t>(n) * C * H * W, C,
                       H, W, KH, KW, stride, pad, OH, OW, col.data());
      if (wn->needs_grad) {
        wn->ensure_grad();
        detail::gemm_nt(O, P, CKK, g, col.data(), wn->grad.data());
      }
      if (xn->needs_grad) {
        xn->ensure_grad();
        dcol.assign(static_cast<size_t>(CKK) * P, S(0));
        detail::gemm_tn(O, CKK, P, wn->value.data(), g, dcol.data());
        detail::col2im_acc(dcol.data(), C, H, W, KH, KW, stride, pad, OH, OW,
                           xn->grad.data() + static_cast<size_t>(n) * C * H * W);
      }
      if (bn && bn->needs_grad) {
        bn->ensure_grad();
        for (int o = 0; o < O; ++o) {
          S acc = 0;
          for (int p = 0; p < P; ++p) acc += g[static_cast<size_t>(o) * P + p];
          bn->grad[o] += acc;
        }
      }
    }
  });
  return out;
}

template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, int stride,
                  int pad) {
  return conv2d(x, w, TensorT<S>(), stride, pad);
}

// Global average pool: [N,C,H,W] -> [N,C].
template <class S>
TensorT<S> avgpool_global(const TensorT<S>& x) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ShapeError("avgpool_global: expected NCHW input");
  int N = s[0], C = s[1];
  size_t plane = static_cast<size_t>(s[2]) * s[3];
  auto out = TensorT<S>::zeros({N, C});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const S* p = xv.data() + (static_cast<size_t>(n) * C + c) * plane;
      S acc = 0;
      for (size_t i = 0; i < plane; ++i) acc += p[i];
      ov[static_cast<size_t>(n) * C + c] = acc / static_cast<S>(plane);
    }
  detail::record<S>(out, {&x},
                    [xn = x.node_ptr(), on = out.node_ptr(), N, C, plane]() {
                      if (!xn->needs_grad) return;
                      xn->ensure_grad();
                      const S inv = S(1) / static_cast<S>(plane);
                      for (int n = 0; n < N; ++n)
                        for (int c = 0; c < C; ++c) {
                          S g = on->grad[static_cast<size_t>(n) * C + c] * inv;
                          S* dst = xn->grad.data() +
                                   (static_cast<size_t>(n) * C + c) * plane;
                          for (size_t i = 0; i < plane; ++i) dst[i] += g;
                        }
                    });
  return out;
}

// Add positional embeddings: x [B,T,D] + pos [T,D].
template <class S>
TensorT<S> embedding_add(const TensorT<S>& x, const TensorT<S>& pos) {
  if (x.ndim() != 3 || pos.ndim() != 2 || x.dim(1) != pos.dim(0) ||
      x.dim(2) != pos.dim(1))
    throw ShapeError("embedding_add: expected [B,T,D] + [T,D], got " +
                     shape_str(x.shape()) + " + " + shape_str(pos.shape()));
  return add(x, pos);
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> sum(const TensorT<S>& a) {
  S acc = 0;
  for (S v : a.data()) acc += v;
  auto out = TensorT<S>::scalar(acc);
  detail::record<S>(out, {&a}, [an = a.node_ptr(), on = out.node_ptr()]() {
    if (!an->needs_grad) return;
    an->ensure_grad();
    const S g = on->grad[0];
    for (auto& v : an->grad) v += g;
  });
  return out;
}

template <class S>
TensorT<S> mean(const TensorT<S>& a) {
  auto s = sum(a);
  return scale(s, S(1) / static_cast<S>(a.size()));
}

}  // namespace tdlt
