// Copyright 2026 The cunet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cunet/common.hpp"
#include "cunet/threading.hpp"

namespace cunet {

using IndexVec = std::vector<std::int32_t>;
using IndexVecPtr = std::shared_ptr<const IndexVec>;

namespace detail {

template <typename T>
struct AutogradNode {
  std::vector<std::size_t> shape;
  std::vector<T> values;
  std::vector<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<AutogradNode>> parents;
  std::function<void(AutogradNode&)> backward_fn;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(numel(), T(0));
    return grad;
  }
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Disables graph recording in scope; inference paths use this so
// intermediate buffers are freed as soon as their handles go out of scope.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) {
    detail::grad_mode_flag() = false;
  }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Dense row-major tensor with reverse-mode autodiff. Value-semantic handle
// over a shared graph node; copying a Tensor aliases the same storage.
// Precision is the template parameter: float for training, double for the
// gradient-check suites.
template <typename T>
class Tensor {
 public:
  using Node = detail::AutogradNode<T>;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(std::vector<std::size_t> shape, T value,
                       bool requires_grad = false) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->values.assign(node->numel(), value);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor from(std::vector<std::size_t> shape, std::vector<T> values,
                     bool requires_grad = false) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    if (node->numel() != node->values.size()) {
      throw ShapeError("tensor data size does not match shape");
    }
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T v) { return from({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.at(1); }
  std::size_t numel() const { return node_->numel(); }

  const std::vector<T>& data() const { return node_->values; }
  // Mutating values of a node that already has consumers invalidates the
  // recorded graph; only touch leaves between steps.
  std::vector<T>& mutable_data() { return node_->values; }

  T item() const {
    if (numel() != 1) throw ShapeError("item() requires a single-element tensor");
    return node_->values[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const std::vector<T>& grad() const {
    if (node_->grad.empty()) throw InvariantError("gradient not populated");
    return node_->grad;
  }
  std::vector<T>& mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  // Reverse-mode backprop from a scalar. Gradients accumulate into every
  // reachable node with requires_grad set.
  void backward() const {
    if (numel() != 1) throw ShapeError("backward() requires a scalar root");
    if (!node_->requires_grad) return;
    std::vector<Node*> order;
    topo_sort(node_.get(), order);
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

  std::shared_ptr<Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  static void topo_sort(Node* root, std::vector<Node*>& order) {
    // Iterative post-order DFS over parents.
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* parent = node->parents[next++].get();
        if (visited.insert(parent).second) stack.emplace_back(parent, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> node_;
};

namespace detail {

template <typename T>
std::shared_ptr<AutogradNode<T>> make_op(
    std::vector<std::size_t> shape, std::vector<T> values,
    std::vector<std::shared_ptr<AutogradNode<T>>> inputs,
    std::function<void(AutogradNode<T>&)> backward) {
  auto node = std::make_shared<AutogradNode<T>>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  bool needs = false;
  if (grad_mode_flag()) {
    for (const auto& p : inputs) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(inputs);
    node->backward_fn = std::move(backward);
  }
  return node;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch");
  }
}

// C[M x N] += or = A[M x K] * B[K x N]; row-parallel, fixed accumulation
// order within each row. No zero-skip shortcuts: NaN inputs must propagate.
template <typename T>
void mm_kernel(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  parallel_for(m, [=](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      if (!accumulate) std::fill(crow, crow + n, T(0));
      const T* arow = a + i * k;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T av = arow[kk];
        const T* brow = b + kk * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// dA[M x K] += dC[M x N] * B^T (B is K x N).
template <typename T>
void mm_grad_a(const T* dc, const T* b, T* da, std::size_t m, std::size_t k,
               std::size_t n) {
  parallel_for(m, [=](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      const T* dcrow = dc + i * n;
      T* darow = da + i * k;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T* brow = b + kk * n;
        T s = T(0);
        for (std::size_t j = 0; j < n; ++j) s += dcrow[j] * brow[j];
        darow[kk] += s;
      }
    }
  });
}

// dB[K x N] += A^T * dC (A is M x K).
template <typename T>
void mm_grad_b(const T* a, const T* dc, T* db, std::size_t m, std::size_t k,
               std::size_t n) {
  ThreadPool& pool = ThreadPool::instance();
  const std::size_t parts = std::min<std::size_t>(pool.threads(), k);
  pool.parallel_for(parts, [=](std::size_t p0, std::size_t p1) {
    const std::size_t chunk = (k + parts - 1) / parts;
    for (std::size_t p = p0; p < p1; ++p) {
      const std::size_t k0 = p * chunk;
      const std::size_t k1 = std::min(k0 + chunk, k);
      if (k0 >= k1) continue;
      for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* dcrow = dc + i * n;
        for (std::size_t kk = k0; kk < k1; ++kk) {
          const T av = arow[kk];
          if (av == T(0)) continue;
          T* dbrow = db + kk * n;
          for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
        }
      }
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural operations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> out(a.data());
  const auto& bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto pa = a.node();
  auto pb = b.node();
  return Tensor<T>(detail::make_op<T>(
      a.shape(), std::move(out), {pa, pb}, [pa, pb](detail::AutogradNode<T>& self) {
        if (pa->requires_grad) {
          auto& g = pa->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
          auto& g = pb->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
      }));
}

// x[N x C] + row vector b[C], broadcast over rows (bias add).
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& b) {
  if (x.shape().size() != 2 || b.numel() != x.cols()) {
    throw ShapeError("add_rowvec: bias length must equal column count");
  }
  const std::size_t n = x.rows(), c = x.cols();
  std::vector<T> out(x.data());
  const auto& bv = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    T* row = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) row[j] += bv[j];
  }
  auto px = x.node();
  auto pb = b.node();
  return Tensor<T>(detail::make_op<T>(
      x.shape(), std::move(out), {px, pb}, [px, pb, n, c](detail::AutogradNode<T>& self) {
        if (px->requires_grad) {
          auto& g = px->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
          auto& g = pb->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) {
            const T* grow = self.grad.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) g[j] += grow[j];
          }
        }
      }));
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T s) {
  std::vector<T> out(x.data());
  for (auto& v : out) v *= s;
  auto px = x.node();
  return Tensor<T>(detail::make_op<T>(
      x.shape(), std::move(out), {px}, [px, s](detail::AutogradNode<T>& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
      }));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.data());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  auto px = x.node();
  return Tensor<T>(detail::make_op<T>(
      x.shape(), std::move(out), {px}, [px](detail::AutogradNode<T>& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        // Mask from the output: zero gradient at and below zero.
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (self.values[i] > T(0)) g[i] += self.grad[i];
        }
      }));
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions must agree");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<T> out(m * n);
  detail::mm_kernel(a.data().data(), b.data().data(), out.data(), m, k, n,
                    /*accumulate=*/false);
  auto pa = a.node();
  auto pb = b.node();
  return Tensor<T>(detail::make_op<T>(
      {m, n}, std::move(out), {pa, pb},
      [pa, pb, m, k, n](detail::AutogradNode<T>& self) {
        if (pa->requires_grad) {
          detail::mm_grad_a(self.grad.data(), pb->values.data(),
                            pa->ensure_grad().data(), m, k, n);
        }
        if (pb->requires_grad) {
          detail::mm_grad_b(pa->values.data(), self.grad.data(),
                            pb->ensure_grad().data(), m, k, n);
        }
      }));
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row counts must agree");
  }
  const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols();
  std::vector<T> out(n * (ca + cb));
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.data() + i * ca, ca, out.data() + i * (ca + cb));
    std::copy_n(bv.data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
  }
  auto pa = a.node();
  auto pb = b.node();
  return Tensor<T>(detail::make_op<T>(
      {n, ca + cb}, std::move(out), {pa, pb},
      [pa, pb, n, ca, cb](detail::AutogradNode<T>& self) {
        const std::size_t c = ca + cb;
        if (pa->requires_grad) {
          auto& g = pa->ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < ca; ++j) g[i * ca + j] += self.grad[i * c + j];
        }
        if (pb->requires_grad) {
          auto& g = pb->ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < cb; ++j)
              g[i * cb + j] += self.grad[i * c + ca + j];
        }
      }));
}

namespace detail {
template <typename T>
void check_gather_indices(const Tensor<T>& x, const IndexVec& idx, const char* op) {
  const auto limit = static_cast<std::int64_t>(x.rows());
  for (auto i : idx) {
    if (i < 0 || static_cast<std::int64_t>(i) >= limit) {
      throw ShapeError(std::string(op) + ": row index out of range");
    }
  }
}
}  // namespace detail

// out[m, :] = x[idx[m], :]. Adjoint of scatter_add_rows.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, IndexVecPtr idx) {
  if (x.shape().size() != 2) throw ShapeError("gather_rows: expects a matrix");
  detail::check_gather_indices(x, *idx, "gather_rows");
  const std::size_t m = idx->size(), c = x.cols();
  std::vector<T> out(m * c);
  const auto& xv = x.data();
  const auto& iv = *idx;
  parallel_for(m, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      std::copy_n(xv.data() + static_cast<std::size_t>(iv[i]) * c, c,
                  out.data() + i * c);
    }
  });
  auto px = x.node();
  return Tensor<T>(detail::make_op<T>(
      {m, c}, std::move(out), {px}, [px, idx, m, c](detail::AutogradNode<T>& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        const auto& iv = *idx;
        for (std::size_t i = 0; i < m; ++i) {
          T* grow = g.data() + static_cast<std::size_t>(iv[i]) * c;
          const T* srow = self.grad.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) grow[j] += srow[j];
        }
      }));
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, IndexVec idx) {
  return gather_rows(x, std::make_shared<const IndexVec>(std::move(idx)));
}

// out[idx[m], :] += x[m, :], output has n_out rows. Adjoint of gather_rows.
template <typename T>
Tensor<T> scatter_add_rows(const Tensor<T>& x, IndexVecPtr idx, std::size_t n_out) {
  if (x.shape().size() != 2) throw ShapeError("scatter_add_rows: expects a matrix");
  if (idx->size() != x.rows()) {
    throw ShapeError("scatter_add_rows: index count must equal row count");
  }
  const std::size_t m = x.rows(), c = x.cols();
  for (auto i : *idx) {
    if (i < 0 || static_cast<std::size_t>(i) >= n_out) {
      throw ShapeError("scatter_add_rows: row index out of range");
    }
  }
  std::vector<T> out(n_out * c, T(0));
  const auto& xv = x.data();
  const auto& iv = *idx;
  for (std::size_t i = 0; i < m; ++i) {
    T* orow = out.data() + static_cast<std::size_t>(iv[i]) * c;
    const T* xrow = xv.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) orow[j] += xrow[j];
  }
  auto px = x.node();
  return Tensor<T>(detail::make_op<T>(
      {n_out, c}, std::move(out), {px}, [px, idx, m, c](detail::AutogradNode<T>& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        const auto& iv = *idx;
        for (std::size_t i = 0; i < m; ++i) {
          const T* srow = self.grad.data() + static_cast<std::size_t>(iv[i]) * c;
          T* grow = g.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) grow[j] += srow[j];
        }
      }));
}

template <typename T>
Tensor<T> scatter_add_rows(const Tensor<T>& x, IndexVec idx, std::size_t n_out) {
  return scatter_add_rows(x, std::make_shared<const IndexVec>(std::move(idx)), n_out);
}

// Sums several scattered terms into one n_out x C output. Equivalent to
// adding the individual scatter_add_rows results, without materializing the
// intermediates.
template <typename T>
Tensor<T> scatter_add_multi(const std::vector<std::pair<Tensor<T>, IndexVecPtr>>& terms,
                            std::size_t n_out) {
  if (terms.empty()) throw ShapeError("scatter_add_multi: no terms");
  const std::size_t c = terms.front().first.cols();
  std::vector<T> out(n_out * c, T(0));
  std::vector<std::shared_ptr<detail::AutogradNode<T>>> inputs;
  std::vector<IndexVecPtr> indices;
  inputs.reserve(terms.size());
  indices.reserve(terms.size());
  for (const auto& [t, idx] : terms) {
    if (t.shape().size() != 2 || t.cols() != c || idx->size() != t.rows()) {
      throw ShapeError("scatter_add_multi: inconsistent term shape");
    }
    const auto& xv = t.data();
    const auto& iv = *idx;
    for (std::size_t i = 0; i < iv.size(); ++i) {
      if (iv[i] < 0 || static_cast<std::size_t>(iv[i]) >= n_out) {
        throw ShapeError("scatter_add_multi: row index out of range");
      }
      T* orow = out.data() + static_cast<std::size_t>(iv[i]) * c;
      const T* xrow = xv.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) orow[j] += xrow[j];
    }
    inputs.push_back(t.node());
    indices.push_back(idx);
  }
  auto parents = inputs;
  return Tensor<T>(detail::make_op<T>(
      {n_out, c}, std::move(out), std::move(parents),
      [inputs, indices, c](detail::AutogradNode<T>& self) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          auto& p = *inputs[k];
          if (!p.requires_grad) continue;
          auto& g = p.ensure_grad();
          const auto& iv = *indices[k];
          for (std::size_t i = 0; i < iv.size(); ++i) {
            const T* srow = self.grad.data() + static_cast<std::size_t>(iv[i]) * c;
            T* grow = g.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) grow[j] += srow[j];
          }
        }
      }));
}

// Fused gather_rows + matmul: out[m, :] = x[idx[m], :] * w. The gathered
// matrix is never materialized on the graph; the weight gradient re-reads
// the source rows instead. This keeps sparse-convolution memory linear in
// the number of points rather than kernel-map pairs.
template <typename T>
Tensor<T> gather_matmul(const Tensor<T>& x, IndexVecPtr idx, const Tensor<T>& w) {
  if (x.shape().size() != 2 || w.shape().size() != 2 || x.cols() != w.rows()) {
    throw ShapeError("gather_matmul: inner dimensions must agree");
  }
  detail::check_gather_indices(x, *idx, "gather_matmul");
  const std::size_t m = idx->size(), k = x.cols(), n = w.cols();
  std::vector<T> out(m * n);
  {
    const T* xv = x.data().data();
    const T* wv = w.data().data();
    const auto& iv = *idx;
    parallel_for(m, [&](std::size_t i0, std::size_t i1) {
      for (std::size_t i = i0; i < i1; ++i) {
        T* orow = out.data() + i * n;
        std::fill(orow, orow + n, T(0));
        const T* xrow = xv + static_cast<std::size_t>(iv[i]) * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const T av = xrow[kk];
          const T* wrow = wv + kk * n;
          for (std::size_t j = 0; j < n; ++j) orow[j] += av * wrow[j];
        }
      }
    });
  }
  auto px = x.node();
  auto pw = w.node();
  return Tensor<T>(detail::make_op<T>(
      {m, n}, std::move(out), {px, pw},
      [px, pw, idx, m, k, n](detail::AutogradNode<T>& self) {
        const auto& iv = *idx;
        if (px->requires_grad) {
          // dX[idx[m], :] += dOut[m, :] * W^T
          std::vector<T> tmp(m * k, T(0));
          detail::mm_grad_a(self.grad.data(), pw->values.data(), tmp.data(), m, k, n);
          auto& g = px->ensure_grad();
          for (std::size_t i = 0; i < m; ++i) {
            T* grow = g.data() + static_cast<std::size_t>(iv[i]) * k;
            const T* trow = tmp.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) grow[j] += trow[j];
          }
        }
        if (pw->requires_grad) {
          // dW += X[idx]^T * dOut, re-gathering source rows on the fly.
          auto& g = pw->ensure_grad();
          const T* xv = px->values.data();
          ThreadPool& pool = ThreadPool::instance();
          const std::size_t parts = std::min<std::size_t>(pool.threads(), k);
          const std::size_t chunk = (k + parts - 1) / parts;
          pool.parallel_for(parts, [&](std::size_t p0, std::size_t p1) {
            for (std::size_t p = p0; p < p1; ++p) {
              const std::size_t k0 = p * chunk;
              const std::size_t k1 = std::min(k0 + chunk, k);
              for (std::size_t i = 0; i < m; ++i) {
                const T* xrow = xv + static_cast<std::size_t>(iv[i]) * k;
                const T* srow = self.grad.data() + i * n;
                for (std::size_t kk = k0; kk < k1; ++kk) {
                  const T av = xrow[kk];
                  if (av == T(0)) continue;
                  T* grow = g.data() + kk * n;
                  for (std::size_t j = 0; j < n; ++j) grow[j] += av * srow[j];
                }
              }
            }
          });
        }
      }));
}

// Mean squared error over all elements; the scalar loss used for training.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check_same_shape(pred, target, "mse_loss");
  const auto& pv = pred.data();
  const auto& tv = target.data();
  const std::size_t n = pv.size();
  if (n == 0) throw ShapeError("mse_loss: empty tensors");
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = pv[i] - tv[i];
    acc += d * d;
  }
  acc /= static_cast<T>(n);
  auto pp = pred.node();
  auto pt = target.node();
  return Tensor<T>(detail::make_op<T>(
      {1}, {acc}, {pp, pt}, [pp, pt, n](detail::AutogradNode<T>& self) {
        const T scale = self.grad[0] * T(2) / static_cast<T>(n);
        if (pp->requires_grad) {
          auto& g = pp->ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            g[i] += scale * (pp->values[i] - pt->values[i]);
        }
        if (pt->requires_grad) {
          auto& g = pt->ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            g[i] -= scale * (pp->values[i] - pt->values[i]);
        }
      }));
}

}  // namespace cunet
