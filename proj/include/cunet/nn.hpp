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

#include <cmath>
#include <cstddef>
#include <vector>

#include "cunet/rng.hpp"
#include "cunet/tensor.hpp"

namespace cunet {

// Kaiming-uniform fan-in initialization: U(-b, b) with b = sqrt(6 / fan_in).
template <typename T>
void kaiming_uniform_(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w.mutable_data()) {
    v = static_cast<T>(rng.uniform(-bound, bound));
  }
}

// Batch-norm evaluation modes.
//
// kTrain normalizes with biased batch statistics and updates the running
// stats by exponential moving average (unbiased variance, matching the
// usual deep-learning framework convention). kRunningStats normalizes with
// the stored running statistics. kBatchStats normalizes with the statistics
// of the given batch without touching the running stats; the network uses
// it at inference, where the "batch" is the whole input cloud, so features
// are normalized the same way they were during per-cloud training.
enum class BnMode { kTrain, kBatchStats, kRunningStats };

// Per-channel batch normalization over an N x C matrix.
template <typename T>
struct BatchNorm {
  Tensor<T> gamma;  // scale, trainable
  Tensor<T> beta;   // shift, trainable
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T eps = static_cast<T>(1e-5);
  T momentum = static_cast<T>(0.1);

  explicit BatchNorm(std::size_t channels = 0) { init(channels); }

  void init(std::size_t channels) {
    gamma = Tensor<T>::filled({channels}, T(1), /*requires_grad=*/true);
    beta = Tensor<T>::zeros({channels}, /*requires_grad=*/true);
    running_mean.assign(channels, T(0));
    running_var.assign(channels, T(1));
  }

  std::size_t channels() const { return gamma.numel(); }
};

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, BatchNorm<T>& bn, BnMode mode) {
  if (x.shape().size() != 2 || x.cols() != bn.channels()) {
    throw ShapeError("batchnorm: channel count mismatch");
  }
  const std::size_t n = x.rows(), c = x.cols();
  const auto& xv = x.data();
  const bool batch_stats = mode != BnMode::kRunningStats;
  const bool training = mode == BnMode::kTrain;

  std::vector<T> mean(c), inv_std(c);
  if (batch_stats) {
    if (training && n < 2) {
      throw DegenerateBatchError("batchnorm training mode needs at least 2 rows");
    }
    std::vector<T> var(c, T(0));
    std::fill(mean.begin(), mean.end(), T(0));
    for (std::size_t i = 0; i < n; ++i) {
      const T* row = xv.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) mean[j] += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) mean[j] /= static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T* row = xv.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) {
        const T d = row[j] - mean[j];
        var[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < c; ++j) var[j] /= static_cast<T>(n);
    for (std::size_t j = 0; j < c; ++j) {
      inv_std[j] = T(1) / std::sqrt(var[j] + bn.eps);
    }
    if (training) {
      // EMA update; running variance uses the unbiased estimate.
      const T unbias = static_cast<T>(n) / static_cast<T>(n - 1);
      for (std::size_t j = 0; j < c; ++j) {
        bn.running_mean[j] =
            (T(1) - bn.momentum) * bn.running_mean[j] + bn.momentum * mean[j];
        bn.running_var[j] =
            (T(1) - bn.momentum) * bn.running_var[j] + bn.momentum * var[j] * unbias;
      }
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      mean[j] = bn.running_mean[j];
      inv_std[j] = T(1) / std::sqrt(bn.running_var[j] + bn.eps);
    }
  }

  const auto& gv = bn.gamma.data();
  const auto& bv = bn.beta.data();
  std::vector<T> out(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = xv.data() + i * c;
    T* orow = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      orow[j] = gv[j] * (row[j] - mean[j]) * inv_std[j] + bv[j];
    }
  }

  auto px = x.node();
  auto pg = bn.gamma.node();
  auto pb = bn.beta.node();
  return Tensor<T>(detail::make_op<T>(
      {n, c}, std::move(out), {px, pg, pb},
      [px, pg, pb, mean, inv_std, n, c, batch_stats](detail::AutogradNode<T>& self) {
        // x_hat is recomputed from the saved per-channel statistics rather
        // than stored, keeping the graph memory footprint at O(C).
        const auto& xv = px->values;
        const auto& gv = pg->values;
        if (pb->requires_grad) {
          auto& g = pb->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) {
            const T* srow = self.grad.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) g[j] += srow[j];
          }
        }
        if (pg->requires_grad) {
          auto& g = pg->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) {
            const T* srow = self.grad.data() + i * c;
            const T* row = xv.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) {
              g[j] += srow[j] * (row[j] - mean[j]) * inv_std[j];
            }
          }
        }
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        if (!batch_stats) {
          for (std::size_t i = 0; i < n; ++i) {
            const T* srow = self.grad.data() + i * c;
            T* grow = g.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) {
              grow[j] += srow[j] * gv[j] * inv_std[j];
            }
          }
          return;
        }
        // Batch statistics: dx = (gamma * inv_std) *
        //   (dy - mean(dy) - x_hat * mean(dy * x_hat)), per channel.
        std::vector<T> sum_dy(c, T(0)), sum_dy_xhat(c, T(0));
        for (std::size_t i = 0; i < n; ++i) {
          const T* srow = self.grad.data() + i * c;
          const T* row = xv.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) {
            sum_dy[j] += srow[j];
            sum_dy_xhat[j] += srow[j] * (row[j] - mean[j]) * inv_std[j];
          }
        }
        const T invn = T(1) / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const T* srow = self.grad.data() + i * c;
          const T* row = xv.data() + i * c;
          T* grow = g.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) {
            const T xhat = (row[j] - mean[j]) * inv_std[j];
            grow[j] += gv[j] * inv_std[j] *
                       (srow[j] - invn * sum_dy[j] - xhat * invn * sum_dy_xhat[j]);
          }
        }
      }));
}

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, BatchNorm<T>& bn, bool training) {
  return batchnorm(x, bn, training ? BnMode::kTrain : BnMode::kRunningStats);
}

// Affine layer y = x * W + b.
template <typename T>
struct Linear {
  Tensor<T> weight;  // in x out
  Tensor<T> bias;    // out

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng) {
    weight = Tensor<T>::zeros({in, out}, /*requires_grad=*/true);
    kaiming_uniform_(weight, in, rng);
    bias = Tensor<T>::zeros({out}, /*requires_grad=*/true);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return add_rowvec(matmul(x, weight), bias);
  }
};

}  // namespace cunet
