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

// Shared test helpers: independent brute-force oracles and the central
// finite-difference gradient checker. Everything here is deliberately the
// dumbest possible implementation of each contract, kept separate from the
// library code it checks.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "cunet/baselines.hpp"
#include "cunet/point_cloud.hpp"
#include "cunet/rng.hpp"
#include "cunet/sparse.hpp"
#include "cunet/tensor.hpp"

namespace testutil {

using cunet::Coord3;
using cunet::Coord4;
using cunet::PointCloud;
using cunet::Rgb;
using cunet::Rng;

// --------------------------------------------------------------------------
// Random inputs
// --------------------------------------------------------------------------

template <typename T>
cunet::Tensor<T> random_tensor(std::vector<std::size_t> shape, Rng& rng,
                               bool requires_grad = false, double lo = -1.0,
                               double hi = 1.0) {
  auto t = cunet::Tensor<T>::zeros(shape, requires_grad);
  for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Random voxelized cloud: unique coordinates in [0, extent)^3, optional
// random colors.
inline PointCloud random_cloud(std::size_t count, std::int32_t extent, Rng& rng,
                               bool with_colors = true) {
  PointCloud cloud;
  cloud.extent = extent;
  std::unordered_map<Coord3, bool, cunet::detail::Coord3Hash> seen;
  while (cloud.coords.size() < count) {
    Coord3 c{static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(extent))),
             static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(extent))),
             static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(extent)))};
    if (seen.try_emplace(c, true).second) cloud.coords.push_back(c);
  }
  if (with_colors) {
    std::vector<Rgb> colors(count);
    for (auto& c : colors) {
      for (int a = 0; a < 3; ++a) c[a] = rng.uniform();
    }
    cloud.colors = std::move(colors);
  }
  return cloud;
}

// --------------------------------------------------------------------------
// Finite differences
// --------------------------------------------------------------------------

// Central-difference gradient of `loss_fn` w.r.t. every entry of `param`,
// where loss_fn re-runs the full forward from current parameter values.
inline std::vector<double> numeric_grad(cunet::Tensor<double>& param,
                                        const std::function<double()>& loss_fn,
                                        double eps = 1e-5) {
  std::vector<double> grad(param.numel());
  auto& data = param.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + eps;
    const double up = loss_fn();
    data[i] = saved - eps;
    const double down = loss_fn();
    data[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

// Largest relative mismatch between analytic and numeric gradients, with
// |a - n| / max(1, |a|, |n|) as the per-element measure.
inline double max_rel_error(const std::vector<double>& analytic,
                            const std::vector<double>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({1.0, std::abs(analytic[i]), std::abs(numeric[i])});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

// --------------------------------------------------------------------------
// Geometry oracles
// --------------------------------------------------------------------------

// Dictionary grouping by floor division: voxel -> (count, color sum),
// ordered lexicographically.
struct GroupedVoxels {
  std::map<Coord3, std::pair<std::int64_t, Rgb>> groups;
};

inline GroupedVoxels brute_force_grouping(const PointCloud& hr, std::int32_t v) {
  GroupedVoxels out;
  for (std::size_t j = 0; j < hr.size(); ++j) {
    Coord3 q{hr.coords[j][0] / v, hr.coords[j][1] / v, hr.coords[j][2] / v};
    auto& slot = out.groups[q];
    slot.first += 1;
    if (hr.has_colors()) {
      for (int a = 0; a < 3; ++a) slot.second[a] += (*hr.colors)[j][a];
    }
  }
  return out;
}

// --------------------------------------------------------------------------
// Sparse-convolution oracles
// --------------------------------------------------------------------------

// All-pairs kernel map: offset index -> sorted (input, output) pairs.
inline std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>>
brute_force_kernel_map(const std::vector<Coord4>& coords, int k) {
  const int r = k / 2;
  const std::size_t volume = static_cast<std::size_t>(k) * k * k;
  std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> pairs(volume);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (std::size_t q = 0; q < coords.size(); ++q) {
      if (coords[i].batch != coords[q].batch) continue;
      const int dx = coords[i].x - coords[q].x;
      const int dy = coords[i].y - coords[q].y;
      const int dz = coords[i].z - coords[q].z;
      if (std::abs(dx) > r || std::abs(dy) > r || std::abs(dz) > r) continue;
      const std::size_t o = static_cast<std::size_t>(
          (dx + r) * k * k + (dy + r) * k + (dz + r));
      pairs[o].emplace_back(static_cast<std::int32_t>(i),
                            static_cast<std::int32_t>(q));
    }
  }
  for (auto& p : pairs) std::sort(p.begin(), p.end());
  return pairs;
}

// Dense 3D convolution over the bounding grid, evaluated at occupied sites:
// out[q] = sum_d in[q + d] * W[d], matching the sparse kernel-map contract.
template <typename T>
std::vector<std::vector<T>> dense_conv_oracle(
    const std::vector<Coord4>& coords, const std::vector<std::vector<T>>& features,
    const std::vector<cunet::Tensor<T>>& weights, int k) {
  const int r = k / 2;
  const std::size_t c_in = features.at(0).size();
  const std::size_t c_out = weights.at(0).cols();
  std::map<std::array<std::int32_t, 4>, std::size_t> site;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    site[{coords[i].x, coords[i].y, coords[i].z, coords[i].batch}] = i;
  }
  std::vector<std::vector<T>> out(coords.size(), std::vector<T>(c_out, T(0)));
  for (std::size_t q = 0; q < coords.size(); ++q) {
    for (int dx = -r; dx <= r; ++dx) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dz = -r; dz <= r; ++dz) {
          auto it = site.find({coords[q].x + dx, coords[q].y + dy,
                               coords[q].z + dz, coords[q].batch});
          if (it == site.end()) continue;
          const std::size_t o = static_cast<std::size_t>(
              (dx + r) * k * k + (dy + r) * k + (dz + r));
          const auto& w = weights[o].data();
          const auto& f = features[it->second];
          for (std::size_t ci = 0; ci < c_in; ++ci) {
            for (std::size_t co = 0; co < c_out; ++co) {
              out[q][co] += f[ci] * w[ci * c_out + co];
            }
          }
        }
      }
    }
  }
  return out;
}

// --------------------------------------------------------------------------
// Baseline oracles
// --------------------------------------------------------------------------

inline std::int64_t center_dist4(const Coord3& hr, const Coord3& lr, std::int32_t v) {
  std::int64_t d4 = 0;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t d = 2LL * hr[a] - (2LL * v * lr[a] + v - 1);
    d4 += d * d;
  }
  return d4;
}

// O(N^2) KNN: sort all (distance, index) pairs and average the first k.
inline std::vector<Rgb> brute_force_knn(const PointCloud& lr,
                                        const PointCloud& hr, std::int32_t v,
                                        std::size_t k) {
  k = std::min(k, lr.size());
  std::vector<Rgb> out(hr.size());
  std::vector<std::pair<std::int64_t, std::int32_t>> dists(lr.size());
  for (std::size_t j = 0; j < hr.size(); ++j) {
    for (std::size_t i = 0; i < lr.size(); ++i) {
      dists[i] = {center_dist4(hr.coords[j], lr.coords[i], v),
                  static_cast<std::int32_t>(i)};
    }
    std::sort(dists.begin(), dists.end());
    Rgb mean{0, 0, 0};
    for (std::size_t t = 0; t < k; ++t) {
      const auto& c = (*lr.colors)[static_cast<std::size_t>(dists[t].second)];
      for (int a = 0; a < 3; ++a) mean[a] += c[a];
    }
    for (int a = 0; a < 3; ++a) mean[a] /= static_cast<double>(k);
    out[j] = mean;
  }
  return out;
}

// O(N^2) ball query with inverse-distance weights and nearest fallback.
inline std::vector<Rgb> brute_force_waan(const PointCloud& lr,
                                         const PointCloud& hr, std::int32_t v,
                                         double radius_voxels = 1.5) {
  const double radius = radius_voxels * v;
  std::vector<Rgb> out(hr.size());
  for (std::size_t j = 0; j < hr.size(); ++j) {
    Rgb acc{0, 0, 0};
    double wsum = 0.0;
    std::int64_t best_d4 = std::numeric_limits<std::int64_t>::max();
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < lr.size(); ++i) {
      const std::int64_t d4 = center_dist4(hr.coords[j], lr.coords[i], v);
      if (d4 < best_d4) {
        best_d4 = d4;
        best_i = i;
      }
      const double dist = std::sqrt(static_cast<double>(d4)) / 2.0;
      if (dist > radius) continue;
      const double w = 1.0 / (1e-8 + dist);
      for (int a = 0; a < 3; ++a) acc[a] += w * (*lr.colors)[i][a];
      wsum += w;
    }
    if (wsum > 0.0) {
      for (int a = 0; a < 3; ++a) out[j][a] = acc[a] / wsum;
    } else {
      out[j] = (*lr.colors)[best_i];
    }
  }
  return out;
}

}  // namespace testutil
