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
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cunet/common.hpp"
#include "cunet/point_cloud.hpp"
#include "cunet/voxel.hpp"

namespace cunet {

// Classical baselines. All of them colorize HR coordinates from the LR cloud
// alone. Distances are measured in HR units between HR points and LR voxel
// centers, center = v * p + (v - 1) / 2 per axis. Squared distances are kept
// as integers scaled by 4 so comparisons and index tie-breaks are exact:
// d4 = sum_a (2 * hr_a - (2 * v * p_a + v - 1))^2.

namespace detail {

inline std::int64_t center_dist4(const Coord3& hr, const Coord3& lr, std::int32_t v) {
  std::int64_t d4 = 0;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t d = 2LL * hr[a] - (2LL * v * lr[a] + v - 1);
    d4 += d * d;
  }
  return d4;
}

// LR points bucketed by their voxel coordinate. Each LR coordinate is its
// own bucket, so neighbor search is a hash probe per candidate cell.
struct LrGrid {
  const PointCloud* lr;
  std::int32_t v;
  std::unordered_map<Coord3, std::int32_t, Coord3Hash> buckets;

  LrGrid(const PointCloud& cloud, std::int32_t ratio) : lr(&cloud), v(ratio) {
    buckets.reserve(cloud.size() * 2);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (!buckets.try_emplace(cloud.coords[i], static_cast<std::int32_t>(i)).second) {
        throw DuplicateCoordinateError("duplicate LR coordinate");
      }
    }
  }

  std::int32_t at(std::int32_t x, std::int32_t y, std::int32_t z) const {
    auto it = buckets.find(Coord3{x, y, z});
    return it == buckets.end() ? -1 : it->second;
  }
};

// Least possible d4 from a query to a center in a cell at Chebyshev ring
// distance `ring` from the query's home cell: the query can sit at the cell
// edge nearest the ring, giving v*ring - (v-1)/2 HR units along one axis.
inline std::int64_t ring_lower_bound4(std::int32_t v, std::int32_t ring) {
  if (ring <= 0) return 0;
  const std::int64_t d2 = 2LL * v * ring - (v - 1);  // 2x the axis distance
  return d2 * d2;
}

// k smallest (d4, lr_index) pairs for one query, expanding Chebyshev rings
// until no unvisited cell can improve the current k-th best. Candidates are
// ordered lexicographically, which breaks distance ties by LR index.
inline void knn_query(const LrGrid& grid, const Coord3& h, std::size_t k,
                      std::vector<std::pair<std::int64_t, std::int32_t>>& best) {
  best.clear();
  const PointCloud& lr = *grid.lr;
  const std::int32_t v = grid.v;
  const Coord3 home = {h[0] / v, h[1] / v, h[2] / v};
  std::int32_t ring_max = 0;
  for (int a = 0; a < 3; ++a) {
    ring_max = std::max(ring_max, home[a]);
    ring_max = std::max(ring_max, lr.extent - 1 - home[a]);
  }
  for (std::int32_t ring = 0; ring <= ring_max; ++ring) {
    if (best.size() == k && ring_lower_bound4(v, ring) > best.back().first) break;
    for (std::int32_t dx = -ring; dx <= ring; ++dx) {
      for (std::int32_t dy = -ring; dy <= ring; ++dy) {
        const std::int32_t shell =
            std::max(std::abs(dx), std::abs(dy)) == ring ? 1 : ring;
        // Walk only the shell: inner cells were handled by earlier rings.
        for (std::int32_t dz = -ring; dz <= ring; dz += (shell == 1 ? 1 : 2 * ring)) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
          const std::int32_t cx = home[0] + dx;
          const std::int32_t cy = home[1] + dy;
          const std::int32_t cz = home[2] + dz;
          if (cx < 0 || cy < 0 || cz < 0 || cx >= lr.extent || cy >= lr.extent ||
              cz >= lr.extent) {
            continue;
          }
          const std::int32_t idx = grid.at(cx, cy, cz);
          if (idx < 0) continue;
          const std::pair<std::int64_t, std::int32_t> cand{
              center_dist4(h, lr.coords[static_cast<std::size_t>(idx)], v), idx};
          if (best.size() == k && !(cand < best.back())) continue;
          auto pos = std::lower_bound(best.begin(), best.end(), cand);
          best.insert(pos, cand);
          if (best.size() > k) best.pop_back();
        }
      }
    }
  }
}

}  // namespace detail

// Devoxelization baseline: every HR point takes the color of its LR parent.
// Identical by construction to devoxelize() over the recovered mapping.
inline std::vector<Rgb> upsample_devox(const PointCloud& lr,
                                       const PointCloud& hr_coords,
                                       std::int32_t v) {
  if (!lr.has_colors()) throw AttributeError("devox baseline needs LR colors");
  const LrHrMapping mapping = recover_mapping(lr, hr_coords, v);
  return devoxelize(*lr.colors, mapping);
}

// K-nearest-neighbor baseline: unweighted mean color of the k nearest LR
// voxel centers, ties broken by LR index order. k larger than the cloud is
// clamped with a warning.
inline std::vector<Rgb> upsample_knn(const PointCloud& lr,
                                     const PointCloud& hr_coords, std::int32_t v,
                                     std::size_t k = 3,
                                     std::ostream* warnings = nullptr) {
  if (!lr.has_colors()) throw AttributeError("knn baseline needs LR colors");
  if (lr.size() == 0) throw EmptyCloudError("knn baseline needs a non-empty LR cloud");
  if (v < 2) throw InvalidRatioError("upsampling ratio must be an integer >= 2");
  if (k < 1) throw ConfigError("knn requires k >= 1");
  if (k > lr.size()) {
    if (warnings) {
      (*warnings) << "warning: k=" << k << " exceeds LR point count " << lr.size()
                  << "; clamping to " << lr.size() << "\n";
    }
    k = lr.size();
  }

  const detail::LrGrid grid(lr, v);
  const auto& colors = *lr.colors;
  std::vector<Rgb> out(hr_coords.size());
  std::vector<std::pair<std::int64_t, std::int32_t>> best;
  best.reserve(k + 1);
  for (std::size_t j = 0; j < hr_coords.size(); ++j) {
    detail::knn_query(grid, hr_coords.coords[j], k, best);
    Rgb mean{0.0, 0.0, 0.0};
    for (const auto& [d4, idx] : best) {
      for (int a = 0; a < 3; ++a) mean[a] += colors[static_cast<std::size_t>(idx)][a];
    }
    for (int a = 0; a < 3; ++a) mean[a] /= static_cast<double>(best.size());
    out[j] = mean;
  }
  return out;
}

// Generalized weighted-average baseline: inverse-distance weighted mean of
// LR centers within a ball (default radius 1.5 LR voxels in HR units,
// boundary inclusive), falling back to the nearest LR point when the ball
// is empty. Weights are 1 / (eps + dist) with eps = 1e-8.
inline std::vector<Rgb> upsample_waan(const PointCloud& lr,
                                      const PointCloud& hr_coords, std::int32_t v,
                                      double radius_voxels = 1.5) {
  if (!lr.has_colors()) throw AttributeError("waan baseline needs LR colors");
  if (lr.size() == 0) throw EmptyCloudError("waan baseline needs a non-empty LR cloud");
  if (v < 2) throw InvalidRatioError("upsampling ratio must be an integer >= 2");
  if (radius_voxels <= 0.0) throw ConfigError("waan requires a positive radius");

  const detail::LrGrid grid(lr, v);
  const auto& colors = *lr.colors;
  const double radius_hr = radius_voxels * static_cast<double>(v);
  // Inclusive ball test on the 4-scaled integer metric: dist <= r.
  const double limit4 = 4.0 * radius_hr * radius_hr;
  constexpr double kWeightEps = 1e-8;

  std::vector<Rgb> out(hr_coords.size());
  std::vector<std::pair<std::int64_t, std::int32_t>> nn;
  for (std::size_t j = 0; j < hr_coords.size(); ++j) {
    const Coord3& h = hr_coords.coords[j];
    Rgb acc{0.0, 0.0, 0.0};
    double weight_sum = 0.0;
    // Cells whose center can lie within the ball: |v*p + (v-1)/2 - h| <= r.
    std::array<std::int32_t, 3> lo, hi;
    const double half = (static_cast<double>(v) - 1.0) / 2.0;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max<std::int32_t>(
          0, static_cast<std::int32_t>(
                 std::ceil((static_cast<double>(h[a]) - radius_hr - half) / v)));
      hi[a] = std::min<std::int32_t>(
          lr.extent - 1,
          static_cast<std::int32_t>(
              std::floor((static_cast<double>(h[a]) + radius_hr - half) / v)));
    }
    for (std::int32_t cx = lo[0]; cx <= hi[0]; ++cx) {
      for (std::int32_t cy = lo[1]; cy <= hi[1]; ++cy) {
        for (std::int32_t cz = lo[2]; cz <= hi[2]; ++cz) {
          const std::int32_t idx = grid.at(cx, cy, cz);
          if (idx < 0) continue;
          const std::int64_t d4 =
              detail::center_dist4(h, lr.coords[static_cast<std::size_t>(idx)], v);
          if (static_cast<double>(d4) > limit4) continue;
          const double dist = std::sqrt(static_cast<double>(d4)) / 2.0;
          const double w = 1.0 / (kWeightEps + dist);
          const auto& c = colors[static_cast<std::size_t>(idx)];
          for (int a = 0; a < 3; ++a) acc[a] += w * c[a];
          weight_sum += w;
        }
      }
    }
    if (weight_sum > 0.0) {
      for (int a = 0; a < 3; ++a) out[j][a] = acc[a] / weight_sum;
    } else {
      detail::knn_query(grid, h, 1, nn);
      out[j] = colors[static_cast<std::size_t>(nn.front().second)];
    }
  }
  return out;
}

}  // namespace cunet
