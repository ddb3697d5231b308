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
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "cunet/common.hpp"
#include "cunet/point_cloud.hpp"

namespace cunet {

// Surjection from HR point index to the LR point whose voxel contains it,
// recovered from voxelization. voxel_size is the upsampling ratio v (HR
// voxels per LR voxel per axis).
struct LrHrMapping {
  std::vector<std::int32_t> map;  // map[j] = LR index of HR point j
  std::int32_t voxel_size = 0;

  std::size_t hr_count() const { return map.size(); }
};

// Checks the mapping invariants against the clouds it connects.
inline void validate(const LrHrMapping& mapping, const PointCloud& hr,
                     const PointCloud& lr) {
  if (mapping.voxel_size < 2) throw InvariantError("mapping voxel_size must be >= 2");
  if (mapping.map.size() != hr.size()) {
    throw InvariantError("mapping length does not match HR point count");
  }
  std::vector<bool> hit(lr.size(), false);
  const std::int32_t v = mapping.voxel_size;
  for (std::size_t j = 0; j < mapping.map.size(); ++j) {
    const std::int32_t i = mapping.map[j];
    if (i < 0 || static_cast<std::size_t>(i) >= lr.size()) {
      throw InvariantError("mapping entry outside LR index range");
    }
    hit[static_cast<std::size_t>(i)] = true;
    for (int a = 0; a < 3; ++a) {
      if (hr.coords[j][a] / v != lr.coords[static_cast<std::size_t>(i)][a]) {
        throw InvariantError("mapping inconsistent with floor(hr / v)");
      }
    }
  }
  if (!std::all_of(hit.begin(), hit.end(), [](bool b) { return b; })) {
    throw InvariantError("mapping is not surjective");
  }
}

struct VoxelizeResult {
  PointCloud lr;
  LrHrMapping mapping;
};

// Merges HR points sharing a voxel of side v into one LR point. LR colors,
// when present, are the arithmetic mean of the member HR colors. LR points
// are ordered lexicographically by coordinate so results are reproducible,
// and the recovered HR -> LR mapping is returned alongside.
inline VoxelizeResult voxelize(const PointCloud& hr, std::int32_t v) {
  if (v < 2) {
    throw InvalidRatioError("upsampling ratio must be an integer >= 2");
  }
  if (v >= hr.extent) {
    throw DegenerateGridError("ratio must be smaller than the cloud extent");
  }
  validate(hr);

  const std::size_t n_h = hr.size();
  std::unordered_map<Coord3, std::int32_t, detail::Coord3Hash> voxel_of;
  voxel_of.reserve(n_h * 2);
  std::vector<Coord3> voxels;
  std::vector<std::int32_t> member_voxel(n_h);
  for (std::size_t j = 0; j < n_h; ++j) {
    const Coord3 q = {hr.coords[j][0] / v, hr.coords[j][1] / v, hr.coords[j][2] / v};
    auto [it, inserted] = voxel_of.try_emplace(q, static_cast<std::int32_t>(voxels.size()));
    if (inserted) voxels.push_back(q);
    member_voxel[j] = it->second;
  }

  // Lexicographic LR order; remap the provisional (first-seen) indices.
  std::vector<std::int32_t> order(voxels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int32_t>(i);
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    return voxels[static_cast<std::size_t>(a)] < voxels[static_cast<std::size_t>(b)];
  });
  std::vector<std::int32_t> rank(voxels.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    rank[static_cast<std::size_t>(order[i])] = static_cast<std::int32_t>(i);
  }

  VoxelizeResult out;
  out.lr.extent = (hr.extent + v - 1) / v;
  out.lr.coords.resize(voxels.size());
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    out.lr.coords[static_cast<std::size_t>(rank[i])] = voxels[i];
  }
  out.mapping.voxel_size = v;
  out.mapping.map.resize(n_h);
  for (std::size_t j = 0; j < n_h; ++j) {
    out.mapping.map[j] = rank[static_cast<std::size_t>(member_voxel[j])];
  }
  if (hr.has_colors()) {
    std::vector<Rgb> sums(voxels.size(), Rgb{0.0, 0.0, 0.0});
    std::vector<std::int64_t> counts(voxels.size(), 0);
    for (std::size_t j = 0; j < n_h; ++j) {
      const std::size_t i = static_cast<std::size_t>(out.mapping.map[j]);
      const Rgb& c = (*hr.colors)[j];
      for (int a = 0; a < 3; ++a) sums[i][a] += c[a];
      ++counts[i];
    }
    for (std::size_t i = 0; i < sums.size(); ++i) {
      for (int a = 0; a < 3; ++a) sums[i][a] /= static_cast<double>(counts[i]);
    }
    out.lr.colors = std::move(sums);
  }
  return out;
}

using Offsets = std::vector<std::array<double, 3>>;

// Normalized within-voxel position of each HR point relative to its LR
// parent: delta = 2 * (hr - v * lr) / (v - 1) - 1, componentwise in [-1, 1].
inline Offsets compute_offsets(const PointCloud& hr, const PointCloud& lr,
                               const LrHrMapping& mapping) {
  if (mapping.map.size() != hr.size()) {
    throw ShapeError("compute_offsets: mapping length mismatch");
  }
  const std::int32_t v = mapping.voxel_size;
  if (v < 2) throw InvalidRatioError("compute_offsets: voxel_size must be >= 2");
  Offsets offsets(hr.size());
  const double denom = static_cast<double>(v - 1);
  for (std::size_t j = 0; j < hr.size(); ++j) {
    const std::int32_t i = mapping.map[j];
    if (i < 0 || static_cast<std::size_t>(i) >= lr.size()) {
      throw MappingError("compute_offsets: mapping entry outside LR range");
    }
    for (int a = 0; a < 3; ++a) {
      const double local =
          static_cast<double>(hr.coords[j][a] - v * lr.coords[static_cast<std::size_t>(i)][a]);
      offsets[j][a] = 2.0 * local / denom - 1.0;
    }
  }
  return offsets;
}

// Rebuilds the HR -> LR mapping for a pair that was produced by voxelization
// at ratio v. Fails if any HR point has no LR parent or any LR point has no
// HR child (the pair is then not a voxelization of the HR cloud).
inline LrHrMapping recover_mapping(const PointCloud& lr, const PointCloud& hr,
                                   std::int32_t v) {
  if (v < 2) throw InvalidRatioError("upsampling ratio must be an integer >= 2");
  std::unordered_map<Coord3, std::int32_t, detail::Coord3Hash> lr_index;
  lr_index.reserve(lr.size() * 2);
  for (std::size_t i = 0; i < lr.size(); ++i) {
    if (!lr_index.try_emplace(lr.coords[i], static_cast<std::int32_t>(i)).second) {
      throw MappingError("duplicate LR coordinate");
    }
  }
  LrHrMapping mapping;
  mapping.voxel_size = v;
  mapping.map.resize(hr.size());
  std::vector<bool> hit(lr.size(), false);
  for (std::size_t j = 0; j < hr.size(); ++j) {
    const Coord3 q = {hr.coords[j][0] / v, hr.coords[j][1] / v, hr.coords[j][2] / v};
    auto it = lr_index.find(q);
    if (it == lr_index.end()) {
      throw MappingError("HR point falls outside every LR voxel");
    }
    mapping.map[j] = it->second;
    hit[static_cast<std::size_t>(it->second)] = true;
  }
  for (std::size_t i = 0; i < hit.size(); ++i) {
    if (!hit[i]) throw MappingError("LR point has no HR member");
  }
  return mapping;
}

// Spreads each LR color to all HR points of its voxel: coarse[j] = lr[m(j)].
inline std::vector<Rgb> devoxelize(const std::vector<Rgb>& lr_colors,
                                   const LrHrMapping& mapping) {
  std::vector<Rgb> coarse(mapping.map.size());
  for (std::size_t j = 0; j < mapping.map.size(); ++j) {
    const std::int32_t i = mapping.map[j];
    if (i < 0 || static_cast<std::size_t>(i) >= lr_colors.size()) {
      throw ShapeError("devoxelize: mapping entry outside LR color range");
    }
    coarse[j] = lr_colors[static_cast<std::size_t>(i)];
  }
  return coarse;
}

}  // namespace cunet
