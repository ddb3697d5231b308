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

#include <array>
#include <cstdint>
#include <optional>
#include <unordered_set>
#include <vector>

#include "cunet/common.hpp"
#include "cunet/rng.hpp"

namespace cunet {

using Coord3 = std::array<std::int32_t, 3>;
using Rgb = std::array<double, 3>;

// Voxelized point cloud: integer-grid coordinates inside a cubic extent
// [0, extent)^3 with optional RGB attributes in [0, 1]. The universal
// exchange type between the geometry, model, baseline and IO layers.
struct PointCloud {
  std::vector<Coord3> coords;
  std::optional<std::vector<Rgb>> colors;
  std::int32_t extent = 0;

  std::size_t size() const { return coords.size(); }
  bool has_colors() const { return colors.has_value(); }
};

namespace detail {
inline std::uint64_t hash_coord3(const Coord3& c) {
  std::uint64_t h = splitmix64((static_cast<std::uint64_t>(static_cast<std::uint32_t>(c[0])) << 32) |
                               static_cast<std::uint32_t>(c[1]));
  return splitmix64(h ^ static_cast<std::uint32_t>(c[2]));
}

struct Coord3Hash {
  std::size_t operator()(const Coord3& c) const {
    return static_cast<std::size_t>(hash_coord3(c));
  }
};
}  // namespace detail

// Checks every PointCloud invariant; throws InvariantError on violation.
inline void validate(const PointCloud& cloud) {
  if (cloud.extent <= 0) throw InvariantError("point cloud extent must be positive");
  std::unordered_set<Coord3, detail::Coord3Hash> seen;
  seen.reserve(cloud.coords.size() * 2);
  for (const auto& c : cloud.coords) {
    for (int a = 0; a < 3; ++a) {
      if (c[a] < 0 || c[a] >= cloud.extent) {
        throw InvariantError("coordinate outside [0, extent)");
      }
    }
    if (!seen.insert(c).second) {
      throw InvariantError("duplicate coordinate in point cloud");
    }
  }
  if (cloud.colors) {
    if (cloud.colors->size() != cloud.coords.size()) {
      throw InvariantError("color count does not match coordinate count");
    }
    for (const auto& rgb : *cloud.colors) {
      for (double ch : rgb) {
        if (!(ch >= 0.0 && ch <= 1.0)) {
          throw InvariantError("color channel outside [0, 1]");
        }
      }
    }
  }
}

}  // namespace cunet
