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
#include <cmath>
#include <limits>
#include <vector>

#include "cunet/common.hpp"
#include "cunet/point_cloud.hpp"

namespace cunet {

inline std::array<double, 3> mse_per_channel(const std::vector<Rgb>& pred,
                                             const std::vector<Rgb>& gt) {
  if (pred.size() != gt.size()) throw ShapeError("mse: size mismatch");
  if (pred.empty()) throw ShapeError("mse: empty inputs");
  std::array<double, 3> acc{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const double d = pred[i][a] - gt[i][a];
      acc[a] += d * d;
    }
  }
  for (auto& v : acc) v /= static_cast<double>(pred.size());
  return acc;
}

// PSNR in dB over all points and all three channels on the [0, 1] scale:
// 10 * log10(1 / MSE). Identical inputs yield the +infinity sentinel.
inline double psnr(const std::vector<Rgb>& pred, const std::vector<Rgb>& gt) {
  const auto ch = mse_per_channel(pred, gt);
  const double mse = (ch[0] + ch[1] + ch[2]) / 3.0;
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace cunet
