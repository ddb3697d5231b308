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

#include <chrono>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "cunet/baselines.hpp"
#include "cunet/common.hpp"
#include "cunet/dataset.hpp"
#include "cunet/metrics.hpp"
#include "cunet/model.hpp"

namespace cunet {

// One method evaluated on one object at one ratio.
struct EvalRow {
  std::string method;
  std::string object_id;
  std::int32_t v_train = 0;  // 0 for training-free baselines
  std::int32_t v_test = 0;
  double psnr_db = 0.0;
  double wall_ms = 0.0;
  std::size_t n_lr = 0;
  std::size_t n_hr = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  double mean_psnr(const std::string& method, std::int32_t v_test) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.method == method && r.v_test == v_test) {
        sum += r.psnr_db;
        ++n;
      }
    }
    if (n == 0) throw InsufficientDataError("no rows for method " + method);
    return sum / static_cast<double>(n);
  }
};

inline const char* kEvalCsvHeader =
    "method,object_id,v_train,v_test,psnr_db,wall_ms,n_lr,n_hr";

inline void write_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report: " + path);
  out << kEvalCsvHeader << "\n";
  out.precision(10);
  for (const auto& r : report.rows) {
    out << r.method << "," << r.object_id << "," << r.v_train << "," << r.v_test
        << "," << r.psnr_db << "," << r.wall_ms << "," << r.n_lr << "," << r.n_hr
        << "\n";
  }
}

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                   start)
      .count();
}

}  // namespace detail

// Runs one method over one ground-truth object at ratio v and scores the
// result against the pre-quantization colors. The timed region covers the
// whole upsample: mapping recovery, neighbor search or network forward.
template <typename T>
EvalRow evaluate_object(const std::string& method, const std::string& object_id,
                        const PointCloud& hr, std::int32_t v,
                        CuNetModel<T>* model, std::size_t knn_k = 3,
                        double waan_radius = 1.5) {
  if (!hr.has_colors()) throw AttributeError("evaluation needs HR ground truth colors");
  auto pair = build_pairs(hr, v);

  PointCloud hr_coords;
  hr_coords.coords = hr.coords;
  hr_coords.extent = hr.extent;

  EvalRow row;
  row.method = method;
  row.object_id = object_id;
  row.v_test = v;
  row.n_lr = pair.n_l;
  row.n_hr = pair.n_h;

  std::vector<Rgb> pred;
  const auto start = std::chrono::steady_clock::now();
  if (method == "devox") {
    pred = upsample_devox(pair.lr, hr_coords, v);
  } else if (method == "knn") {
    pred = upsample_knn(pair.lr, hr_coords, v, knn_k);
  } else if (method == "waan") {
    pred = upsample_waan(pair.lr, hr_coords, v, waan_radius);
  } else if (method == "cunet") {
    if (model == nullptr) throw ConfigError("cunet evaluation requires a checkpoint");
    row.v_train = model->v_train;
    pred = upsample_cunet(*model, pair.lr, hr_coords, v);
  } else {
    throw ConfigError("unknown method: " + method);
  }
  row.wall_ms = detail::elapsed_ms(start);
  row.psnr_db = psnr(pred, *hr.colors);
  return row;
}

// Table-style evaluation: every method on every object of a split at every
// requested ratio. A cunet checkpoint may be evaluated at a ratio different
// from its training ratio; ratios below 2 are rejected.
template <typename T>
EvalReport evaluate(const std::vector<std::string>& methods,
                    const std::vector<std::pair<std::string, const PointCloud*>>& objects,
                    const std::vector<std::int32_t>& ratios, CuNetModel<T>* model,
                    std::ostream* warnings = nullptr, std::size_t knn_k = 3,
                    double waan_radius = 1.5) {
  if (objects.empty()) throw InsufficientDataError("evaluation set is empty");
  EvalReport report;
  for (const auto v : ratios) {
    if (v < 2) throw InvalidRatioError("evaluation ratio must be >= 2");
    for (const auto& method : methods) {
      if (method == "cunet" && model != nullptr && warnings != nullptr &&
          model->v_train != v) {
        (*warnings) << "warning: checkpoint trained for " << model->v_train
                    << "x evaluated at " << v << "x\n";
      }
      for (const auto& [id, cloud] : objects) {
        report.rows.push_back(evaluate_object<T>(method, id, *cloud, v, model,
                                                 knn_k, waan_radius));
      }
    }
  }
  return report;
}

}  // namespace cunet
