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
#include <chrono>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "cunet/common.hpp"
#include "cunet/regression.hpp"

namespace cunet {

// Latency scaling harness: times a runner at several problem sizes and fits
// latency = slope * n + intercept by ordinary least squares. Each size is
// measured as the median over `repeats` runs after `warmup` discarded runs,
// which resists scheduler jitter.

struct BenchSample {
  std::size_t n = 0;
  double seconds = 0.0;           // median
  std::vector<double> raw_seconds;
};

struct BenchReport {
  std::vector<BenchSample> samples;
  LinearFit fit;
  std::size_t threads = 0;
};

inline double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return (n % 2 == 1) ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// `runner(i)` executes the workload for sizes[i]; `measured_n(i)` reports
// the actual problem size (e.g. the realized HR point count).
inline BenchReport bench_scaling(
    const std::vector<std::size_t>& sizes,
    const std::function<void(std::size_t)>& runner,
    const std::function<std::size_t(std::size_t)>& measured_n, int repeats = 3,
    int warmup = 2) {
  if (sizes.size() < 4) {
    throw InsufficientDataError("bench_scaling needs at least 4 sizes");
  }
  if (repeats < 1) throw ConfigError("bench_scaling needs repeats >= 1");

  BenchReport report;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    for (int w = 0; w < warmup; ++w) runner(i);
    BenchSample sample;
    for (int rep = 0; rep < repeats; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      runner(i);
      const double s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
              .count();
      sample.raw_seconds.push_back(s);
    }
    sample.n = measured_n(i);
    sample.seconds = median(sample.raw_seconds);
    report.samples.push_back(std::move(sample));
  }

  std::vector<double> xs, ys;
  for (const auto& s : report.samples) {
    xs.push_back(static_cast<double>(s.n));
    ys.push_back(s.seconds);
  }
  report.fit = fit_linear(xs, ys);
  return report;
}

// Two-column gnuplot-friendly dump plus the fitted line parameters.
inline void write_bench_csv(const BenchReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write bench report: " + path);
  out.precision(10);
  out << "n_hr,seconds\n";
  for (const auto& s : report.samples) {
    out << s.n << "," << s.seconds << "\n";
  }
}

}  // namespace cunet
