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

#include "cunet/common.hpp"
#include "cunet/tensor.hpp"

namespace cunet {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // L2 penalty added to the gradient (coupled form). Set `decoupled` to
  // subtract lr * wd * p from the parameter instead.
  double weight_decay = 0.0;
  bool decoupled = false;
  // Step decay: lr is multiplied by decay_factor every decay_period epochs.
  // decay_period == 0 disables the schedule.
  double decay_factor = 1.0;
  int decay_period = 0;
};

// Adam optimizer state over a fixed parameter list. Moment buffers are kept
// in the parameter precision; the schedule is driven by begin_epoch().
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig config)
      : params_(std::move(params)), cfg_(config) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].numel(), T(0));
      v_[i].assign(params_[i].numel(), T(0));
    }
  }

  void begin_epoch(int epoch) { epoch_ = epoch; }
  int epoch() const { return epoch_; }
  long step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  double effective_lr() const {
    if (cfg_.decay_period <= 0) return cfg_.lr;
    const int drops = epoch_ / cfg_.decay_period;
    return cfg_.lr * std::pow(cfg_.decay_factor, drops);
  }

  // One update over all parameters from their accumulated gradients.
  // Parameters without a populated gradient are treated as zero-gradient.
  void step() {
    ++step_;
    const double lr = effective_lr();
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      auto& p = params_[pi].mutable_data();
      const std::vector<T>* gptr =
          params_[pi].has_grad() ? &params_[pi].grad() : nullptr;
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (std::size_t i = 0; i < p.size(); ++i) {
        double g = gptr ? static_cast<double>((*gptr)[i]) : 0.0;
        if (cfg_.weight_decay != 0.0 && !cfg_.decoupled) {
          g += cfg_.weight_decay * static_cast<double>(p[i]);
        }
        const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * g;
        const double vi = cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        double update = lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        if (cfg_.weight_decay != 0.0 && cfg_.decoupled) {
          update += lr * cfg_.weight_decay * static_cast<double>(p[i]);
        }
        p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::vector<Tensor<T>> params_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  long step_ = 0;
  int epoch_ = 0;
};

}  // namespace cunet
