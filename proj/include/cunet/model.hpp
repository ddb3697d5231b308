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
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "cunet/metrics.hpp"
#include "cunet/optim.hpp"
#include "cunet/sparse.hpp"
#include "cunet/voxel.hpp"

namespace cunet {

// The color upsampling network: sparse-convolution feature extractor over
// the LR cloud, closed-form feature expansion to the HR cloud, and a 3-layer
// MLP predicting residual colors on top of the devoxelized coarse base.
template <typename T>
struct CuNetModel {
  int channels = 0;    // feature width K
  int num_blocks = 0;  // residual blocks in the extractor
  int v_train = 0;     // ratio the weights were trained for
  FeatureExtractor<T> fe;
  std::array<Linear<T>, 3> mlp;
};

// MLP widths: (K+3) -> (K+3)/2 -> (K+3)/4 -> 3, floor division, ReLU between
// layers and no activation after the last (residuals may be negative).
inline std::array<std::size_t, 4> mlp_widths(int k) {
  const std::size_t in = static_cast<std::size_t>(k) + 3;
  return {in, in / 2, in / 4, 3};
}

template <typename T>
CuNetModel<T> make_model(int channels, int num_blocks, int v_train,
                         std::uint64_t seed) {
  CuNetModel<T> model;
  model.channels = channels;
  model.num_blocks = num_blocks;
  model.v_train = v_train;
  Rng rng = Rng(seed).fork(0x6d6f64656cULL);  // "model"
  model.fe = FeatureExtractor<T>(3, static_cast<std::size_t>(channels),
                                 static_cast<std::size_t>(num_blocks), rng);
  const auto widths = mlp_widths(channels);
  for (int l = 0; l < 3; ++l) {
    model.mlp[static_cast<std::size_t>(l)] =
        Linear<T>(widths[static_cast<std::size_t>(l)],
                  widths[static_cast<std::size_t>(l) + 1], rng);
  }
  // The output layer starts at 1/50 of its Kaiming scale: the untrained
  // network then matches plain devoxelization to within a fraction of a
  // percent instead of fighting down a full-scale random correction, while
  // gradients still reach every upstream layer from the first step.
  for (auto& w : model.mlp[2].weight.mutable_data()) w *= T(0.02);
  return model;
}

// Stable name -> tensor listing of all trainable parameters, used by the
// optimizer and the checkpoint format.
template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> named_parameters(CuNetModel<T>& m) {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  auto add_conv = [&](const std::string& prefix, SparseConv<T>& conv) {
    for (std::size_t o = 0; o < conv.weights.size(); ++o) {
      out.emplace_back(prefix + ".w" + std::to_string(o), conv.weights[o]);
    }
  };
  auto add_bn = [&](const std::string& prefix, BatchNorm<T>& bn) {
    out.emplace_back(prefix + ".gamma", bn.gamma);
    out.emplace_back(prefix + ".beta", bn.beta);
  };
  add_conv("fe.stem", m.fe.stem);
  add_bn("fe.stem_bn", m.fe.stem_bn);
  for (std::size_t b = 0; b < m.fe.blocks.size(); ++b) {
    const std::string p = "fe.block" + std::to_string(b);
    add_conv(p + ".conv1", m.fe.blocks[b].conv1);
    add_bn(p + ".bn1", m.fe.blocks[b].bn1);
    add_conv(p + ".conv2", m.fe.blocks[b].conv2);
    add_bn(p + ".bn2", m.fe.blocks[b].bn2);
  }
  for (std::size_t l = 0; l < m.mlp.size(); ++l) {
    out.emplace_back("mlp." + std::to_string(l) + ".weight", m.mlp[l].weight);
    out.emplace_back("mlp." + std::to_string(l) + ".bias", m.mlp[l].bias);
  }
  return out;
}

// Non-trainable state (batch-norm running statistics).
template <typename T>
std::vector<std::pair<std::string, std::vector<T>*>> named_buffers(CuNetModel<T>& m) {
  std::vector<std::pair<std::string, std::vector<T>*>> out;
  auto add_bn = [&](const std::string& prefix, BatchNorm<T>& bn) {
    out.emplace_back(prefix + ".running_mean", &bn.running_mean);
    out.emplace_back(prefix + ".running_var", &bn.running_var);
  };
  add_bn("fe.stem_bn", m.fe.stem_bn);
  for (std::size_t b = 0; b < m.fe.blocks.size(); ++b) {
    const std::string p = "fe.block" + std::to_string(b);
    add_bn(p + ".bn1", m.fe.blocks[b].bn1);
    add_bn(p + ".bn2", m.fe.blocks[b].bn2);
  }
  return out;
}

// row j = [lr_features[map[j]], offsets[j]]; differentiable w.r.t. the LR
// features (gather + concat).
template <typename T>
Tensor<T> expand_features(const Tensor<T>& lr_features, IndexVecPtr mapping,
                          const Tensor<T>& offsets) {
  if (offsets.shape().size() != 2 || offsets.cols() != 3 ||
      offsets.rows() != mapping->size()) {
    throw ShapeError("expand_features: offsets must be N_h x 3");
  }
  return concat_cols(gather_rows(lr_features, std::move(mapping)), offsets);
}

template <typename T>
Tensor<T> predict_residuals(const Tensor<T>& hr_features, CuNetModel<T>& model) {
  if (hr_features.cols() != mlp_widths(model.channels)[0]) {
    throw ShapeError("predict_residuals: feature width mismatch");
  }
  Tensor<T> h = relu(model.mlp[0](hr_features));
  h = relu(model.mlp[1](h));
  return model.mlp[2](h);
}

// One (LR, HR) training or evaluation item with everything precomputed:
// the LR cloud as 4D coordinates, mean LR colors, the recovered mapping,
// normalized offsets, the devoxelized coarse base and the HR ground truth.
template <typename T>
struct PreparedSample {
  std::vector<Coord4> lr_coords;
  std::vector<T> lr_colors;  // N_l x 3
  IndexVecPtr mapping;       // N_h
  std::vector<T> offsets;    // N_h x 3
  std::vector<T> coarse;     // N_h x 3
  std::vector<T> gt;         // N_h x 3, empty when HR has no colors
  std::size_t n_l = 0, n_h = 0;
};

template <typename T>
PreparedSample<T> prepare_sample(const PointCloud& hr, std::int32_t v) {
  if (!hr.has_colors()) {
    throw AttributeError("training sample requires HR colors");
  }
  auto vox = voxelize(hr, v);
  return prepare_sample<T>(vox.lr, hr, vox.mapping);
}

template <typename T>
PreparedSample<T> prepare_sample(const PointCloud& lr, const PointCloud& hr,
                                 const LrHrMapping& mapping) {
  if (!lr.has_colors()) throw AttributeError("LR cloud requires colors");
  PreparedSample<T> s;
  s.n_l = lr.size();
  s.n_h = hr.size();
  s.lr_coords.resize(s.n_l);
  for (std::size_t i = 0; i < s.n_l; ++i) {
    s.lr_coords[i] = Coord4{lr.coords[i][0], lr.coords[i][1], lr.coords[i][2], 0};
  }
  s.lr_colors.resize(s.n_l * 3);
  for (std::size_t i = 0; i < s.n_l; ++i) {
    for (int a = 0; a < 3; ++a) {
      s.lr_colors[i * 3 + static_cast<std::size_t>(a)] =
          static_cast<T>((*lr.colors)[i][a]);
    }
  }
  s.mapping = std::make_shared<const IndexVec>(mapping.map);
  const Offsets offs = compute_offsets(hr, lr, mapping);
  s.offsets.resize(s.n_h * 3);
  s.coarse.resize(s.n_h * 3);
  for (std::size_t j = 0; j < s.n_h; ++j) {
    const std::size_t i = static_cast<std::size_t>(mapping.map[j]);
    for (int a = 0; a < 3; ++a) {
      s.offsets[j * 3 + static_cast<std::size_t>(a)] = static_cast<T>(offs[j][a]);
      // Coarse base gathered in model precision so the zero-residual path
      // reproduces devoxelization bit for bit.
      s.coarse[j * 3 + static_cast<std::size_t>(a)] =
          s.lr_colors[i * 3 + static_cast<std::size_t>(a)];
    }
  }
  if (hr.has_colors()) {
    s.gt.resize(s.n_h * 3);
    for (std::size_t j = 0; j < s.n_h; ++j) {
      for (int a = 0; a < 3; ++a) {
        s.gt[j * 3 + static_cast<std::size_t>(a)] = static_cast<T>((*hr.colors)[j][a]);
      }
    }
  }
  return s;
}

// Unclamped network output for one prepared sample (the training path).
template <typename T>
Tensor<T> model_forward(CuNetModel<T>& model, const PreparedSample<T>& s,
                        bool training) {
  auto st = make_sparse_tensor(
      s.lr_coords, Tensor<T>::from({s.n_l, 3}, s.lr_colors));
  const KernelMap kmap = build_kernel_map(st.geometry);
  Tensor<T> feat = feature_extractor(st, model.fe, kmap, training).features;
  Tensor<T> hrf = expand_features(feat, s.mapping,
                                  Tensor<T>::from({s.n_h, 3}, s.offsets));
  Tensor<T> residual = predict_residuals(hrf, model);
  return add(residual, Tensor<T>::from({s.n_h, 3}, s.coarse));
}

// Final inference colors: coarse + residual, clamped to [0, 1].
template <typename T>
std::vector<Rgb> model_predict(CuNetModel<T>& model, const PreparedSample<T>& s) {
  NoGradGuard no_grad;
  Tensor<T> pred = model_forward(model, s, /*training=*/false);
  std::vector<Rgb> out(s.n_h);
  const auto& pv = pred.data();
  for (std::size_t j = 0; j < s.n_h; ++j) {
    for (int a = 0; a < 3; ++a) {
      T c = pv[j * 3 + static_cast<std::size_t>(a)];
      if (c < T(0)) c = T(0);
      if (c > T(1)) c = T(1);
      out[j][a] = static_cast<double>(c);
    }
  }
  return out;
}

// Upsample an externally supplied (LR, HR) pair that is consistent with
// voxelization at ratio v.
template <typename T>
std::vector<Rgb> upsample_cunet(CuNetModel<T>& model, const PointCloud& lr,
                                const PointCloud& hr_coords, std::int32_t v) {
  if (v < 2) throw InvalidRatioError("upsampling ratio must be an integer >= 2");
  const LrHrMapping mapping = recover_mapping(lr, hr_coords, v);
  const auto sample = prepare_sample<T>(lr, hr_coords, mapping);
  return model_predict(model, sample);
}

struct TrainConfig {
  std::int32_t ratio = 5;
  int channels = 64;
  int num_blocks = 4;
  int epochs = 25;
  int batch_size = 8;
  double lr = 1e-3;
  double decay_factor = 0.1;
  int decay_period = 10;  // epochs
  double weight_decay = 1e-4;
  bool decoupled_weight_decay = false;  // L2-in-gradient by default
  std::uint64_t seed = 1;
};

struct EpochStats {
  int epoch = 0;
  double train_mse = 0.0;
  double val_psnr = 0.0;
  double lr = 0.0;
};

template <typename T>
struct TrainResult {
  CuNetModel<T> model;
  std::vector<EpochStats> log;
  int selected_epoch = -1;  // epoch whose weights ended up in `model`
};

namespace detail {

// Flat snapshot of all trainable parameters and buffers.
template <typename T>
struct ModelSnapshot {
  std::vector<std::vector<T>> params;
  std::vector<std::vector<T>> buffers;

  static ModelSnapshot capture(CuNetModel<T>& m) {
    ModelSnapshot s;
    for (auto& [name, p] : named_parameters(m)) s.params.push_back(p.data());
    for (auto& [name, b] : named_buffers(m)) s.buffers.push_back(*b);
    return s;
  }

  void restore(CuNetModel<T>& m) const {
    std::size_t i = 0;
    for (auto& [name, p] : named_parameters(m)) p.mutable_data() = params[i++];
    i = 0;
    for (auto& [name, b] : named_buffers(m)) *b = buffers[i++];
  }
};

}  // namespace detail

namespace detail {

// Concatenates prepared samples into one multi-object batch, offsetting LR
// row indices and tagging each object with its batch index.
template <typename T>
PreparedSample<T> merge_batch(const std::vector<const PreparedSample<T>*>& items) {
  PreparedSample<T> b;
  for (const auto* s : items) {
    b.n_l += s->n_l;
    b.n_h += s->n_h;
  }
  b.lr_coords.reserve(b.n_l);
  b.lr_colors.reserve(b.n_l * 3);
  b.offsets.reserve(b.n_h * 3);
  b.coarse.reserve(b.n_h * 3);
  b.gt.reserve(b.n_h * 3);
  auto mapping = std::make_shared<IndexVec>();
  mapping->reserve(b.n_h);
  std::int32_t row_offset = 0;
  std::int32_t batch_id = 0;
  for (const auto* s : items) {
    for (const auto& c : s->lr_coords) {
      b.lr_coords.push_back(Coord4{c.x, c.y, c.z, batch_id});
    }
    b.lr_colors.insert(b.lr_colors.end(), s->lr_colors.begin(), s->lr_colors.end());
    for (auto m : *s->mapping) mapping->push_back(m + row_offset);
    b.offsets.insert(b.offsets.end(), s->offsets.begin(), s->offsets.end());
    b.coarse.insert(b.coarse.end(), s->coarse.begin(), s->coarse.end());
    b.gt.insert(b.gt.end(), s->gt.begin(), s->gt.end());
    row_offset += static_cast<std::int32_t>(s->n_l);
    ++batch_id;
  }
  b.mapping = std::move(mapping);
  return b;
}

}  // namespace detail

// Full training loop: Adam on the MSE between unclamped predictions and
// ground-truth HR colors, multi-object batches via the 4D batch index,
// step-decayed learning rate, per-epoch validation PSNR.
template <typename T>
TrainResult<T> train_cunet(const std::vector<PointCloud>& train_hr,
                           const std::vector<PointCloud>& val_hr,
                           const TrainConfig& cfg, std::ostream* progress = nullptr) {
  if (train_hr.empty()) {
    throw InsufficientDataError("training dataset is empty");
  }
  if (cfg.ratio < 2) throw InvalidRatioError("training ratio must be >= 2");

  std::vector<PreparedSample<T>> train_samples;
  train_samples.reserve(train_hr.size());
  for (const auto& hr : train_hr) {
    train_samples.push_back(prepare_sample<T>(hr, cfg.ratio));
  }
  std::vector<PreparedSample<T>> val_samples;
  val_samples.reserve(val_hr.size());
  for (const auto& hr : val_hr) {
    val_samples.push_back(prepare_sample<T>(hr, cfg.ratio));
  }

  TrainResult<T> result;
  result.model = make_model<T>(cfg.channels, cfg.num_blocks, cfg.ratio, cfg.seed);
  auto& model = result.model;

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.weight_decay = cfg.weight_decay;
  adam_cfg.decoupled = cfg.decoupled_weight_decay;
  adam_cfg.decay_factor = cfg.decay_factor;
  adam_cfg.decay_period = cfg.decay_period;
  std::vector<Tensor<T>> params;
  for (auto& [name, p] : named_parameters(model)) params.push_back(p);
  Adam<T> adam(params, adam_cfg);

  Rng shuffle_rng = Rng(cfg.seed).fork(0x7368756666ULL);  // "shuff"
  std::vector<std::size_t> order(train_samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t batch =
      std::max<std::size_t>(1, static_cast<std::size_t>(cfg.batch_size));
  double best_val = -std::numeric_limits<double>::infinity();
  detail::ModelSnapshot<T> best_snapshot;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.begin_epoch(epoch);
    shuffle_rng.shuffle(order);
    double sq_err_sum = 0.0;
    std::size_t element_count = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::vector<const PreparedSample<T>*> items;
      for (std::size_t i = start; i < std::min(start + batch, order.size()); ++i) {
        items.push_back(&train_samples[order[i]]);
      }
      PreparedSample<T> merged = detail::merge_batch(items);
      adam.zero_grad();
      Tensor<T> pred = model_forward(model, merged, /*training=*/true);
      Tensor<T> loss = mse_loss(pred, Tensor<T>::from({merged.n_h, 3}, merged.gt));
      loss.backward();
      adam.step();
      sq_err_sum += static_cast<double>(loss.item()) *
                    static_cast<double>(merged.n_h * 3);
      element_count += merged.n_h * 3;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_mse = element_count ? sq_err_sum / static_cast<double>(element_count) : 0.0;
    stats.lr = adam.effective_lr();
    if (!val_samples.empty()) {
      double psnr_sum = 0.0;
      for (auto& s : val_samples) {
        std::vector<Rgb> pred = model_predict(model, s);
        std::vector<Rgb> gt(s.n_h);
        for (std::size_t j = 0; j < s.n_h; ++j) {
          for (int a = 0; a < 3; ++a) {
            gt[j][a] = static_cast<double>(s.gt[j * 3 + static_cast<std::size_t>(a)]);
          }
        }
        psnr_sum += psnr(pred, gt);
      }
      stats.val_psnr = psnr_sum / static_cast<double>(val_samples.size());
      // Validation-selected checkpoint: mean validation PSNR is the metric
      // the model is reported on, so keep the weights from its peak.
      if (stats.val_psnr > best_val) {
        best_val = stats.val_psnr;
        best_snapshot = detail::ModelSnapshot<T>::capture(model);
        result.selected_epoch = epoch;
      }
    }
    result.log.push_back(stats);
    if (progress) {
      (*progress) << "epoch " << epoch << " train_mse " << stats.train_mse
                  << " val_psnr " << stats.val_psnr << " lr " << stats.lr << "\n";
    }
  }
  if (result.selected_epoch >= 0) {
    best_snapshot.restore(model);
    if (progress) {
      (*progress) << "selected epoch " << result.selected_epoch
                  << " (val_psnr " << best_val << ")\n";
    }
  } else {
    result.selected_epoch = cfg.epochs - 1;
  }
  return result;
}

}  // namespace cunet
