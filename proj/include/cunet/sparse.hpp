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
#include <memory>
#include <vector>

#include "cunet/common.hpp"
#include "cunet/nn.hpp"
#include "cunet/rng.hpp"
#include "cunet/tensor.hpp"

namespace cunet {

// 4D point key: spatial position plus batch index, so point clouds of
// different sizes can be merged into one batch without interacting.
struct Coord4 {
  std::int32_t x = 0, y = 0, z = 0, batch = 0;

  friend bool operator==(const Coord4&, const Coord4&) = default;
};

// Open-addressing hash map from Coord4 to a row index. Linear probing over
// a power-of-two table kept at most half full; expected O(1) lookups.
class CoordIndex {
 public:
  CoordIndex() = default;

  explicit CoordIndex(const std::vector<Coord4>& coords) { build(coords); }

  void build(const std::vector<Coord4>& coords) {
    std::size_t cap = 16;
    while (cap < coords.size() * 2) cap <<= 1;
    mask_ = cap - 1;
    slots_.assign(cap, kEmpty);
    keys_ = &coords;
    for (std::size_t row = 0; row < coords.size(); ++row) {
      std::size_t slot = static_cast<std::size_t>(hash(coords[row])) & mask_;
      for (;;) {
        if (slots_[slot] == kEmpty) {
          slots_[slot] = static_cast<std::int32_t>(row);
          break;
        }
        if (coords[static_cast<std::size_t>(slots_[slot])] == coords[row]) {
          throw DuplicateCoordinateError("duplicate coordinate in sparse tensor");
        }
        slot = (slot + 1) & mask_;
      }
    }
  }

  // Row of the coordinate, or -1 when absent.
  std::int32_t find(const Coord4& c) const {
    if (slots_.empty()) return -1;
    std::size_t slot = static_cast<std::size_t>(hash(c)) & mask_;
    for (;;) {
      const std::int32_t row = slots_[slot];
      if (row == kEmpty) return -1;
      if ((*keys_)[static_cast<std::size_t>(row)] == c) return row;
      slot = (slot + 1) & mask_;
    }
  }

  // 64-bit mix of the packed coordinate halves through the splitmix64
  // finalizer; any map with O(1) expected lookup satisfies the contract.
  static std::uint64_t hash(const Coord4& c) {
    const std::uint64_t lo =
        (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.x)) << 32) |
        static_cast<std::uint32_t>(c.y);
    const std::uint64_t hi =
        (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.z)) << 32) |
        static_cast<std::uint32_t>(c.batch);
    return splitmix64(lo ^ splitmix64(hi));
  }

 private:
  static constexpr std::int32_t kEmpty = -1;

  std::vector<std::int32_t> slots_;
  std::size_t mask_ = 0;
  const std::vector<Coord4>* keys_ = nullptr;
};

// Immutable coordinate set shared by every layer of a submanifold network:
// all layers keep the same sites, so the index and kernel map are built once.
struct CoordSet {
  std::vector<Coord4> coords;
  CoordIndex index;

  explicit CoordSet(std::vector<Coord4> c) : coords(std::move(c)) {
    index.build(coords);
  }

  std::size_t size() const { return coords.size(); }
};

using CoordSetPtr = std::shared_ptr<const CoordSet>;

// Batched sparse tensor: shared coordinate set plus an N x C feature matrix.
template <typename T>
struct SparseTensor {
  CoordSetPtr geometry;
  Tensor<T> features;

  std::size_t size() const { return geometry->size(); }
};

template <typename T>
SparseTensor<T> make_sparse_tensor(std::vector<Coord4> coords, Tensor<T> features) {
  if (features.shape().size() != 2 || features.rows() != coords.size()) {
    throw ShapeError("sparse tensor: feature rows must match coordinate count");
  }
  return SparseTensor<T>{std::make_shared<CoordSet>(std::move(coords)),
                         std::move(features)};
}

// Per-kernel-offset lists of (input_row, output_row) pairs. Offsets are
// enumerated lexicographically over {-k/2..k/2}^3; the zero offset maps
// every row to itself. Offsets never cross batch boundaries because lookup
// keys carry the batch index.
struct KernelMap {
  int kernel_size = 0;
  struct OffsetPairs {
    IndexVecPtr in;
    IndexVecPtr out;
    std::size_t size() const { return in ? in->size() : 0; }
  };
  std::vector<OffsetPairs> offsets;

  std::size_t total_pairs() const {
    std::size_t n = 0;
    for (const auto& o : offsets) n += o.size();
    return n;
  }
};

inline KernelMap build_kernel_map(const CoordSet& geom, int kernel_size = 3) {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw InvalidKernelError("kernel size must be a positive odd integer");
  }
  const int r = kernel_size / 2;
  const std::size_t volume = static_cast<std::size_t>(kernel_size) * kernel_size * kernel_size;
  KernelMap km;
  km.kernel_size = kernel_size;
  km.offsets.resize(volume);

  std::vector<IndexVec> ins(volume), outs(volume);
  const std::size_t n = geom.size();
  std::size_t o = 0;
  for (int dx = -r; dx <= r; ++dx) {
    for (int dy = -r; dy <= r; ++dy) {
      for (int dz = -r; dz <= r; ++dz, ++o) {
        auto& in = ins[o];
        auto& out = outs[o];
        if (dx == 0 && dy == 0 && dz == 0) {
          in.resize(n);
          out.resize(n);
          for (std::size_t q = 0; q < n; ++q) {
            in[q] = out[q] = static_cast<std::int32_t>(q);
          }
          continue;
        }
        for (std::size_t q = 0; q < n; ++q) {
          const Coord4& c = geom.coords[q];
          const Coord4 nb{c.x + dx, c.y + dy, c.z + dz, c.batch};
          const std::int32_t row = geom.index.find(nb);
          if (row >= 0) {
            in.push_back(row);
            out.push_back(static_cast<std::int32_t>(q));
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < volume; ++i) {
    km.offsets[i].in = std::make_shared<const IndexVec>(std::move(ins[i]));
    km.offsets[i].out = std::make_shared<const IndexVec>(std::move(outs[i]));
  }
  return km;
}

inline KernelMap build_kernel_map(const CoordSetPtr& geom, int kernel_size = 3) {
  return build_kernel_map(*geom, kernel_size);
}

// Submanifold sparse convolution parameters: one C_in x C_out weight matrix
// per kernel offset. Convolutions feeding a batch norm carry no bias.
template <typename T>
struct SparseConv {
  std::vector<Tensor<T>> weights;  // kernel_size^3 entries
  int kernel_size = 3;

  SparseConv() = default;
  SparseConv(std::size_t in_channels, std::size_t out_channels, Rng& rng,
             int kernel = 3)
      : kernel_size(kernel) {
    const std::size_t volume = static_cast<std::size_t>(kernel) * kernel * kernel;
    // Fan-in covers the whole kernel, as for a dense 3D convolution.
    const std::size_t fan_in = volume * in_channels;
    weights.resize(volume);
    for (auto& w : weights) {
      w = Tensor<T>::zeros({in_channels, out_channels}, /*requires_grad=*/true);
      kaiming_uniform_(w, fan_in, rng);
    }
  }

  std::size_t in_channels() const { return weights.at(0).rows(); }
  std::size_t out_channels() const { return weights.at(0).cols(); }
};

// out[q] = sum over offsets d, pairs (i -> q) of features[i] * W[d].
// Coordinates are unchanged (submanifold rule). Differentiable through the
// gather-matmul-scatter composition.
template <typename T>
SparseTensor<T> sparse_conv(const SparseTensor<T>& st, const SparseConv<T>& conv,
                            const KernelMap& kmap) {
  if (st.features.cols() != conv.in_channels()) {
    throw ShapeError("sparse_conv: input channel mismatch");
  }
  if (kmap.kernel_size != conv.kernel_size) {
    throw InvalidKernelError("sparse_conv: kernel map size mismatch");
  }
  std::vector<std::pair<Tensor<T>, IndexVecPtr>> terms;
  terms.reserve(kmap.offsets.size());
  for (std::size_t o = 0; o < kmap.offsets.size(); ++o) {
    const auto& pairs = kmap.offsets[o];
    if (pairs.size() == 0) continue;
    terms.emplace_back(gather_matmul(st.features, pairs.in, conv.weights[o]),
                       pairs.out);
  }
  Tensor<T> out = scatter_add_multi(terms, st.size());
  return SparseTensor<T>{st.geometry, std::move(out)};
}

// Conv -> BN -> ReLU -> Conv -> BN, plus the input skip, then ReLU.
template <typename T>
struct ResidualBlock {
  SparseConv<T> conv1, conv2;
  BatchNorm<T> bn1, bn2;

  ResidualBlock() = default;
  ResidualBlock(std::size_t channels, Rng& rng)
      : conv1(channels, channels, rng),
        conv2(channels, channels, rng),
        bn1(channels),
        bn2(channels) {}
};

template <typename T>
SparseTensor<T> residual_block(const SparseTensor<T>& st, ResidualBlock<T>& block,
                               const KernelMap& kmap, BnMode mode) {
  if (st.features.cols() != block.conv1.in_channels()) {
    throw ShapeError("residual_block: channel mismatch");
  }
  Tensor<T> h = sparse_conv(st, block.conv1, kmap).features;
  h = relu(batchnorm(h, block.bn1, mode));
  h = sparse_conv(SparseTensor<T>{st.geometry, h}, block.conv2, kmap).features;
  h = batchnorm(h, block.bn2, mode);
  h = relu(add(h, st.features));
  return SparseTensor<T>{st.geometry, std::move(h)};
}

template <typename T>
SparseTensor<T> residual_block(const SparseTensor<T>& st, ResidualBlock<T>& block,
                               const KernelMap& kmap, bool training) {
  return residual_block(st, block, kmap,
                        training ? BnMode::kTrain : BnMode::kBatchStats);
}

// Feature extractor: a stem convolution lifting colors to K channels
// (with BN + ReLU) followed by `blocks` residual blocks. Output sites equal
// input sites throughout.
template <typename T>
struct FeatureExtractor {
  SparseConv<T> stem;
  BatchNorm<T> stem_bn;
  std::vector<ResidualBlock<T>> blocks;

  FeatureExtractor() = default;
  FeatureExtractor(std::size_t in_channels, std::size_t k, std::size_t n_blocks,
                   Rng& rng)
      : stem(in_channels, k, rng), stem_bn(k) {
    blocks.reserve(n_blocks);
    for (std::size_t i = 0; i < n_blocks; ++i) blocks.emplace_back(k, rng);
  }

  std::size_t channels() const { return stem.out_channels(); }
};

// Inference normalizes with the statistics of the input cloud itself
// (BnMode::kBatchStats): the training batches are whole clouds, so this is
// the distribution the layers saw during optimization, and single-cloud
// evaluation does not depend on which corpus filled the running buffers.
template <typename T>
SparseTensor<T> feature_extractor(const SparseTensor<T>& st,
                                  FeatureExtractor<T>& fe, const KernelMap& kmap,
                                  BnMode mode) {
  if (st.features.cols() != fe.stem.in_channels()) {
    throw ShapeError("feature_extractor: expected color features");
  }
  Tensor<T> h = sparse_conv(st, fe.stem, kmap).features;
  h = relu(batchnorm(h, fe.stem_bn, mode));
  SparseTensor<T> cur{st.geometry, std::move(h)};
  for (auto& block : fe.blocks) {
    cur = residual_block(cur, block, kmap, mode);
  }
  return cur;
}

template <typename T>
SparseTensor<T> feature_extractor(const SparseTensor<T>& st,
                                  FeatureExtractor<T>& fe, const KernelMap& kmap,
                                  bool training) {
  return feature_extractor(st, fe, kmap,
                           training ? BnMode::kTrain : BnMode::kBatchStats);
}

}  // namespace cunet
