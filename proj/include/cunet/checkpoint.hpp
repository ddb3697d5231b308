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

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cunet/common.hpp"
#include "cunet/model.hpp"

namespace cunet {

// Model checkpoint: little-endian binary.
//
//   magic   8 bytes "CUNETCK1"
//   u32     format version (1)
//   u8      scalar width in bytes (4 = float, 8 = double)
//   u32     channels K
//   u32     residual blocks
//   u32     training ratio v
//   u32     record count
//   records u8 kind (0 trainable, 1 buffer), u16 name length, name bytes,
//           u8 ndim, u32 dims..., payload scalars
//
// Records are matched by name against a freshly constructed model, so a file
// is rejected whenever its architecture metadata and tensor list disagree.

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace detail {

constexpr char kCkptMagic[8] = {'C', 'U', 'N', 'E', 'T', 'C', 'K', '1'};

template <typename V>
void write_pod(std::ofstream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::ifstream& in) {
  V v;
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw CheckpointError("unexpected end of checkpoint file");
  return v;
}

}  // namespace detail

struct CheckpointInfo {
  int scalar_bytes = 0;
  int channels = 0;
  int num_blocks = 0;
  int v_train = 0;
};

inline CheckpointInfo read_checkpoint_header(std::ifstream& in,
                                             const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCkptMagic, 8) != 0) {
    throw CheckpointError("not a checkpoint file: " + path);
  }
  const auto version = detail::read_pod<std::uint32_t>(in);
  if (version != 1) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointInfo info;
  info.scalar_bytes = detail::read_pod<std::uint8_t>(in);
  info.channels = static_cast<int>(detail::read_pod<std::uint32_t>(in));
  info.num_blocks = static_cast<int>(detail::read_pod<std::uint32_t>(in));
  info.v_train = static_cast<int>(detail::read_pod<std::uint32_t>(in));
  return info;
}

inline CheckpointInfo peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  return read_checkpoint_header(in, path);
}

template <typename T>
void save_checkpoint(CuNetModel<T>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(detail::kCkptMagic, 8);
  detail::write_pod<std::uint32_t>(out, 1);
  detail::write_pod<std::uint8_t>(out, sizeof(T));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.channels));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.num_blocks));
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.v_train));

  auto params = named_parameters(model);
  auto buffers = named_buffers(model);
  detail::write_pod<std::uint32_t>(
      out, static_cast<std::uint32_t>(params.size() + buffers.size()));

  auto write_record = [&out](std::uint8_t kind, const std::string& name,
                             const std::vector<std::size_t>& shape,
                             const std::vector<T>& data) {
    detail::write_pod<std::uint8_t>(out, kind);
    detail::write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(T)));
  };

  for (auto& [name, p] : params) write_record(0, name, p.shape(), p.data());
  for (auto& [name, b] : buffers) write_record(1, name, {b->size()}, *b);
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

template <typename T>
CuNetModel<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  const CheckpointInfo info = read_checkpoint_header(in, path);
  if (info.scalar_bytes != static_cast<int>(sizeof(T))) {
    throw CheckpointError("checkpoint precision (" +
                          std::to_string(info.scalar_bytes * 8) +
                          "-bit) does not match the requested model precision");
  }
  CuNetModel<T> model =
      make_model<T>(info.channels, info.num_blocks, info.v_train, /*seed=*/0);

  std::unordered_map<std::string, Tensor<T>> params;
  for (auto& [name, p] : named_parameters(model)) params.emplace(name, p);
  std::unordered_map<std::string, std::vector<T>*> buffers;
  for (auto& [name, b] : named_buffers(model)) buffers.emplace(name, b);

  const auto count = detail::read_pod<std::uint32_t>(in);
  if (count != params.size() + buffers.size()) {
    throw CheckpointError("checkpoint record count does not match architecture");
  }
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto kind = detail::read_pod<std::uint8_t>(in);
    const auto name_len = detail::read_pod<std::uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto ndim = detail::read_pod<std::uint8_t>(in);
    std::vector<std::size_t> shape(ndim);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = detail::read_pod<std::uint32_t>(in);
      numel *= d;
    }
    std::vector<T> data(numel);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(numel * sizeof(T)));
    if (!in) throw CheckpointError("unexpected end of checkpoint file");
    if (kind == 0) {
      auto it = params.find(name);
      if (it == params.end()) {
        throw CheckpointError("unknown parameter in checkpoint: " + name);
      }
      if (it->second.shape() != shape) {
        throw CheckpointError("parameter shape mismatch: " + name);
      }
      it->second.mutable_data() = std::move(data);
    } else if (kind == 1) {
      auto it = buffers.find(name);
      if (it == buffers.end()) {
        throw CheckpointError("unknown buffer in checkpoint: " + name);
      }
      if (it->second->size() != numel) {
        throw CheckpointError("buffer size mismatch: " + name);
      }
      *it->second = std::move(data);
    } else {
      throw CheckpointError("unknown record kind in checkpoint");
    }
  }
  return model;
}

}  // namespace cunet
