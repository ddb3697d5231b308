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

#include <stdexcept>
#include <string>

namespace cunet {

// All recoverable failures are thrown as a CunetError carrying a short
// machine-readable category tag. The CLI prints "error: [category] message"
// and exits 1.
class CunetError : public std::runtime_error {
 public:
  CunetError(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

#define CUNET_DEFINE_ERROR(NAME, TAG)                       \
  class NAME : public CunetError {                          \
   public:                                                  \
    explicit NAME(const std::string& message)               \
        : CunetError(TAG, message) {}                       \
  }

CUNET_DEFINE_ERROR(ShapeError, "shape");
CUNET_DEFINE_ERROR(InvalidRatioError, "invalid-ratio");
CUNET_DEFINE_ERROR(DegenerateGridError, "degenerate-grid");
CUNET_DEFINE_ERROR(MappingError, "mapping");
CUNET_DEFINE_ERROR(DuplicateCoordinateError, "duplicate-coordinate");
CUNET_DEFINE_ERROR(InvalidKernelError, "invalid-kernel");
CUNET_DEFINE_ERROR(DegenerateBatchError, "degenerate-batch");
CUNET_DEFINE_ERROR(ParseError, "parse");
CUNET_DEFINE_ERROR(AttributeError, "attribute");
CUNET_DEFINE_ERROR(EmptyCloudError, "empty-cloud");
CUNET_DEFINE_ERROR(InvariantError, "invariant");
CUNET_DEFINE_ERROR(InsufficientDataError, "insufficient-data");
CUNET_DEFINE_ERROR(IoError, "io");
CUNET_DEFINE_ERROR(ConfigError, "config");
CUNET_DEFINE_ERROR(CheckpointError, "checkpoint");

#undef CUNET_DEFINE_ERROR

}  // namespace cunet
