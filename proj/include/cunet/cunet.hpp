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

#include "cunet/baselines.hpp"
#include "cunet/bench.hpp"
#include "cunet/checkpoint.hpp"
#include "cunet/common.hpp"
#include "cunet/dataset.hpp"
#include "cunet/evaluate.hpp"
#include "cunet/metrics.hpp"
#include "cunet/model.hpp"
#include "cunet/nn.hpp"
#include "cunet/optim.hpp"
#include "cunet/ply.hpp"
#include "cunet/point_cloud.hpp"
#include "cunet/regression.hpp"
#include "cunet/rng.hpp"
#include "cunet/sparse.hpp"
#include "cunet/synthetic.hpp"
#include "cunet/tensor.hpp"
#include "cunet/threading.hpp"
#include "cunet/voxel.hpp"
