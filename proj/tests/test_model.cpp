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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "cunet/checkpoint.hpp"
#include "cunet/model.hpp"
#include "cunet/synthetic.hpp"
#include "test_util.hpp"

using namespace cunet;

namespace {

template <typename T>
void zero_final_layer(CuNetModel<T>& model) {
  auto& w = model.mlp[2].weight.mutable_data();
  std::fill(w.begin(), w.end(), T(0));
  auto& b = model.mlp[2].bias.mutable_data();
  std::fill(b.begin(), b.end(), T(0));
}

PointCloud tiny_textured_cloud(std::size_t count, std::int32_t extent,
                               std::uint64_t seed) {
  Rng rng(seed);
  PointCloud hr = testutil::random_cloud(count, extent, rng);
  return hr;
}

}  // namespace

TEST_CASE("mlp widths follow the halving rule down to 3") {
  CHECK(mlp_widths(32) == std::array<std::size_t, 4>{35, 17, 8, 3});
  CHECK(mlp_widths(64) == std::array<std::size_t, 4>{67, 33, 16, 3});
  CHECK(mlp_widths(8) == std::array<std::size_t, 4>{11, 5, 2, 3});

  auto model = make_model<float>(32, 4, 2, 1);
  CHECK(model.mlp[0].weight.shape() == std::vector<std::size_t>{35, 17});
  CHECK(model.mlp[1].weight.shape() == std::vector<std::size_t>{17, 8});
  CHECK(model.mlp[2].weight.shape() == std::vector<std::size_t>{8, 3});
}

TEST_CASE("expand_features concatenates parent features with offsets") {
  // One LR point with feature (5, 7); two HR children at opposite corners.
  auto lr_features = Tensor<double>::from({1, 2}, {5.0, 7.0});
  auto mapping = std::make_shared<const IndexVec>(IndexVec{0, 0});
  auto offsets = Tensor<double>::from({2, 3}, {-1, -1, -1, 1, 1, 1});
  auto out = expand_features(lr_features, mapping, offsets);
  CHECK(out.shape() == std::vector<std::size_t>{2, 5});
  CHECK(out.data() == std::vector<double>{5, 7, -1, -1, -1, 5, 7, 1, 1, 1});
}

TEST_CASE("expand_features output has N_h rows and K+3 columns") {
  Rng rng(2);
  const std::size_t n_l = 7, n_h = 29, k = 16;
  auto lr_features = testutil::random_tensor<double>({n_l, k}, rng);
  IndexVec map(n_h);
  for (auto& m : map) m = static_cast<std::int32_t>(rng.below(n_l));
  auto offsets = testutil::random_tensor<double>({n_h, 3}, rng);
  auto out = expand_features(lr_features, std::make_shared<const IndexVec>(map),
                             offsets);
  CHECK(out.rows() == n_h);
  CHECK(out.cols() == k + 3);
}

TEST_CASE("expand_features gradient is the scatter-add adjoint") {
  Rng rng(3);
  const std::size_t n_l = 5, n_h = 17, k = 4;
  auto lr_features = testutil::random_tensor<double>({n_l, k}, rng, true);
  IndexVec map(n_h);
  for (auto& m : map) m = static_cast<std::int32_t>(rng.below(n_l));
  auto offsets = testutil::random_tensor<double>({n_h, 3}, rng);

  auto out = expand_features(lr_features, std::make_shared<const IndexVec>(map),
                             offsets);
  // Seed the output gradient via an inner product with a random cotangent.
  auto cotangent = testutil::random_tensor<double>({n_h, k + 3}, rng);
  auto loss = mse_loss(out, cotangent);
  loss.backward();

  // Adjoint check: <d out/d lr . u, v> computed two ways to 1e-12.
  const auto& g = lr_features.grad();
  std::vector<double> expected(n_l * k, 0.0);
  const double scale = 2.0 / static_cast<double>(n_h * (k + 3));
  for (std::size_t j = 0; j < n_h; ++j) {
    for (std::size_t c = 0; c < k; ++c) {
      expected[static_cast<std::size_t>(map[j]) * k + c] +=
          scale * (out.data()[j * (k + 3) + c] - cotangent.data()[j * (k + 3) + c]);
    }
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(g[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
}

TEST_CASE("predict_residuals with zero parameters returns zeros, no clamping") {
  auto model = make_model<double>(8, 1, 2, 9);
  for (auto& layer : model.mlp) {
    std::fill(layer.weight.mutable_data().begin(),
              layer.weight.mutable_data().end(), 0.0);
    std::fill(layer.bias.mutable_data().begin(), layer.bias.mutable_data().end(),
              0.0);
  }
  Rng rng(4);
  auto features = testutil::random_tensor<double>({10, 11}, rng);
  auto out = predict_residuals(features, model);
  CHECK(out.rows() == 10);
  CHECK(out.cols() == 3);
  for (double v : out.data()) CHECK(v == 0.0);

  // Negative residuals are representable: bias below zero must pass through.
  model.mlp[2].bias.mutable_data() = {-0.25, 0.5, -0.75};
  auto shifted = predict_residuals(features, model);
  CHECK(shifted.data()[0] == -0.25);
  CHECK(shifted.data()[2] == -0.75);
}

TEST_CASE("zero final MLP layer makes forward equal devoxelization bit for bit") {
  PointCloud hr = tiny_textured_cloud(200, 24, 5);
  const std::int32_t v = 3;

  SUBCASE("float model") {
    auto model = make_model<float>(16, 2, v, 11);
    zero_final_layer(model);
    auto vox = voxelize(hr, v);
    auto sample = prepare_sample<float>(vox.lr, hr, vox.mapping);
    auto pred = model_predict(model, sample);
    auto coarse = devoxelize(*vox.lr.colors, vox.mapping);
    for (std::size_t j = 0; j < pred.size(); ++j) {
      for (int a = 0; a < 3; ++a) {
        // Exact equality with the coarse color cast to model precision.
        CHECK(pred[j][a] == static_cast<double>(static_cast<float>(coarse[j][a])));
      }
    }
  }
  SUBCASE("double model is exactly devox") {
    auto model = make_model<double>(16, 2, v, 11);
    zero_final_layer(model);
    auto vox = voxelize(hr, v);
    auto sample = prepare_sample<double>(vox.lr, hr, vox.mapping);
    auto pred = model_predict(model, sample);
    auto coarse = devoxelize(*vox.lr.colors, vox.mapping);
    for (std::size_t j = 0; j < pred.size(); ++j) {
      for (int a = 0; a < 3; ++a) CHECK(pred[j][a] == coarse[j][a]);
    }
  }
}

TEST_CASE("forward output is clamped to the unit cube and has N_h rows") {
  PointCloud hr = tiny_textured_cloud(150, 20, 6);
  auto model = make_model<float>(8, 1, 2, 3);
  // Blow up the final bias so clamping must engage on both sides.
  model.mlp[2].bias.mutable_data() = {10.0f, -10.0f, 0.0f};
  auto vox = voxelize(hr, 2);
  auto sample = prepare_sample<float>(vox.lr, hr, vox.mapping);
  auto pred = model_predict(model, sample);
  REQUIRE(pred.size() == hr.size());
  for (const auto& c : pred) {
    CHECK(c[0] == 1.0);
    CHECK(c[1] == 0.0);
    CHECK(c[2] >= 0.0);
    CHECK(c[2] <= 1.0);
  }
}

TEST_CASE("permutation equivariance over HR point order") {
  PointCloud hr = tiny_textured_cloud(180, 22, 7);
  const std::int32_t v = 2;
  auto model = make_model<float>(8, 2, v, 13);
  auto vox = voxelize(hr, v);
  auto sample = prepare_sample<float>(vox.lr, hr, vox.mapping);
  auto pred = model_predict(model, sample);

  // Permute HR points and rerun; outputs must permute identically, bitwise.
  Rng rng(99);
  std::vector<std::size_t> perm(hr.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  PointCloud hr2;
  hr2.extent = hr.extent;
  hr2.coords.resize(hr.size());
  hr2.colors.emplace(hr.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    hr2.coords[i] = hr.coords[perm[i]];
    (*hr2.colors)[i] = (*hr.colors)[perm[i]];
  }
  auto mapping2 = recover_mapping(vox.lr, hr2, v);
  auto sample2 = prepare_sample<float>(vox.lr, hr2, mapping2);
  auto pred2 = model_predict(model, sample2);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    CHECK(pred2[i] == pred[perm[i]]);
  }
}

TEST_CASE("the same weights evaluate at any ratio >= 2") {
  auto model = make_model<float>(8, 1, 5, 21);
  for (std::int32_t v : {2, 3, 5, 7}) {
    PointCloud hr = tiny_textured_cloud(120, 8 * v, 100 + v);
    auto vox = voxelize(hr, v);
    auto sample = prepare_sample<float>(vox.lr, hr, vox.mapping);
    auto pred = model_predict(model, sample);
    CHECK(pred.size() == hr.size());
  }
}

TEST_CASE("end-to-end loss gradient matches finite differences on 20 points") {
  // 64-bit, full architecture at reduced width; relative error < 1e-3.
  Rng rng(55);
  PointCloud hr = testutil::random_cloud(20, 8, rng);
  const std::int32_t v = 2;
  auto model = make_model<double>(8, 2, v, 77);
  auto sample = prepare_sample<double>(hr, v);

  auto forward = [&] {
    Tensor<double> pred = model_forward(model, sample, /*training=*/true);
    return mse_loss(pred, Tensor<double>::from({sample.n_h, 3}, sample.gt));
  };

  auto params = named_parameters(model);
  auto buffers = named_buffers(model);
  // Freeze running stats around every forward so FD evaluations see
  // identical state.
  std::vector<std::vector<double>> saved;
  for (auto& [name, b] : buffers) saved.push_back(*b);
  auto restore = [&] {
    for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].second = saved[i];
  };

  restore();
  auto loss = forward();
  loss.backward();

  std::size_t checked = 0;
  for (auto& [name, p] : params) {
    REQUIRE(p.has_grad());
    auto analytic = p.grad();
    auto numeric = testutil::numeric_grad(
        p,
        [&] {
          restore();
          return forward().item();
        },
        1e-5);
    const double err = testutil::max_rel_error(analytic, numeric);
    INFO(name);
    CHECK(err < 1e-3);
    checked += p.numel();
  }
  CHECK(checked > 1000);  // every parameter of the full model was covered
}

TEST_CASE("training reduces the loss on a small corpus") {
  std::vector<PointCloud> objects;
  for (int i = 0; i < 2; ++i) {
    SyntheticRecipe rec;
    rec.shape = (i % 2) ? "box" : "sphere";
    rec.texture = (i % 2) ? "gradient" : "noise";
    rec.shape_scale = 0.5;
    rec.budget = 20000;
    rec.seed = 500 + i;
    objects.push_back(generate_synthetic(rec, 48));
  }
  TrainConfig cfg;
  cfg.ratio = 2;
  cfg.channels = 16;
  cfg.num_blocks = 2;
  cfg.epochs = 150;
  cfg.batch_size = 1;
  cfg.weight_decay = 0.0;
  cfg.decay_period = 60;
  cfg.seed = 9;
  auto result = train_cunet<float>(objects, {objects[0]}, cfg);
  REQUIRE(result.log.size() == 150);
  CHECK(result.log.back().train_mse < 0.5 * result.log.front().train_mse);
  CHECK(result.log.front().lr == doctest::Approx(1e-3));
  CHECK(result.log.back().lr == doctest::Approx(1e-5));
  CHECK(result.model.v_train == 2);

  SUBCASE("initial loss with zero final layer equals devox MSE") {
    auto model = make_model<float>(16, 2, 2, 31);
    zero_final_layer(model);
    auto sample = prepare_sample<float>(objects[0], 2);
    NoGradGuard ng;
    auto pred = model_forward(model, sample, /*training=*/false);
    auto loss =
        mse_loss(pred, Tensor<float>::from({sample.n_h, 3}, sample.gt));
    double devox_sq = 0.0;
    for (std::size_t i = 0; i < sample.gt.size(); ++i) {
      const double d = static_cast<double>(sample.coarse[i]) -
                       static_cast<double>(sample.gt[i]);
      devox_sq += d * d;
    }
    devox_sq /= static_cast<double>(sample.gt.size());
    CHECK(loss.item() == doctest::Approx(devox_sq).epsilon(1e-5));
    CHECK(loss.item() > 0.0);  // non-constant texture
  }
}

TEST_CASE("training rejects empty datasets and bad ratios") {
  TrainConfig cfg;
  CHECK_THROWS_AS(train_cunet<float>({}, {}, cfg), InsufficientDataError);
  cfg.ratio = 1;
  PointCloud hr = tiny_textured_cloud(50, 16, 1);
  CHECK_THROWS_AS(train_cunet<float>({hr}, {}, cfg), InvalidRatioError);
}

TEST_CASE("checkpoint round trip preserves every tensor and the metadata") {
  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "cunet_test_ckpt.bin").string();

  auto model = make_model<float>(16, 3, 5, 123);
  // Perturb buffers so defaults cannot mask a missing load.
  model.fe.stem_bn.running_mean[0] = 0.75f;
  model.fe.blocks[1].bn2.running_var[3] = 2.5f;
  save_checkpoint(model, path);

  auto info = peek_checkpoint(path);
  CHECK(info.scalar_bytes == 4);
  CHECK(info.channels == 16);
  CHECK(info.num_blocks == 3);
  CHECK(info.v_train == 5);

  auto loaded = load_checkpoint<float>(path);
  auto p0 = named_parameters(model);
  auto p1 = named_parameters(loaded);
  REQUIRE(p0.size() == p1.size());
  for (std::size_t i = 0; i < p0.size(); ++i) {
    CHECK(p0[i].first == p1[i].first);
    CHECK(p0[i].second.data() == p1[i].second.data());
  }
  CHECK(loaded.fe.stem_bn.running_mean[0] == 0.75f);
  CHECK(loaded.fe.blocks[1].bn2.running_var[3] == 2.5f);

  SUBCASE("loading at the wrong precision fails") {
    CHECK_THROWS_AS(load_checkpoint<double>(path), CheckpointError);
  }
  SUBCASE("corrupt magic fails") {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "NOTACKPT";
    out.close();
    CHECK_THROWS_AS(load_checkpoint<float>(path), CheckpointError);
  }
  fs::remove(path);
}
