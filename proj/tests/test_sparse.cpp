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

#include <algorithm>
#include <set>

#include "cunet/regression.hpp"
#include "cunet/sparse.hpp"
#include "test_util.hpp"

using namespace cunet;

namespace {

std::vector<Coord4> random_coords(std::size_t count, std::int32_t extent, Rng& rng,
                                  std::int32_t batches = 1) {
  std::set<std::array<std::int32_t, 4>> seen;
  std::vector<Coord4> out;
  while (out.size() < count) {
    Coord4 c{static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(extent))),
             static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(extent))),
             static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(extent))),
             static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(batches)))};
    if (seen.insert({c.x, c.y, c.z, c.batch}).second) out.push_back(c);
  }
  return out;
}

template <typename T>
SparseConv<T> identity_conv(std::size_t channels) {
  SparseConv<T> conv;
  conv.kernel_size = 3;
  conv.weights.resize(27);
  for (std::size_t o = 0; o < 27; ++o) {
    conv.weights[o] = Tensor<T>::zeros({channels, channels}, true);
  }
  auto& center = conv.weights[13].mutable_data();
  for (std::size_t c = 0; c < channels; ++c) center[c * channels + c] = T(1);
  return conv;
}

}  // namespace

TEST_CASE("coordinate index: hits, misses, duplicates") {
  SUBCASE("single point") {
    CoordSet geom({Coord4{1, 2, 3, 0}});
    CHECK(geom.index.find({1, 2, 3, 0}) == 0);
    CHECK(geom.index.find({1, 2, 4, 0}) == -1);
  }
  SUBCASE("batch separation: same xyz, different batch") {
    CoordSet geom({Coord4{1, 2, 3, 0}, Coord4{1, 2, 3, 1}});
    CHECK(geom.index.find({1, 2, 3, 0}) == 0);
    CHECK(geom.index.find({1, 2, 3, 1}) == 1);
    CHECK(geom.index.find({1, 2, 3, 2}) == -1);
  }
  SUBCASE("duplicates are rejected") {
    CHECK_THROWS_AS(CoordSet({Coord4{0, 0, 0, 0}, Coord4{0, 0, 0, 0}}),
                    DuplicateCoordinateError);
  }
  SUBCASE("100k random coords: all present hit, absent keys miss") {
    Rng rng(17);
    auto coords = random_coords(100000, 1 << 20, rng);
    CoordSet geom(coords);
    // Linear-scan oracle over a 1k subsample.
    for (std::size_t t = 0; t < 1000; ++t) {
      const std::size_t pick = rng.below(coords.size());
      const std::int32_t row = geom.index.find(coords[pick]);
      REQUIRE(row >= 0);
      std::int32_t scan = -1;
      for (std::size_t i = 0; i < coords.size(); ++i) {
        if (coords[i] == coords[pick]) {
          scan = static_cast<std::int32_t>(i);
          break;
        }
      }
      CHECK(row == scan);
    }
    std::set<std::array<std::int32_t, 4>> present;
    for (const auto& c : coords) present.insert({c.x, c.y, c.z, c.batch});
    std::size_t misses = 0;
    for (std::size_t t = 0; t < 100000; ++t) {
      Coord4 c{static_cast<std::int32_t>(rng.below(1 << 20)),
               static_cast<std::int32_t>(rng.below(1 << 20)),
               static_cast<std::int32_t>(rng.below(1 << 20)), 0};
      if (present.count({c.x, c.y, c.z, c.batch})) continue;
      ++misses;
      CHECK(geom.index.find(c) == -1);
    }
    CHECK(misses > 99000);  // collisions with present keys are vanishingly rare
  }
}

TEST_CASE("kernel map basics") {
  SUBCASE("isolated point has only the zero-offset pair") {
    CoordSet geom({Coord4{5, 5, 5, 0}});
    auto km = build_kernel_map(geom, 3);
    CHECK(km.total_pairs() == 1);
    CHECK(km.offsets[13].size() == 1);
    CHECK((*km.offsets[13].in)[0] == 0);
    CHECK((*km.offsets[13].out)[0] == 0);
  }
  SUBCASE("two x-adjacent points produce 2 self pairs and 2 cross pairs") {
    CoordSet geom({Coord4{0, 0, 0, 0}, Coord4{1, 0, 0, 0}});
    auto km = build_kernel_map(geom, 3);
    CHECK(km.total_pairs() == 4);
    CHECK(km.offsets[13].size() == 2);
    // offset (+1,0,0) has index 2*9 + 1*3 + 1 = 22, (-1,0,0) has index 4.
    CHECK(km.offsets[22].size() == 1);
    CHECK(km.offsets[4].size() == 1);
  }
  SUBCASE("even kernel size is rejected") {
    CoordSet geom({Coord4{0, 0, 0, 0}});
    CHECK_THROWS_AS(build_kernel_map(geom, 2), InvalidKernelError);
    CHECK_THROWS_AS(build_kernel_map(geom, 0), InvalidKernelError);
  }
}

TEST_CASE("kernel map equals the all-pairs oracle on random clouds") {
  Rng rng(23);
  for (int trial = 0; trial < 3; ++trial) {
    const std::size_t n = 500;
    auto coords = random_coords(n, 12, rng, /*batches=*/2);
    CoordSet geom(coords);
    auto km = build_kernel_map(geom, 3);
    auto oracle = testutil::brute_force_kernel_map(coords, 3);

    for (std::size_t o = 0; o < 27; ++o) {
      std::vector<std::pair<std::int32_t, std::int32_t>> ours;
      for (std::size_t p = 0; p < km.offsets[o].size(); ++p) {
        ours.emplace_back((*km.offsets[o].in)[p], (*km.offsets[o].out)[p]);
      }
      std::sort(ours.begin(), ours.end());
      CHECK(ours == oracle[o]);
    }
  }
}

TEST_CASE("kernel map pair count grows linearly for fixed-density clouds") {
  // Constant density (~25% fill): extent scales with cbrt(n), so pairs/n
  // stays flat.
  Rng rng(31);
  std::vector<double> xs, ys;
  for (std::size_t n : {1000, 2000, 4000, 8000}) {
    const auto extent =
        static_cast<std::int32_t>(std::lround(16.0 * std::cbrt(static_cast<double>(n) / 1000.0)));
    auto coords = random_coords(n, extent, rng);
    CoordSet geom(coords);
    xs.push_back(static_cast<double>(n));
    ys.push_back(static_cast<double>(build_kernel_map(geom, 3).total_pairs()));
  }
  const auto fit = fit_linear(xs, ys);
  CHECK(fit.r_squared > 0.98);
}

TEST_CASE("sparse_conv identity kernel reproduces the input") {
  Rng rng(40);
  auto coords = random_coords(100, 10, rng);
  auto features = testutil::random_tensor<double>({100, 6}, rng);
  auto st = make_sparse_tensor(coords, features);
  auto km = build_kernel_map(st.geometry, 3);
  auto out = sparse_conv(st, identity_conv<double>(6), km);
  CHECK(out.features.data() == features.data());
  CHECK(out.geometry == st.geometry);
}

TEST_CASE("sparse_conv on an isolated point applies only the center weight") {
  Rng rng(41);
  auto features = testutil::random_tensor<double>({1, 4}, rng);
  auto st = make_sparse_tensor({Coord4{3, 3, 3, 0}}, features);
  auto km = build_kernel_map(st.geometry, 3);
  SparseConv<double> conv(4, 5, rng);
  auto out = sparse_conv(st, conv, km);
  auto expected = matmul(features, conv.weights[13]);
  for (std::size_t i = 0; i < out.features.numel(); ++i) {
    CHECK(out.features.data()[i] ==
          doctest::Approx(expected.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("sparse_conv matches the dense convolution oracle") {
  Rng rng(51);
  for (int trial = 0; trial < 3; ++trial) {
    const std::size_t n = 200;
    auto coords = random_coords(n, 9, rng, /*batches=*/2);
    auto features = testutil::random_tensor<double>({n, 3}, rng);
    SparseConv<double> conv(3, 4, rng);
    auto st = make_sparse_tensor(coords, features);
    auto km = build_kernel_map(st.geometry, 3);
    auto out = sparse_conv(st, conv, km);

    std::vector<std::vector<double>> dense_features(n, std::vector<double>(3));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < 3; ++c) {
        dense_features[i][c] = features.data()[i * 3 + c];
      }
    }
    auto oracle =
        testutil::dense_conv_oracle(coords, dense_features, conv.weights, 3);
    for (std::size_t q = 0; q < n; ++q) {
      for (std::size_t c = 0; c < 4; ++c) {
        CHECK(out.features.data()[q * 4 + c] ==
              doctest::Approx(oracle[q][c]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("sparse_conv is linear in its features") {
  Rng rng(61);
  auto coords = random_coords(150, 8, rng);
  auto f = testutil::random_tensor<double>({150, 5}, rng);
  auto g = testutil::random_tensor<double>({150, 5}, rng);
  SparseConv<double> conv(5, 5, rng);
  auto km = build_kernel_map(std::make_shared<CoordSet>(coords), 3);

  const double alpha = 0.7, beta = -1.3;
  auto mix = Tensor<double>::zeros({150, 5});
  for (std::size_t i = 0; i < mix.numel(); ++i) {
    mix.mutable_data()[i] = alpha * f.data()[i] + beta * g.data()[i];
  }
  auto geom = std::make_shared<CoordSet>(coords);
  auto out_mix = sparse_conv(SparseTensor<double>{geom, mix}, conv, km);
  auto out_f = sparse_conv(SparseTensor<double>{geom, f}, conv, km);
  auto out_g = sparse_conv(SparseTensor<double>{geom, g}, conv, km);
  for (std::size_t i = 0; i < out_mix.features.numel(); ++i) {
    const double expect = alpha * out_f.features.data()[i] + beta * out_g.features.data()[i];
    CHECK(out_mix.features.data()[i] == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("channel mismatch raises a shape error") {
  Rng rng(3);
  auto st = make_sparse_tensor({Coord4{0, 0, 0, 0}},
                               Tensor<double>::zeros({1, 4}));
  auto km = build_kernel_map(st.geometry, 3);
  SparseConv<double> conv(3, 5, rng);
  CHECK_THROWS_AS(sparse_conv(st, conv, km), ShapeError);
}

TEST_CASE("batch isolation: a merged batch equals separate processing") {
  Rng rng(71);
  auto coords_a = random_coords(120, 8, rng);
  auto coords_b = random_coords(90, 8, rng);
  auto fa = testutil::random_tensor<double>({120, 4}, rng);
  auto fb = testutil::random_tensor<double>({90, 4}, rng);
  SparseConv<double> conv(4, 4, rng);

  auto run = [&](std::vector<Coord4> coords, const Tensor<double>& f) {
    auto st = make_sparse_tensor(std::move(coords), f);
    auto km = build_kernel_map(st.geometry, 3);
    return sparse_conv(st, conv, km).features;
  };
  auto out_a = run(coords_a, fa);
  auto out_b = run(coords_b, fb);

  std::vector<Coord4> merged = coords_a;
  for (auto c : coords_b) {
    c.batch = 1;
    merged.push_back(c);
  }
  auto fm = Tensor<double>::zeros({210, 4});
  std::copy(fa.data().begin(), fa.data().end(), fm.mutable_data().begin());
  std::copy(fb.data().begin(), fb.data().end(), fm.mutable_data().begin() + 480);
  auto out_m = run(merged, fm);

  for (std::size_t i = 0; i < out_a.numel(); ++i) {
    CHECK(out_m.data()[i] == doctest::Approx(out_a.data()[i]).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < out_b.numel(); ++i) {
    CHECK(out_m.data()[480 + i] == doctest::Approx(out_b.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("residual block: zero conv weights reduce to ReLU of the input") {
  Rng rng(81);
  auto coords = random_coords(60, 6, rng);
  auto features = testutil::random_tensor<double>({60, 4}, rng);
  auto st = make_sparse_tensor(coords, features);
  auto km = build_kernel_map(st.geometry, 3);

  ResidualBlock<double> block(4, rng);
  for (auto& w : block.conv1.weights) {
    std::fill(w.mutable_data().begin(), w.mutable_data().end(), 0.0);
  }
  for (auto& w : block.conv2.weights) {
    std::fill(w.mutable_data().begin(), w.mutable_data().end(), 0.0);
  }
  auto out = residual_block(st, block, km, /*training=*/false);
  // Both convolutions emit zeros; batch norm maps an all-zero input to its
  // shift parameter (beta = 0), so only ReLU(skip) remains.
  for (std::size_t i = 0; i < features.numel(); ++i) {
    const double expect = std::max(0.0, features.data()[i]);
    CHECK(out.features.data()[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(out.geometry == st.geometry);
}

TEST_CASE("residual block gradients match finite differences") {
  Rng rng(91);
  const std::size_t n = 30;
  auto coords = random_coords(n, 5, rng);
  auto features = testutil::random_tensor<double>({n, 3}, rng, true);
  auto geom = std::make_shared<CoordSet>(coords);
  auto km = build_kernel_map(geom, 3);
  ResidualBlock<double> block(3, rng);
  auto target = testutil::random_tensor<double>({n, 3}, rng);

  auto forward = [&] {
    SparseTensor<double> st{geom, features};
    return mse_loss(residual_block(st, block, km, /*training=*/false).features,
                    target);
  };
  auto loss = forward();
  loss.backward();

  std::vector<Tensor<double>> params{features, block.bn1.gamma, block.bn1.beta,
                                     block.conv1.weights[13],
                                     block.conv2.weights[4]};
  for (auto& p : params) {
    REQUIRE(p.has_grad());
    auto analytic = p.grad();
    auto numeric =
        testutil::numeric_grad(p, [&] { return forward().item(); }, 1e-5);
    CHECK(testutil::max_rel_error(analytic, numeric) < 1e-4);
  }
}

TEST_CASE("feature extractor keeps coordinates and lifts channels") {
  Rng rng(101);
  const std::size_t n = 50;
  auto coords = random_coords(n, 6, rng);
  auto st = make_sparse_tensor(coords, testutil::random_tensor<double>({n, 3}, rng));
  auto km = build_kernel_map(st.geometry, 3);

  SUBCASE("K=32 shape contract") {
    FeatureExtractor<double> fe(3, 32, 4, rng);
    auto out = feature_extractor(st, fe, km, /*training=*/false);
    CHECK(out.features.rows() == n);
    CHECK(out.features.cols() == 32);
    CHECK(out.geometry == st.geometry);
  }
  SUBCASE("K=64 shape contract") {
    FeatureExtractor<double> fe(3, 64, 4, rng);
    auto out = feature_extractor(st, fe, km, /*training=*/false);
    CHECK(out.features.cols() == 64);
  }
  SUBCASE("wrong input channels raise a shape error") {
    FeatureExtractor<double> fe(3, 16, 2, rng);
    auto bad = make_sparse_tensor(coords, testutil::random_tensor<double>({n, 4}, rng));
    CHECK_THROWS_AS(feature_extractor(bad, fe, km, false), ShapeError);
  }
}
