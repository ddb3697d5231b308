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

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cunet/common.hpp"
#include "cunet/ply.hpp"
#include "cunet/point_cloud.hpp"
#include "cunet/rng.hpp"
#include "cunet/synthetic.hpp"
#include "cunet/voxel.hpp"

namespace cunet {

// Dataset manifest: the grid extent, the corpus seed and one entry per
// object carrying its split tag and generator recipe. Objects materialized
// to disk reference a PLY file; entries without a file are regenerated from
// the recipe, which is deterministic, so both paths yield the same cloud.
struct ManifestEntry {
  std::string id;
  std::string split;  // train | val | test
  std::string file;   // PLY path relative to the manifest, may be empty
  SyntheticRecipe recipe;
};

struct DatasetManifest {
  std::int32_t extent = 250;
  std::uint64_t seed = 1;
  std::vector<ManifestEntry> objects;

  std::vector<const ManifestEntry*> split(const std::string& tag) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : objects) {
      if (e.split == tag) out.push_back(&e);
    }
    return out;
  }
};

// Default corpus: shapes and textures cycled round-robin, sizes and texture
// scales drawn from the corpus seed, splits assigned 80/10/10 over a seeded
// shuffle.
inline DatasetManifest make_default_manifest(std::size_t count, std::int32_t extent,
                                             std::uint64_t seed,
                                             std::size_t budget = 50000) {
  if (count == 0) throw ConfigError("dataset needs at least one object");
  static const char* kShapes[] = {"sphere", "box", "torus", "blended"};
  static const char* kTextures[] = {"checker", "gradient", "noise", "stripes"};

  DatasetManifest manifest;
  manifest.extent = extent;
  manifest.seed = seed;
  Rng rng = Rng(seed).fork(0x636f72707573ULL);  // "corpus"

  manifest.objects.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& e = manifest.objects[i];
    char id[16];
    std::snprintf(id, sizeof(id), "obj%04zu", i);
    e.id = id;
    e.recipe.shape = kShapes[i % 4];
    e.recipe.texture = kTextures[(i / 4) % 4];
    e.recipe.shape_scale = rng.uniform(0.14, 0.20);
    // A narrow feature-size band keeps the corpus statistically coherent,
    // the way a captured dataset of one object class is.
    e.recipe.texture_scale = rng.uniform(10.0, 13.0);
    e.recipe.budget = budget;
    e.recipe.seed = splitmix64(seed ^ splitmix64(i + 1));
  }

  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  rng.shuffle(order);
  const std::size_t n_train = (count * 8) / 10;
  const std::size_t n_val = count / 10;
  for (std::size_t rank = 0; rank < count; ++rank) {
    auto& e = manifest.objects[order[rank]];
    if (rank < n_train) {
      e.split = "train";
    } else if (rank < n_train + n_val) {
      e.split = "val";
    } else {
      e.split = "test";
    }
  }
  return manifest;
}

inline nlohmann::json to_json(const SyntheticRecipe& r) {
  return nlohmann::json{{"shape", r.shape},
                        {"texture", r.texture},
                        {"texture_scale", r.texture_scale},
                        {"shape_scale", r.shape_scale},
                        {"budget", r.budget},
                        {"seed", r.seed}};
}

inline SyntheticRecipe recipe_from_json(const nlohmann::json& j) {
  SyntheticRecipe r;
  r.shape = j.at("shape").get<std::string>();
  r.texture = j.at("texture").get<std::string>();
  r.texture_scale = j.at("texture_scale").get<double>();
  r.shape_scale = j.at("shape_scale").get<double>();
  r.budget = j.at("budget").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

inline void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["extent"] = manifest.extent;
  j["seed"] = manifest.seed;
  auto& objects = j["objects"] = nlohmann::json::array();
  for (const auto& e : manifest.objects) {
    objects.push_back(nlohmann::json{{"id", e.id},
                                     {"split", e.split},
                                     {"file", e.file},
                                     {"recipe", to_json(e.recipe)}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + path + ": " + e.what());
  }
  DatasetManifest manifest;
  try {
    manifest.extent = j.at("extent").get<std::int32_t>();
    manifest.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& o : j.at("objects")) {
      ManifestEntry e;
      e.id = o.at("id").get<std::string>();
      e.split = o.at("split").get<std::string>();
      e.file = o.value("file", std::string());
      e.recipe = recipe_from_json(o.at("recipe"));
      manifest.objects.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + path + ": " + e.what());
  }
  return manifest;
}

// Loads one object, preferring the materialized PLY next to the manifest and
// regenerating from the recipe otherwise.
inline PointCloud load_object(const DatasetManifest& manifest,
                              const ManifestEntry& entry,
                              const std::string& manifest_dir) {
  if (!entry.file.empty()) {
    const auto path = std::filesystem::path(manifest_dir) / entry.file;
    if (std::filesystem::exists(path)) {
      return read_ply(path.string(), /*require_colors=*/true);
    }
  }
  return generate_synthetic(entry.recipe, manifest.extent);
}

inline std::vector<PointCloud> load_split(const DatasetManifest& manifest,
                                          const std::string& tag,
                                          const std::string& manifest_dir) {
  std::vector<PointCloud> out;
  for (const auto* e : manifest.split(tag)) {
    out.push_back(load_object(manifest, *e, manifest_dir));
  }
  return out;
}

// Materializes every object as PLY under dir/ply and writes dir/manifest.json.
inline void generate_dataset(DatasetManifest& manifest, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "ply");
  for (auto& e : manifest.objects) {
    const PointCloud cloud = generate_synthetic(e.recipe, manifest.extent);
    e.file = "ply/" + e.id + ".ply";
    write_ply(cloud, (fs::path(dir) / e.file).string());
  }
  save_manifest(manifest, (fs::path(dir) / "manifest.json").string());
}

// Voxelization pair with the task geometry recorded alongside.
struct PairData {
  PointCloud lr;
  LrHrMapping mapping;
  std::int32_t extent_hr = 0;
  std::int32_t v = 0;
  std::size_t n_l = 0;
  std::size_t n_h = 0;
};

inline PairData build_pairs(const PointCloud& hr, std::int32_t v) {
  auto vox = voxelize(hr, v);
  PairData pair;
  pair.extent_hr = hr.extent;
  pair.v = v;
  pair.n_l = vox.lr.size();
  pair.n_h = hr.size();
  pair.lr = std::move(vox.lr);
  pair.mapping = std::move(vox.mapping);
  return pair;
}

}  // namespace cunet
