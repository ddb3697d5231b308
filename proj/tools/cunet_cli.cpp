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

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cunet/cunet.hpp"

namespace {

struct GlobalOptions {
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0 = hardware concurrency
};

std::size_t resolve_threads(const GlobalOptions& g) {
  const std::size_t n =
      g.threads ? g.threads
                : std::max<std::size_t>(1, std::thread::hardware_concurrency());
  cunet::ThreadPool::instance().set_threads(n);
  return n;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Paper-style defaults per ratio: 2x -> K=32, B=16; 5x -> K=64, B=8;
// 10x and above -> K=64, B=4.
void apply_ratio_defaults(std::int32_t ratio, int& channels, int& batch) {
  if (channels == 0) channels = (ratio <= 2) ? 32 : 64;
  if (batch == 0) batch = (ratio <= 2) ? 16 : (ratio < 10 ? 8 : 4);
}

struct TrainArgs {
  std::string manifest;
  std::string out;
  std::string log;
  std::int32_t ratio = 5;
  int channels = 0;
  int blocks = 4;
  int epochs = 25;
  int batch = 0;
  double lr = 1e-3;
  double decay = 0.1;
  int decay_period = 10;
  double weight_decay = 1e-4;
  bool decoupled = false;
  std::string precision = "f32";
};

template <typename T>
void run_train(const TrainArgs& args, const GlobalOptions& g) {
  const auto manifest = cunet::load_manifest(args.manifest);
  const std::string dir =
      std::filesystem::path(args.manifest).parent_path().string();
  auto train_set = cunet::load_split(manifest, "train", dir);
  auto val_set = cunet::load_split(manifest, "val", dir);

  cunet::TrainConfig cfg;
  cfg.ratio = args.ratio;
  cfg.channels = args.channels;
  cfg.num_blocks = args.blocks;
  cfg.epochs = args.epochs;
  cfg.batch_size = args.batch;
  cfg.lr = args.lr;
  cfg.decay_factor = args.decay;
  cfg.decay_period = args.decay_period;
  cfg.weight_decay = args.weight_decay;
  cfg.decoupled_weight_decay = args.decoupled;
  cfg.seed = g.seed;

  std::cerr << "training " << args.ratio << "x model: K=" << cfg.channels
            << " B=" << cfg.batch_size << " epochs=" << cfg.epochs << " on "
            << train_set.size() << " objects\n";
  auto result = cunet::train_cunet<T>(train_set, val_set, cfg, &std::cerr);
  cunet::save_checkpoint(result.model, args.out);

  if (!args.log.empty()) {
    std::ofstream log(args.log, std::ios::trunc);
    if (!log) throw cunet::IoError("cannot write training log: " + args.log);
    for (const auto& e : result.log) {
      nlohmann::json j{{"epoch", e.epoch},
                       {"train_mse", e.train_mse},
                       {"val_psnr_db", e.val_psnr},
                       {"lr", e.lr}};
      log << j.dump() << "\n";
    }
  }
  std::cout << "checkpoint written to " << args.out << "\n";
}

struct LoadedModel {
  std::optional<cunet::CuNetModel<float>> f32;
  std::optional<cunet::CuNetModel<double>> f64;

  std::int32_t v_train() const {
    return f32 ? f32->v_train : f64->v_train;
  }
};

LoadedModel load_model(const std::string& path) {
  LoadedModel m;
  const auto info = cunet::peek_checkpoint(path);
  if (info.scalar_bytes == 4) {
    m.f32 = cunet::load_checkpoint<float>(path);
  } else {
    m.f64 = cunet::load_checkpoint<double>(path);
  }
  return m;
}

struct UpsampleArgs {
  std::string lr_path, hr_path, out_path;
  std::string method = "devox";
  std::string checkpoint;
  std::int32_t ratio = 2;
  std::size_t knn_k = 3;
  double waan_radius = 1.5;
};

void run_upsample(const UpsampleArgs& args) {
  auto pair = cunet::read_ply_pair(args.lr_path, args.hr_path, args.ratio);
  if (!pair.lr.has_colors()) {
    throw cunet::AttributeError("LR input has no colors");
  }
  std::vector<cunet::Rgb> colors;
  if (args.method == "devox") {
    colors = cunet::upsample_devox(pair.lr, pair.hr, args.ratio);
  } else if (args.method == "knn") {
    colors = cunet::upsample_knn(pair.lr, pair.hr, args.ratio, args.knn_k, &std::cerr);
  } else if (args.method == "waan") {
    colors = cunet::upsample_waan(pair.lr, pair.hr, args.ratio, args.waan_radius);
  } else if (args.method == "cunet") {
    if (args.checkpoint.empty()) {
      throw cunet::ConfigError("--checkpoint is required for method=cunet");
    }
    auto model = load_model(args.checkpoint);
    if (model.v_train() != args.ratio) {
      std::cerr << "warning: checkpoint trained for " << model.v_train()
                << "x evaluated at " << args.ratio << "x\n";
    }
    colors = model.f32
                 ? cunet::upsample_cunet(*model.f32, pair.lr, pair.hr, args.ratio)
                 : cunet::upsample_cunet(*model.f64, pair.lr, pair.hr, args.ratio);
  } else {
    throw cunet::ConfigError("unknown method: " + args.method);
  }
  cunet::PointCloud out = pair.hr;
  out.colors = std::move(colors);
  cunet::write_ply(out, args.out_path);
  std::cout << "wrote " << out.size() << " colored points to " << args.out_path
            << "\n";
}

struct EvalArgs {
  std::string manifest;
  std::string methods = "devox,knn,waan";
  std::string ratios = "5";
  std::string checkpoint;
  std::string split = "test";
  std::string report = "eval.csv";
  std::string summary;
  std::size_t knn_k = 3;
  double waan_radius = 1.5;
};

void run_eval(const EvalArgs& args, const GlobalOptions& g, const std::string& config_echo) {
  const std::size_t threads = resolve_threads(g);
  const auto manifest = cunet::load_manifest(args.manifest);
  const std::string dir =
      std::filesystem::path(args.manifest).parent_path().string();
  const auto entries = manifest.split(args.split);
  if (entries.empty()) {
    throw cunet::InsufficientDataError("split '" + args.split + "' is empty");
  }
  std::vector<cunet::PointCloud> clouds;
  std::vector<std::pair<std::string, const cunet::PointCloud*>> objects;
  clouds.reserve(entries.size());
  for (const auto* e : entries) {
    clouds.push_back(cunet::load_object(manifest, *e, dir));
    objects.emplace_back(e->id, &clouds.back());
  }

  const auto methods = split_list(args.methods);
  std::vector<std::int32_t> ratios;
  for (const auto& r : split_list(args.ratios)) ratios.push_back(std::stoi(r));

  LoadedModel model;
  const bool needs_model =
      std::find(methods.begin(), methods.end(), "cunet") != methods.end();
  if (needs_model) {
    if (args.checkpoint.empty()) {
      throw cunet::ConfigError("--checkpoint is required when evaluating cunet");
    }
    model = load_model(args.checkpoint);
  }

  cunet::EvalReport report;
  if (model.f64) {
    report = cunet::evaluate<double>(methods, objects, ratios, &*model.f64,
                                     &std::cerr, args.knn_k, args.waan_radius);
  } else {
    report = cunet::evaluate<float>(methods, objects, ratios,
                                    model.f32 ? &*model.f32 : nullptr, &std::cerr,
                                    args.knn_k, args.waan_radius);
  }
  cunet::write_csv(report, args.report);

  nlohmann::json summary;
  summary["threads"] = threads;
  summary["seed"] = g.seed;
  summary["split"] = args.split;
  summary["config"] = config_echo;
  auto& means = summary["mean_psnr_db"];
  for (const auto v : ratios) {
    for (const auto& m : methods) {
      means[std::to_string(v) + "x"][m] = report.mean_psnr(m, v);
      std::cout << m << " @" << v << "x: mean PSNR "
                << report.mean_psnr(m, v) << " dB\n";
    }
  }
  if (!args.summary.empty()) {
    std::ofstream out(args.summary, std::ios::trunc);
    if (!out) throw cunet::IoError("cannot write summary: " + args.summary);
    out << summary.dump(2) << "\n";
  }
  std::cout << "report written to " << args.report << "\n";
}

struct BenchArgs {
  std::string sizes = "50000,100000,200000,400000,800000";
  std::string method = "cunet";
  std::string checkpoint;
  std::string report = "bench.csv";
  std::string summary;
  std::int32_t ratio = 5;
  std::int32_t extent = 512;
  int repeats = 3;
  int warmup = 2;
  int channels = 64;
  int blocks = 4;
};

void run_bench(const BenchArgs& args, const GlobalOptions& g,
               const std::string& config_echo) {
  const std::size_t threads = resolve_threads(g);
  std::vector<std::size_t> sizes;
  for (const auto& s : split_list(args.sizes)) {
    sizes.push_back(static_cast<std::size_t>(std::stoull(s)));
  }

  // Checkpointed weights when given; a seeded fresh model otherwise. The
  // compute path is identical either way.
  std::optional<cunet::CuNetModel<float>> model;
  if (args.method == "cunet") {
    if (!args.checkpoint.empty()) {
      model = cunet::load_checkpoint<float>(args.checkpoint);
    } else {
      model = cunet::make_model<float>(args.channels, args.blocks, args.ratio,
                                       g.seed);
    }
  }

  // Clouds are generated up front; only the upsample itself is timed.
  std::vector<cunet::PointCloud> lr_clouds, hr_clouds;
  std::cerr << "generating " << sizes.size() << " benchmark clouds\n";
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    auto recipe = cunet::recipe_for_surface_points(
        sizes[i], args.extent, cunet::splitmix64(g.seed ^ (i + 1)));
    cunet::PointCloud hr = cunet::generate_synthetic(recipe, args.extent);
    auto vox = cunet::voxelize(hr, args.ratio);  // LR keeps the mean colors
    hr.colors.reset();                           // HR side is coordinates only
    lr_clouds.push_back(std::move(vox.lr));
    hr_clouds.push_back(std::move(hr));
  }

  auto runner = [&](std::size_t i) {
    std::vector<cunet::Rgb> colors;
    if (args.method == "devox") {
      colors = cunet::upsample_devox(lr_clouds[i], hr_clouds[i], args.ratio);
    } else if (args.method == "knn") {
      colors = cunet::upsample_knn(lr_clouds[i], hr_clouds[i], args.ratio);
    } else if (args.method == "waan") {
      colors = cunet::upsample_waan(lr_clouds[i], hr_clouds[i], args.ratio);
    } else if (args.method == "cunet") {
      colors = cunet::upsample_cunet(*model, lr_clouds[i], hr_clouds[i], args.ratio);
    } else {
      throw cunet::ConfigError("unknown method: " + args.method);
    }
  };
  auto measured = [&](std::size_t i) { return hr_clouds[i].size(); };

  std::cerr << "timing " << args.method << " over " << sizes.size()
            << " sizes, " << args.repeats << " repeats\n";
  auto report = cunet::bench_scaling(sizes, runner, measured, args.repeats,
                                     args.warmup);
  report.threads = threads;
  cunet::write_bench_csv(report, args.report);

  nlohmann::json summary;
  summary["method"] = args.method;
  summary["ratio"] = args.ratio;
  summary["threads"] = threads;
  summary["slope_s_per_point"] = report.fit.slope;
  summary["intercept_s"] = report.fit.intercept;
  summary["r_squared"] = report.fit.r_squared;
  summary["config"] = config_echo;
  if (!args.summary.empty()) {
    std::ofstream out(args.summary, std::ios::trunc);
    if (!out) throw cunet::IoError("cannot write summary: " + args.summary);
    out << summary.dump(2) << "\n";
  }
  std::cout << "R^2 = " << report.fit.r_squared << ", slope = "
            << report.fit.slope << " s/point\n";
  std::cout << "report written to " << args.report << "\n";
}

struct GenArgs {
  std::string out;
  std::size_t count = 200;
  std::int32_t extent = 250;
  std::size_t budget = 50000;
};

void run_gen(const GenArgs& args, const GlobalOptions& g) {
  auto manifest = cunet::make_default_manifest(args.count, args.extent, g.seed,
                                               args.budget);
  cunet::generate_dataset(manifest, args.out);
  std::size_t total = 0;
  for (const auto& e : manifest.objects) {
    total += cunet::generate_synthetic(e.recipe, manifest.extent).size();
  }
  std::cout << "generated " << manifest.objects.size() << " objects ("
            << total << " HR points) under " << args.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cunet: point cloud color upsampling toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from an INI/TOML config file");

  GlobalOptions global;
  app.add_option("--seed", global.seed, "Seed controlling all randomness");
  app.add_option("--threads", global.threads,
                 "Worker threads (default: hardware concurrency)");

  GenArgs gen;
  auto* cmd_gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  cmd_gen->add_option("--out", gen.out, "Output dataset directory")->required();
  cmd_gen->add_option("--count", gen.count, "Number of objects");
  cmd_gen->add_option("--extent", gen.extent, "HR grid extent S");
  cmd_gen->add_option("--budget", gen.budget, "Surface samples per object");

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train", "Train a color upsampling model");
  cmd_train->add_option("--manifest", train.manifest, "Dataset manifest")->required();
  cmd_train->add_option("--out", train.out, "Checkpoint output path")->required();
  cmd_train->add_option("--log", train.log, "JSONL training log path");
  cmd_train->add_option("--ratio", train.ratio, "Upsampling ratio v");
  cmd_train->add_option("--channels", train.channels,
                        "Feature channels K (default 32 at 2x, 64 otherwise)");
  cmd_train->add_option("--blocks", train.blocks, "Residual blocks");
  cmd_train->add_option("--epochs", train.epochs, "Training epochs");
  cmd_train->add_option("--batch", train.batch,
                        "Objects per batch (default 16/8/4 by ratio)");
  cmd_train->add_option("--lr", train.lr, "Learning rate");
  cmd_train->add_option("--decay", train.decay, "LR decay factor");
  cmd_train->add_option("--decay-period", train.decay_period,
                        "Epochs between LR decays");
  cmd_train->add_option("--weight-decay", train.weight_decay, "L2 coefficient");
  cmd_train->add_flag("--decoupled-wd", train.decoupled,
                      "Apply weight decay decoupled from the Adam moments");
  cmd_train->add_option("--precision", train.precision, "f32 or f64");

  UpsampleArgs upsample;
  auto* cmd_upsample = app.add_subcommand("upsample", "Colorize an HR cloud");
  cmd_upsample->add_option("--lr", upsample.lr_path, "LR PLY with colors")->required();
  cmd_upsample->add_option("--hr", upsample.hr_path, "HR PLY with coordinates")->required();
  cmd_upsample->add_option("--out", upsample.out_path, "Output PLY")->required();
  cmd_upsample->add_option("--method", upsample.method, "devox | knn | waan | cunet");
  cmd_upsample->add_option("--ratio", upsample.ratio, "Upsampling ratio v");
  cmd_upsample->add_option("--checkpoint", upsample.checkpoint, "Model checkpoint");
  cmd_upsample->add_option("--knn-k", upsample.knn_k, "Neighbors for knn");
  cmd_upsample->add_option("--waan-radius", upsample.waan_radius,
                           "Ball radius in LR voxels for waan");

  EvalArgs eval;
  auto* cmd_eval = app.add_subcommand("eval", "Evaluate methods on a dataset");
  cmd_eval->add_option("--manifest", eval.manifest, "Dataset manifest")->required();
  cmd_eval->add_option("--methods", eval.methods, "Comma list of methods");
  cmd_eval->add_option("--ratios", eval.ratios, "Comma list of test ratios");
  cmd_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint for cunet");
  cmd_eval->add_option("--split", eval.split, "train | val | test");
  cmd_eval->add_option("--report", eval.report, "CSV output path");
  cmd_eval->add_option("--summary", eval.summary, "JSON summary path");
  cmd_eval->add_option("--knn-k", eval.knn_k, "Neighbors for knn");
  cmd_eval->add_option("--waan-radius", eval.waan_radius,
                       "Ball radius in LR voxels for waan");

  BenchArgs bench;
  auto* cmd_bench = app.add_subcommand("bench", "Latency scaling benchmark");
  cmd_bench->add_option("--sizes", bench.sizes, "Comma list of HR point counts");
  cmd_bench->add_option("--method", bench.method, "devox | knn | waan | cunet");
  cmd_bench->add_option("--checkpoint", bench.checkpoint, "Checkpoint for cunet");
  cmd_bench->add_option("--ratio", bench.ratio, "Upsampling ratio v");
  cmd_bench->add_option("--extent", bench.extent, "Benchmark grid extent");
  cmd_bench->add_option("--repeats", bench.repeats, "Timed repeats per size");
  cmd_bench->add_option("--warmup", bench.warmup, "Discarded warm-up runs");
  cmd_bench->add_option("--channels", bench.channels, "K for fresh models");
  cmd_bench->add_option("--blocks", bench.blocks, "Residual blocks for fresh models");
  cmd_bench->add_option("--report", bench.report, "CSV output path");
  cmd_bench->add_option("--summary", bench.summary, "JSON summary path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const std::string config_echo = app.config_to_str(true, false);
    if (cmd_gen->parsed()) {
      resolve_threads(global);
      run_gen(gen, global);
    } else if (cmd_train->parsed()) {
      resolve_threads(global);
      apply_ratio_defaults(train.ratio, train.channels, train.batch);
      if (train.precision == "f32") {
        run_train<float>(train, global);
      } else if (train.precision == "f64") {
        run_train<double>(train, global);
      } else {
        throw cunet::ConfigError("precision must be f32 or f64");
      }
    } else if (cmd_upsample->parsed()) {
      resolve_threads(global);
      run_upsample(upsample);
    } else if (cmd_eval->parsed()) {
      run_eval(eval, global, config_echo);
    } else if (cmd_bench->parsed()) {
      run_bench(bench, global, config_echo);
    }
  } catch (const cunet::CunetError& e) {
    std::cerr << "error: [" << e.category() << "] " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: [internal] " << e.what() << "\n";
    return 1;
  }
  return 0;
}
