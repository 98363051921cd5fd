// Copyright 2026 The sslnas Authors.
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

#ifndef SSLNAS_HARNESS_HPP_
#define SSLNAS_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sslnas/dataset.hpp"
#include "sslnas/search_space.hpp"
#include "sslnas/trainer.hpp"

namespace sslnas {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

enum class DatasetKind { Folder, Synthetic };

struct SyntheticParams {
  int classes = 10;
  int samples_per_class = 100;
  int image_size = 32;
  std::uint64_t seed = 0;
  // Per-sample pixel noise (std dev, in [0, 1] intensity units).
  double noise = 0.04;
};

struct DatasetDescriptor {
  std::string name;
  DatasetKind kind = DatasetKind::Synthetic;
  std::filesystem::path root;  // Folder
  int image_size = 32;         // Folder: decoded images are resized to this
  SyntheticParams synthetic;   // Synthetic
  double train_fraction = 0.8;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
};

// Throws ConfigError on invalid fields (splits must sum to 1).
void validate(const DatasetDescriptor& desc);

// Synthetic generator, version 1. Class c owns a Gabor-like grating
// (orientation, frequency, two colours) and a coloured shape (disc, square,
// triangle, ring or cross); per-sample draws vary phase, shape placement and
// scale, brightness and noise. Pixels are quantized to 8 bits so the output is
// byte-stable. Sample ids are "<class>/<index>".
inline constexpr int kSyntheticGeneratorVersion = 1;
Dataset generate_synthetic(const SyntheticParams& params, const std::string& name = "synthetic");

// One subdirectory per class (sorted by name); every decodable image inside
// is loaded and resized to image_size x image_size. Unreadable files are
// skipped with a warning and counted in `skipped`.
Dataset load_folder(const std::filesystem::path& root, int image_size, int* skipped = nullptr);

struct DatasetSplits {
  Dataset train;
  Dataset test;
  int skipped = 0;
};

// Split assignment is a seeded hash of the sample id, so it does not depend
// on load order or on the other samples.
DatasetSplits split_dataset(const Dataset& data, double train_fraction, std::uint64_t seed);

DatasetSplits load_dataset(const DatasetDescriptor& desc);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

enum class Command { Search, Pretrain, LinearEval, Derive, Study, Report, Supervised };
std::string command_name(Command c);
Command parse_command(const std::string& name);

struct StudySpec {
  Family family = Family::MobileNetLike;
  int num_models = 8;
  ResNetSamplerConfig resnet;
  MobileNetSamplerConfig mobilenet;
  double searched_width = 0.25;
  // Width multiplier applied on top of every sampled variant (desk scale).
  double width_scale = 1.0;
};

struct ExperimentManifest {
  Command command = Command::Search;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs";
  double space_width = 0.25;
  std::filesystem::path arch_path;        // pretrain, linear-eval, supervised
  std::filesystem::path checkpoint_path;  // derive, linear-eval, resume
  std::filesystem::path results_path;     // report
  std::vector<DatasetDescriptor> datasets;
  TrainConfig train;
  StudySpec study;
  bool resume = false;  // continue from checkpoint_path (search, pretrain, supervised)
};

// Reads the manifest JSON; relative paths resolve against `base_dir`.
// Throws ConfigError (field named) on any problem. The seed is mandatory.
ExperimentManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentManifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const ExperimentManifest& m);

struct RunRecord {
  std::filesystem::path run_dir;
  Command command = Command::Search;
  std::map<std::string, double> metrics;
  std::vector<std::filesystem::path> artifacts;
  double wall_seconds = 0.0;
};

// Creates a fresh run directory under output_dir and dispatches. Stage
// failures are written to run_dir/error.json before being rethrown.
RunRecord run_experiment(const ExperimentManifest& manifest);

// Creates output_dir/<command>-<UTC timestamp>[-k]; never reuses a directory.
std::filesystem::path make_run_dir(const std::filesystem::path& output_dir, Command command);

}  // namespace sslnas

#endif  // SSLNAS_HARNESS_HPP_
