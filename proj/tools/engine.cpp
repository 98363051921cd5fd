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

// engine <command> --manifest path [--seed n] [--out dir]
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <cstdio>
#include <iostream>
#include <optional>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "sslnas/error.hpp"
#include "sslnas/harness.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kRuntimeExit = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised architecture search engine"};
  std::string command, manifest_path, out_dir;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  app.add_option("command", command, "search, pretrain, linear-eval, derive, study, report or supervised")
      ->required();
  app.add_option("--manifest", manifest_path, "experiment manifest (JSON)")->required();
  app.add_option("--seed", seed, "override the manifest seed");
  app.add_option("--out", out_dir, "override the output directory");
  app.add_flag("-v,--verbose", verbose, "debug logging");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigExit;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  sslnas::ExperimentManifest manifest;
  try {
    const sslnas::Command requested = sslnas::parse_command(command);
    manifest = sslnas::load_manifest(manifest_path);
    if (manifest.command != requested)
      throw sslnas::ConfigError("manifest command '" + sslnas::command_name(manifest.command) +
                                "' does not match the requested '" + command + "'");
    if (seed) {
      manifest.seed = *seed;
      manifest.train.seed = *seed;
    }
    if (!out_dir.empty()) manifest.output_dir = out_dir;
  } catch (const sslnas::Error& e) {
    std::cerr << "engine: " << e.what() << "\n";
    return kConfigExit;
  }

  try {
    const sslnas::RunRecord rec = sslnas::run_experiment(manifest);
    std::cout << "run directory: " << rec.run_dir.string() << "\n";
    for (const auto& [name, value] : rec.metrics) std::printf("%s = %.6g\n", name.c_str(), value);
    std::printf("wall time: %.1f s\n", rec.wall_seconds);
    return 0;
  } catch (const sslnas::ConfigError& e) {
    std::cerr << "engine: configuration error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "engine: " << e.what() << "\n";
    return kRuntimeExit;
  }
}
