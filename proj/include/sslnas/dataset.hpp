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

#ifndef SSLNAS_DATASET_HPP_
#define SSLNAS_DATASET_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sslnas/image.hpp"
#include "sslnas/tensor.hpp"

namespace sslnas {

// In-memory labelled image collection. `ids` identify samples for hashing
// (file paths relative to the root, or generator coordinates).
struct Dataset {
  std::string name;
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<std::string> ids;
  std::vector<std::string> class_names;

  size_t size() const { return images.size(); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
  bool empty() const { return images.empty(); }
};

// Copies the listed samples, keeping class names.
Dataset subset(const Dataset& data, std::span<const size_t> indices);

// Per-channel statistics of a training split.
struct Normalization {
  std::array<double, 3> mean = {0.0, 0.0, 0.0};
  std::array<double, 3> stddev = {1.0, 1.0, 1.0};
};

Normalization compute_normalization(const Dataset& data);

// Stacks images (all of one size) into an NCHW tensor, normalized.
Tensor to_tensor(std::span<const Image> images, const Normalization& norm);

// Worker count for data-parallel loops: ENGINE_NUM_WORKERS if set and
// positive, else the hardware concurrency (at least 1).
int num_workers();

// Runs fn(i) for i in [0, n) on up to num_workers() threads. Each index is
// processed exactly once; results must be written to per-index slots.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace sslnas

#endif  // SSLNAS_DATASET_HPP_
