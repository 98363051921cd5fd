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

#include "sslnas/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "sslnas/error.hpp"

namespace sslnas {

Dataset subset(const Dataset& data, std::span<const size_t> indices) {
  Dataset out;
  out.name = data.name;
  out.class_names = data.class_names;
  out.images.reserve(indices.size());
  for (size_t i : indices) {
    if (i >= data.size()) throw DomainError("subset index " + std::to_string(i) + " out of range");
    out.images.push_back(data.images[i]);
    out.labels.push_back(data.labels[i]);
    out.ids.push_back(data.ids[i]);
  }
  return out;
}

Normalization compute_normalization(const Dataset& data) {
  if (data.empty()) throw DataError("cannot compute normalization of an empty split");
  Normalization n;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sq = 0.0;
    size_t count = 0;
    for (const auto& im : data.images) {
      const size_t plane = static_cast<size_t>(im.h) * im.w;
      for (size_t i = 0; i < plane; ++i) {
        const double v = im.pixels[c * plane + i];
        sum += v;
        sq += v * v;
      }
      count += plane;
    }
    const double mean = sum / static_cast<double>(count);
    const double var = std::max(0.0, sq / static_cast<double>(count) - mean * mean);
    n.mean[static_cast<size_t>(c)] = mean;
    n.stddev[static_cast<size_t>(c)] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return n;
}

Tensor to_tensor(std::span<const Image> images, const Normalization& norm) {
  if (images.empty()) throw DataError("cannot batch zero images");
  const int h = images.front().h, w = images.front().w;
  Tensor t(static_cast<int>(images.size()), 3, h, w);
  const size_t plane = static_cast<size_t>(h) * w;
  for (size_t n = 0; n < images.size(); ++n) {
    const Image& im = images[n];
    if (im.h != h || im.w != w) throw DataError("batch mixes image sizes");
    double* dst = t.sample(static_cast<int>(n));
    for (size_t c = 0; c < 3; ++c) {
      const double m = norm.mean[c], inv = 1.0 / norm.stddev[c];
      for (size_t i = 0; i < plane; ++i) dst[c * plane + i] = (im.pixels[c * plane + i] - m) * inv;
    }
  }
  return t;
}

int num_workers() {
  if (const char* env = std::getenv("ENGINE_NUM_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<int>(std::min(v, 256L));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
  const size_t workers = std::min(n, static_cast<size_t>(num_workers()));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto body = [&] {
    for (size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (size_t t = 1; t < workers; ++t) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace sslnas
