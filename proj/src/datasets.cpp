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

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "sslnas/error.hpp"
#include "sslnas/harness.hpp"

namespace sslnas {

void validate(const DatasetDescriptor& d) {
  if (d.name.empty()) throw ConfigError("dataset: name is required");
  const std::string at = "dataset '" + d.name + "': ";
  if (!(d.train_fraction > 0.0 && d.train_fraction < 1.0)) throw ConfigError(at + "train fraction must lie in (0, 1)");
  if (d.test_fraction <= 0.0 || std::abs(d.train_fraction + d.test_fraction - 1.0) > 1e-9)
    throw ConfigError(at + "split fractions must be positive and sum to 1");
  if (d.kind == DatasetKind::Folder) {
    if (d.root.empty()) throw ConfigError(at + "root is required for folder datasets");
    if (d.image_size < nn::kMinInputSize) throw ConfigError(at + "image_size below the network minimum");
  } else {
    const auto& s = d.synthetic;
    if (s.classes < 2) throw ConfigError(at + "classes must be >= 2");
    if (s.samples_per_class < 1) throw ConfigError(at + "samples_per_class must be >= 1");
    if (s.image_size < nn::kMinInputSize) throw ConfigError(at + "image_size below the network minimum");
    if (!(s.noise >= 0.0)) throw ConfigError(at + "noise must be >= 0");
  }
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kClassKey = 0xc1a5;
constexpr std::uint64_t kSampleKey = 0x5a3e;

struct ClassStyle {
  double theta, freq;
  std::array<double, 3> a, b, shape;
  int shape_kind;
};

std::array<double, 3> random_colour(Rng& rng) {
  return {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
}

ClassStyle class_style(const SyntheticParams& p, int c) {
  Rng rng(derive_seed(p.seed, {kClassKey, static_cast<std::uint64_t>(kSyntheticGeneratorVersion),
                               static_cast<std::uint64_t>(c)}));
  ClassStyle s;
  // Orientations are spread evenly, then jittered; frequencies are drawn.
  s.theta = std::numbers::pi * (c + rng.uniform(-0.2, 0.2)) / p.classes;
  s.freq = rng.uniform(1.5, 5.0);
  s.a = random_colour(rng);
  s.b = random_colour(rng);
  s.shape = random_colour(rng);
  s.shape_kind = c % 5;
  return s;
}

bool inside_shape(int kind, double dx, double dy, double r) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  switch (kind) {
    case 0: return dx * dx + dy * dy <= r * r;
    case 1: return ax <= 0.8 * r && ay <= 0.8 * r;
    case 2: return dy <= 0.6 * r && dy >= -r + 2.0 * ax;  // upward triangle
    case 3: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.36 * r * r;
    }
    default: return (ax <= 0.25 * r && ay <= r) || (ay <= 0.25 * r && ax <= r);
  }
}

Image render(const SyntheticParams& p, const ClassStyle& s, Rng& rng) {
  const int n = p.image_size;
  Image im(n, n);
  const double theta = s.theta + rng.normal(0.0, 0.08);
  const double freq = s.freq * (1.0 + rng.normal(0.0, 0.05));
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ex = rng.uniform(0.3, 0.7) * n, ey = rng.uniform(0.3, 0.7) * n;
  const double sigma = rng.uniform(0.3, 0.5) * n;
  const double cx = rng.uniform(0.25, 0.75) * n, cy = rng.uniform(0.25, 0.75) * n;
  const double radius = rng.uniform(0.15, 0.28) * n;
  const double gain = rng.uniform(0.8, 1.2);
  const double ct = std::cos(theta), st = std::sin(theta);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double u = (x * ct + y * st) / n;
      const double wave = std::sin(2.0 * std::numbers::pi * freq * u + phase);
      const double env = std::exp(-((x - ex) * (x - ex) + (y - ey) * (y - ey)) / (2.0 * sigma * sigma));
      const double m = 0.5 + 0.5 * wave * env;
      const bool in = inside_shape(s.shape_kind, x - cx, y - cy, radius);
      for (int c = 0; c < 3; ++c) {
        const auto k = static_cast<size_t>(c);
        double v = (1.0 - m) * s.a[k] + m * s.b[k];
        if (in) v = 0.15 * v + 0.85 * s.shape[k];
        v = gain * v + rng.normal(0.0, p.noise);
        im.at(c, y, x) = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
      }
    }
  return im;
}

}  // namespace

Dataset generate_synthetic(const SyntheticParams& p, const std::string& name) {
  if (p.classes < 2 || p.samples_per_class < 1 || p.image_size < 1)
    throw DomainError("synthetic dataset needs >= 2 classes, >= 1 sample per class and a positive size");
  Dataset d;
  d.name = name;
  const size_t total = static_cast<size_t>(p.classes) * static_cast<size_t>(p.samples_per_class);
  d.images.resize(total);
  d.labels.resize(total);
  d.ids.resize(total);
  std::vector<ClassStyle> styles;
  for (int c = 0; c < p.classes; ++c) {
    styles.push_back(class_style(p, c));
    d.class_names.push_back("class_" + std::to_string(c));
  }
  parallel_for(total, [&](size_t i) {
    const int c = static_cast<int>(i / static_cast<size_t>(p.samples_per_class));
    const int k = static_cast<int>(i % static_cast<size_t>(p.samples_per_class));
    Rng rng(derive_seed(p.seed, {kSampleKey, static_cast<std::uint64_t>(kSyntheticGeneratorVersion),
                                 static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(k)}));
    d.images[i] = render(p, styles[static_cast<size_t>(c)], rng);
    d.labels[i] = c;
    d.ids[i] = std::to_string(c) + "/" + std::to_string(k);
  });
  return d;
}

// ---------------------------------------------------------------------------
// Image folders
// ---------------------------------------------------------------------------

Dataset load_folder(const std::filesystem::path& root, int image_size, int* skipped) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DataError("dataset root " + root.string() + " is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw DataError("dataset root " + root.string() + " has no class directories");

  Dataset d;
  d.name = root.filename().string();
  int bad = 0;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    const int label = d.num_classes();
    const std::string cls = dir.filename().string();
    std::vector<Image> decoded(files.size());
    std::vector<char> ok(files.size(), 0);
    parallel_for(files.size(), [&](size_t i) {
      cv::Mat bgr = cv::imread(files[i].string(), cv::IMREAD_COLOR);
      if (bgr.empty()) return;
      cv::Mat rgb, sized;
      cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
      cv::resize(rgb, sized, cv::Size(image_size, image_size), 0, 0, cv::INTER_AREA);
      Image im(image_size, image_size);
      for (int y = 0; y < image_size; ++y)
        for (int x = 0; x < image_size; ++x) {
          const cv::Vec3b px = sized.at<cv::Vec3b>(y, x);
          for (int c = 0; c < 3; ++c) im.at(c, y, x) = px[c] / 255.0;
        }
      decoded[i] = std::move(im);
      ok[i] = 1;
    });
    size_t kept = 0;
    for (size_t i = 0; i < files.size(); ++i) {
      if (!ok[i]) {
        spdlog::warn("skipping unreadable image {}", files[i].string());
        ++bad;
        continue;
      }
      d.images.push_back(std::move(decoded[i]));
      d.labels.push_back(label);
      d.ids.push_back(cls + "/" + files[i].filename().string());
      ++kept;
    }
    if (kept == 0) throw DataError("class directory " + dir.string() + " contains no readable images");
    d.class_names.push_back(cls);
  }
  if (skipped) *skipped = bad;
  return d;
}

DatasetSplits split_dataset(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw DomainError("train fraction must lie in (0, 1)");
  // Stratified: within each class, samples are ordered by a seeded hash of
  // their id and the first round(f * n) go to train.
  std::vector<std::vector<std::pair<std::uint64_t, size_t>>> by_class(static_cast<size_t>(data.num_classes()));
  for (size_t i = 0; i < data.size(); ++i)
    by_class.at(static_cast<size_t>(data.labels[i])).push_back({mix64(fnv1a(data.ids[i]) ^ mix64(seed)), i});
  std::vector<size_t> train, test;
  for (auto& members : by_class) {
    std::sort(members.begin(), members.end());
    const auto n_train = static_cast<size_t>(std::lround(train_fraction * static_cast<double>(members.size())));
    for (size_t k = 0; k < members.size(); ++k) (k < n_train ? train : test).push_back(members[k].second);
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  DatasetSplits out;
  out.train = subset(data, train);
  out.test = subset(data, test);
  return out;
}

DatasetSplits load_dataset(const DatasetDescriptor& desc) {
  validate(desc);
  int skipped = 0;
  Dataset full = desc.kind == DatasetKind::Folder ? load_folder(desc.root, desc.image_size, &skipped)
                                                  : generate_synthetic(desc.synthetic, desc.name);
  full.name = desc.name;
  DatasetSplits s = split_dataset(full, desc.train_fraction, desc.split_seed);
  s.skipped = skipped;
  if (s.train.empty() || s.test.empty())
    throw DataError("dataset '" + desc.name + "' is too small for the requested split");
  return s;
}

}  // namespace sslnas
