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

#ifndef SSLNAS_IMAGE_HPP_
#define SSLNAS_IMAGE_HPP_

#include <vector>

namespace sslnas {

// RGB image, planar CHW, values in [0, 1].
struct Image {
  int h = 0;
  int w = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int height, int width, double fill = 0.0)
      : h(height), w(width), pixels(static_cast<size_t>(3) * height * width, fill) {}

  double& at(int c, int y, int x) { return pixels[(static_cast<size_t>(c) * h + y) * w + x]; }
  double at(int c, int y, int x) const { return pixels[(static_cast<size_t>(c) * h + y) * w + x]; }
  bool empty() const { return h <= 0 || w <= 0; }

  friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace sslnas

#endif  // SSLNAS_IMAGE_HPP_
