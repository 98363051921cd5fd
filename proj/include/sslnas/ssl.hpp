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

#ifndef SSLNAS_SSL_HPP_
#define SSLNAS_SSL_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "sslnas/image.hpp"
#include "sslnas/nn/layers.hpp"
#include "sslnas/rng.hpp"
#include "sslnas/tensor.hpp"

namespace sslnas {

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentConfig {
  double crop_scale_min = 0.2;
  double crop_scale_max = 1.0;
  double crop_ratio_min = 3.0 / 4.0;
  double crop_ratio_max = 4.0 / 3.0;
  double hflip_prob = 0.5;
  // Colour jitter with SimCLR strength 0.5.
  double jitter_prob = 0.8;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;
  // Off by default: at 32x32 these destroy most of the signal.
  double grayscale_prob = 0.0;
  bool blur = false;
  int output_size = 32;

  // Resize only: no crop jitter, flip or colour changes.
  static AugmentConfig identity(int output_size);
};

// Throws DomainError when a field is out of range.
void validate(const AugmentConfig& cfg);

// Bilinear resize of the crop [y0, y0+ch) x [x0, x0+cw) to size x size.
Image resized_crop(const Image& img, double y0, double x0, double ch, double cw, int size);

// Whole-image bilinear resize to size x size (returns img if already there).
// Used for evaluation views.
Image resize_view(const Image& img, int size);

Image augment(const Image& img, const AugmentConfig& cfg, Rng& rng);

// Two independent draws of the augmentation chain from one stream.
std::pair<Image, Image> augment_pair(const Image& img, const AugmentConfig& cfg, Rng& rng);

// Per-sample stream keyed by (seed, epoch, dataset index), so the worker
// layout never changes results.
Rng augment_stream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index);

// ---------------------------------------------------------------------------
// Projection head and normalization
// ---------------------------------------------------------------------------

struct ProjectionHeadSpec {
  int hidden_dim = 2048;
  int out_dim = 128;
};

// Row-wise L2 normalization. A zero row is replaced by the first basis vector
// and counted as a degenerate row.
struct NormalizedRows {
  Matrix z;
  std::vector<double> norms;
  int degenerate = 0;
};

NormalizedRows l2_normalize_rows(const Matrix& v);
// Gradient with respect to the unnormalized rows; degenerate rows get zero.
Matrix l2_normalize_backward(const NormalizedRows& fwd, const Matrix& grad_z);

// Linear(C, hidden) -> ReLU -> Linear(hidden, out), followed by row L2
// normalization.
class ProjectionHead {
 public:
  ProjectionHead(int in_features, const ProjectionHeadSpec& spec, Rng& rng);

  // features: N x C (or N x C x 1 x 1). Returns unit rows.
  Matrix forward(const Tensor& features, nn::Mode mode);
  // grad_z: N x out. Returns gradient w.r.t. the features (N x C x 1 x 1).
  Tensor backward(const Matrix& grad_z);
  void collect(std::vector<nn::Param*>& out);
  void clear_cache();

  int in_features() const { return in_; }
  int diagnostics() const { return degenerate_rows_; }

 private:
  int in_;
  ProjectionHeadSpec spec_;
  nn::Sequential mlp_;
  NormalizedRows last_;
  int degenerate_rows_ = 0;
};

// ---------------------------------------------------------------------------
// NT-Xent
// ---------------------------------------------------------------------------

inline constexpr double kDefaultTemperature = 0.1;

// 2N unit rows; rows 2i and 2i+1 are the two views of sample i.
struct EmbeddingBatch {
  Matrix z;
  double temperature = kDefaultTemperature;
};

// Throws DomainError when N < 2, rows are not unit norm within 1e-5, the row
// count is odd or the temperature is not positive.
void validate(const EmbeddingBatch& batch);

// Mean over the 2N anchors of
//   -log( exp(s(i,pair)/t) / sum_{k != i} exp(s(i,k)/t) ).
double nt_xent(const EmbeddingBatch& batch);

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;  // dL/dz, same shape as z
};

LossAndGrad nt_xent_with_grad(const EmbeddingBatch& batch);

}  // namespace sslnas

#endif  // SSLNAS_SSL_HPP_
