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

#include "sslnas/ssl.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <spdlog/spdlog.h>

#include "sslnas/error.hpp"

namespace sslnas {

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

AugmentConfig AugmentConfig::identity(int output_size) {
  AugmentConfig c;
  c.crop_scale_min = c.crop_scale_max = 1.0;
  c.crop_ratio_min = c.crop_ratio_max = 1.0;
  c.hflip_prob = 0.0;
  c.jitter_prob = 0.0;
  c.grayscale_prob = 0.0;
  c.blur = false;
  c.output_size = output_size;
  return c;
}

void validate(const AugmentConfig& c) {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError(std::string(what) + " must lie in [0, 1]");
  };
  if (!(c.crop_scale_min > 0.0 && c.crop_scale_min <= c.crop_scale_max && c.crop_scale_max <= 1.0))
    throw DomainError("crop scale must be a sub-interval of (0, 1]");
  if (!(c.crop_ratio_min > 0.0 && c.crop_ratio_min <= c.crop_ratio_max))
    throw DomainError("crop ratio interval must be positive and ordered");
  prob(c.hflip_prob, "hflip_prob");
  prob(c.jitter_prob, "jitter_prob");
  prob(c.grayscale_prob, "grayscale_prob");
  if (c.brightness < 0 || c.contrast < 0 || c.saturation < 0 || c.hue < 0 || c.hue > 0.5)
    throw DomainError("jitter strengths must be non-negative (hue <= 0.5)");
  if (c.output_size < 1) throw DomainError("output_size must be positive");
}

Image resized_crop(const Image& img, double y0, double x0, double ch, double cw, int size) {
  Image out(size, size);
  const double sy = ch / size, sx = cw / size;
  for (int oy = 0; oy < size; ++oy) {
    double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, ch - 1.0) + y0;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.h - 1));
    const int iy0 = static_cast<int>(fy);
    const int iy1 = std::min(iy0 + 1, img.h - 1);
    const double wy = fy - iy0;
    for (int ox = 0; ox < size; ++ox) {
      double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, cw - 1.0) + x0;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.w - 1));
      const int ix0 = static_cast<int>(fx);
      const int ix1 = std::min(ix0 + 1, img.w - 1);
      const double wx = fx - ix0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(c, iy0, ix0) * (1 - wx) + img.at(c, iy0, ix1) * wx;
        const double bot = img.at(c, iy1, ix0) * (1 - wx) + img.at(c, iy1, ix1) * wx;
        out.at(c, oy, ox) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

Image resize_view(const Image& img, int size) {
  if (img.h == size && img.w == size) return img;
  return resized_crop(img, 0, 0, img.h, img.w, size);
}

namespace {

double gray(const Image& im, size_t i, size_t plane) {
  return 0.299 * im.pixels[i] + 0.587 * im.pixels[plane + i] + 0.114 * im.pixels[2 * plane + i];
}

void clamp01(Image& im) {
  for (double& v : im.pixels) v = std::clamp(v, 0.0, 1.0);
}

void adjust_brightness(Image& im, double f) {
  for (double& v : im.pixels) v *= f;
  clamp01(im);
}

void adjust_contrast(Image& im, double f) {
  const size_t plane = static_cast<size_t>(im.h) * im.w;
  double mean = 0.0;
  for (size_t i = 0; i < plane; ++i) mean += gray(im, i, plane);
  mean /= static_cast<double>(plane);
  for (double& v : im.pixels) v = f * v + (1 - f) * mean;
  clamp01(im);
}

void adjust_saturation(Image& im, double f) {
  const size_t plane = static_cast<size_t>(im.h) * im.w;
  for (size_t i = 0; i < plane; ++i) {
    const double g = gray(im, i, plane);
    for (int c = 0; c < 3; ++c) {
      double& v = im.pixels[c * plane + i];
      v = f * v + (1 - f) * g;
    }
  }
  clamp01(im);
}

void adjust_hue(Image& im, double shift) {
  const size_t plane = static_cast<size_t>(im.h) * im.w;
  for (size_t i = 0; i < plane; ++i) {
    double& r = im.pixels[i];
    double& g = im.pixels[plane + i];
    double& b = im.pixels[2 * plane + i];
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double v = mx, delta = mx - mn;
    const double s = mx > 0 ? delta / mx : 0.0;
    double h = 0.0;
    if (delta > 0) {
      if (mx == r)
        h = (g - b) / delta;
      else if (mx == g)
        h = 2.0 + (b - r) / delta;
      else
        h = 4.0 + (r - g) / delta;
      h /= 6.0;
    }
    h = h + shift;
    h -= std::floor(h);
    // HSV -> RGB
    const double h6 = h * 6.0;
    const int sector = static_cast<int>(h6) % 6;
    const double f = h6 - std::floor(h6);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (sector) {
      case 0: r = v, g = t, b = p; break;
      case 1: r = q, g = v, b = p; break;
      case 2: r = p, g = v, b = t; break;
      case 3: r = p, g = q, b = v; break;
      case 4: r = t, g = p, b = v; break;
      default: r = v, g = p, b = q; break;
    }
  }
}

void to_grayscale(Image& im) {
  const size_t plane = static_cast<size_t>(im.h) * im.w;
  for (size_t i = 0; i < plane; ++i) {
    const double g = gray(im, i, plane);
    for (int c = 0; c < 3; ++c) im.pixels[c * plane + i] = g;
  }
}

void gaussian_blur(Image& im, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::lround(0.05 * im.h)));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double z = 0.0;
  for (int i = -radius; i <= radius; ++i) z += (k[static_cast<size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma)));
  for (double& v : k) v /= z;
  Image tmp = im;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < im.h; ++y)
      for (int x = 0; x < im.w; ++x) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i)
          s += k[static_cast<size_t>(i + radius)] * im.at(c, y, std::clamp(x + i, 0, im.w - 1));
        tmp.at(c, y, x) = s;
      }
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < im.h; ++y)
      for (int x = 0; x < im.w; ++x) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i)
          s += k[static_cast<size_t>(i + radius)] * tmp.at(c, std::clamp(y + i, 0, im.h - 1), x);
        im.at(c, y, x) = s;
      }
}

}  // namespace

Image augment(const Image& img, const AugmentConfig& cfg, Rng& rng) {
  if (img.empty() || img.pixels.size() != static_cast<size_t>(3) * img.h * img.w)
    throw DomainError("cannot augment a degenerate image");

  // Random resized crop.
  const double area = static_cast<double>(img.h) * img.w;
  int ch = img.h, cw = img.w, y0 = 0, x0 = 0;
  bool found = false;
  const double log_lo = std::log(cfg.crop_ratio_min), log_hi = std::log(cfg.crop_ratio_max);
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    const double target = area * rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max);
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (w > 0 && h > 0 && w <= img.w && h <= img.h) {
      cw = w;
      ch = h;
      y0 = static_cast<int>(rng.uniform_int(0, img.h - h));
      x0 = static_cast<int>(rng.uniform_int(0, img.w - w));
      found = true;
    }
  }
  if (!found) {
    const double in_ratio = static_cast<double>(img.w) / img.h;
    if (in_ratio < cfg.crop_ratio_min) {
      cw = img.w;
      ch = static_cast<int>(std::lround(cw / cfg.crop_ratio_min));
    } else if (in_ratio > cfg.crop_ratio_max) {
      ch = img.h;
      cw = static_cast<int>(std::lround(ch * cfg.crop_ratio_max));
    } else {
      cw = img.w;
      ch = img.h;
    }
    y0 = (img.h - ch) / 2;
    x0 = (img.w - cw) / 2;
  }
  Image out = resized_crop(img, y0, x0, ch, cw, cfg.output_size);

  if (rng.bernoulli(cfg.hflip_prob)) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w / 2; ++x) std::swap(out.at(c, y, x), out.at(c, y, out.w - 1 - x));
  }

  if (rng.bernoulli(cfg.jitter_prob)) {
    std::array<int, 4> order = {0, 1, 2, 3};
    for (int i = 3; i > 0; --i) std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);
    for (int op : order) {
      switch (op) {
        case 0:
          if (cfg.brightness > 0)
            adjust_brightness(out, rng.uniform(std::max(0.0, 1 - cfg.brightness), 1 + cfg.brightness));
          break;
        case 1:
          if (cfg.contrast > 0) adjust_contrast(out, rng.uniform(std::max(0.0, 1 - cfg.contrast), 1 + cfg.contrast));
          break;
        case 2:
          if (cfg.saturation > 0)
            adjust_saturation(out, rng.uniform(std::max(0.0, 1 - cfg.saturation), 1 + cfg.saturation));
          break;
        default:
          if (cfg.hue > 0) adjust_hue(out, rng.uniform(-cfg.hue, cfg.hue));
          break;
      }
    }
  }

  if (cfg.grayscale_prob > 0 && rng.bernoulli(cfg.grayscale_prob)) to_grayscale(out);
  if (cfg.blur && rng.bernoulli(0.5)) gaussian_blur(out, rng.uniform(0.1, 2.0));
  return out;
}

std::pair<Image, Image> augment_pair(const Image& img, const AugmentConfig& cfg, Rng& rng) {
  Image a = augment(img, cfg, rng);
  Image b = augment(img, cfg, rng);
  return {std::move(a), std::move(b)};
}

Rng augment_stream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  return Rng(derive_seed(seed, {0xa06du, epoch, index}));
}

// ---------------------------------------------------------------------------
// Projection head
// ---------------------------------------------------------------------------

NormalizedRows l2_normalize_rows(const Matrix& v) {
  NormalizedRows r;
  r.z = v;
  r.norms.resize(static_cast<size_t>(v.rows()));
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double n = v.row(i).norm();
    r.norms[static_cast<size_t>(i)] = n;
    if (n > 0.0 && std::isfinite(n)) {
      r.z.row(i) /= n;
    } else {
      r.z.row(i).setZero();
      r.z(i, 0) = 1.0;
      ++r.degenerate;
    }
  }
  return r;
}

Matrix l2_normalize_backward(const NormalizedRows& fwd, const Matrix& g) {
  Matrix d(g.rows(), g.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const double n = fwd.norms[static_cast<size_t>(i)];
    if (n > 0.0 && std::isfinite(n)) {
      const double proj = fwd.z.row(i).dot(g.row(i));
      d.row(i) = (g.row(i) - proj * fwd.z.row(i)) / n;
    } else {
      d.row(i).setZero();
    }
  }
  return d;
}

ProjectionHead::ProjectionHead(int in_features, const ProjectionHeadSpec& spec, Rng& rng)
    : in_(in_features), spec_(spec) {
  if (in_features <= 0 || spec.hidden_dim <= 0 || spec.out_dim <= 0)
    throw DomainError("projection head dimensions must be positive");
  mlp_.add(std::make_unique<nn::Linear>("projection.fc1", in_features, spec.hidden_dim, true, rng));
  mlp_.add(std::make_unique<nn::ReLU>());
  mlp_.add(std::make_unique<nn::Linear>("projection.fc2", spec.hidden_dim, spec.out_dim, true, rng));
}

Matrix ProjectionHead::forward(const Tensor& features, nn::Mode mode) {
  if (static_cast<size_t>(features.c()) * features.plane() != static_cast<size_t>(in_))
    throw DomainError("projection head expects " + std::to_string(in_) + " features, got " +
                      features.shape_string());
  const Tensor raw = mlp_.forward(features, mode);
  last_ = l2_normalize_rows(raw.as_matrix());
  if (last_.degenerate > 0) {
    degenerate_rows_ += last_.degenerate;
    spdlog::warn("projection: {} zero-norm row(s) replaced by the first basis vector", last_.degenerate);
  }
  return last_.z;
}

Tensor ProjectionHead::backward(const Matrix& grad_z) {
  return mlp_.backward(Tensor::from_matrix(l2_normalize_backward(last_, grad_z)));
}

void ProjectionHead::collect(std::vector<nn::Param*>& out) { mlp_.collect(out); }

void ProjectionHead::clear_cache() {
  mlp_.clear_cache();
  last_ = NormalizedRows();
}

// ---------------------------------------------------------------------------
// NT-Xent
// ---------------------------------------------------------------------------

void validate(const EmbeddingBatch& b) {
  if (!(b.temperature > 0.0) || !std::isfinite(b.temperature))
    throw DomainError("temperature must be positive and finite");
  if (b.z.rows() % 2 != 0) throw DomainError("embedding batch needs an even number of rows (paired views)");
  if (b.z.rows() < 4) throw DomainError("NT-Xent needs N >= 2 pairs");
  for (Eigen::Index i = 0; i < b.z.rows(); ++i) {
    const double n = b.z.row(i).norm();
    if (!(std::abs(n - 1.0) <= 1e-5))
      throw DomainError("embedding row " + std::to_string(i) + " is not unit norm (" + std::to_string(n) + ")");
  }
}

namespace {

// Per-anchor softmax over k != i of s(i,k)/t; the diagonal is left at zero.
Matrix anchor_softmax(const Matrix& sim, double t) {
  const Eigen::Index m = sim.rows();
  Matrix p = Matrix::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < m; ++k)
      if (k != i) mx = std::max(mx, sim(i, k) / t);
    double z = 0.0;
    for (Eigen::Index k = 0; k < m; ++k)
      if (k != i) z += (p(i, k) = std::exp(sim(i, k) / t - mx));
    p.row(i) /= z;
  }
  return p;
}

}  // namespace

double nt_xent(const EmbeddingBatch& b) { return nt_xent_with_grad(b).loss; }

LossAndGrad nt_xent_with_grad(const EmbeddingBatch& b) {
  validate(b);
  const Eigen::Index m = b.z.rows();
  const double t = b.temperature;
  const Matrix sim = b.z * b.z.transpose();
  Matrix a = anchor_softmax(sim, t);

  double loss = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index pair = i ^ 1;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < m; ++k)
      if (k != i) mx = std::max(mx, sim(i, k) / t);
    double z = 0.0;
    for (Eigen::Index k = 0; k < m; ++k)
      if (k != i) z += std::exp(sim(i, k) / t - mx);
    loss += -(sim(i, pair) / t) + mx + std::log(z);
    a(i, pair) -= 1.0;
  }
  loss /= static_cast<double>(m);

  // dl_i/ds_ik = (softmax_ik - [k == pair]) / t; s_ik = z_i . z_k.
  a /= t * static_cast<double>(m);
  LossAndGrad out;
  out.loss = loss;
  out.grad = (a + a.transpose()) * b.z;
  return out;
}

}  // namespace sslnas
