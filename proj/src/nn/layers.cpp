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

#include "sslnas/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "sslnas/error.hpp"

namespace sslnas {

std::string Tensor::shape_string() const {
  return "[" + std::to_string(n_) + "," + std::to_string(c_) + "," + std::to_string(h_) + "," +
         std::to_string(w_) + "]";
}

Tensor Tensor::from_matrix(const Matrix& m) {
  Tensor t(static_cast<int>(m.rows()), static_cast<int>(m.cols()), 1, 1);
  t.as_matrix() = m;
  return t;
}

namespace nn {

namespace {

// Output positions o in [lo, hi) whose input coordinate o*s - p + k lies in
// [0, size).
inline void valid_range(int k, int s, int p, int size, int out, int& lo, int& hi) {
  // o*s >= p - k
  lo = p - k <= 0 ? 0 : (p - k + s - 1) / s;
  // o*s <= size - 1 + p - k
  const int top = size - 1 + p - k;
  hi = top < 0 ? 0 : std::min(out, top / s + 1);
  if (lo > hi) lo = hi;
}

void add_into(Tensor& dst, const Tensor& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int groups,
               Rng& rng)
    : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), groups_(groups), pad_(kernel / 2) {
  if (groups < 1 || in_channels % groups != 0 || out_channels % groups != 0)
    throw StructuralError("conv " + name + ": channels not divisible by groups");
  const size_t fan_in = static_cast<size_t>(in_ / groups_) * k_ * k_;
  weight_ = Param(std::move(name), ParamKind::Weight, static_cast<size_t>(out_) * fan_in);
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : weight_.value) v = rng.normal(0.0, std);
}

Tensor Conv2d::forward(const Tensor& x, Mode mode) {
  if (x.c() != in_)
    throw StructuralError("conv " + weight_.name + ": expected " + std::to_string(in_) +
                          " input channels, got " + x.shape_string());
  if (mode != Mode::Eval) input_ = x;
  return depthwise() ? forward_depthwise(x) : forward_general(x);
}

Tensor Conv2d::backward(const Tensor& g) { return depthwise() ? backward_depthwise(g) : backward_general(g); }

Tensor Conv2d::forward_depthwise(const Tensor& x) const {
  const int H = x.h(), W = x.w(), Ho = out_size(H), Wo = out_size(W);
  Tensor y(x.n(), out_, Ho, Wo);
  const double* wt = weight_.value.data();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < in_; ++c) {
      const double* in = x.sample(n) + static_cast<size_t>(c) * H * W;
      double* o = y.sample(n) + static_cast<size_t>(c) * Ho * Wo;
      const double* wk = wt + static_cast<size_t>(c) * k_ * k_;
      for (int ky = 0; ky < k_; ++ky) {
        int oy0, oy1;
        valid_range(ky, stride_, pad_, H, Ho, oy0, oy1);
        for (int kx = 0; kx < k_; ++kx) {
          int ox0, ox1;
          valid_range(kx, stride_, pad_, W, Wo, ox0, ox1);
          const double wv = wk[ky * k_ + kx];
          for (int oy = oy0; oy < oy1; ++oy) {
            const double* row = in + (static_cast<std::ptrdiff_t>(oy * stride_ - pad_ + ky) * W - pad_ + kx);
            double* orow = o + static_cast<size_t>(oy) * Wo;
            for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wv * row[ox * stride_];
          }
        }
      }
    }
  }
  return y;
}

Tensor Conv2d::backward_depthwise(const Tensor& g) {
  const Tensor& x = input_;
  const int H = x.h(), W = x.w(), Ho = g.h(), Wo = g.w();
  Tensor dx(x.n(), in_, H, W);
  const double* wt = weight_.value.data();
  double* dw = weight_.grad.data();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < in_; ++c) {
      const double* in = x.sample(n) + static_cast<size_t>(c) * H * W;
      double* din = dx.sample(n) + static_cast<size_t>(c) * H * W;
      const double* go = g.sample(n) + static_cast<size_t>(c) * Ho * Wo;
      const size_t wbase = static_cast<size_t>(c) * k_ * k_;
      for (int ky = 0; ky < k_; ++ky) {
        int oy0, oy1;
        valid_range(ky, stride_, pad_, H, Ho, oy0, oy1);
        for (int kx = 0; kx < k_; ++kx) {
          int ox0, ox1;
          valid_range(kx, stride_, pad_, W, Wo, ox0, ox1);
          const double wv = wt[wbase + ky * k_ + kx];
          double acc = 0.0;
          for (int oy = oy0; oy < oy1; ++oy) {
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(oy * stride_ - pad_ + ky) * W - pad_ + kx;
            const double* row = in + off;
            double* drow = din + off;
            const double* grow = go + static_cast<size_t>(oy) * Wo;
            for (int ox = ox0; ox < ox1; ++ox) {
              acc += grow[ox] * row[ox * stride_];
              drow[ox * stride_] += grow[ox] * wv;
            }
          }
          dw[wbase + ky * k_ + kx] += acc;
        }
      }
    }
  }
  return dx;
}

void Conv2d::im2col(const double* src, int h, int w, int c0, int cg, Matrix& col) const {
  const int Ho = out_size(h), Wo = out_size(w);
  col.setZero(static_cast<Eigen::Index>(cg) * k_ * k_, static_cast<Eigen::Index>(Ho) * Wo);
  for (int ci = 0; ci < cg; ++ci) {
    const double* in = src + static_cast<size_t>(c0 + ci) * h * w;
    for (int ky = 0; ky < k_; ++ky) {
      int oy0, oy1;
      valid_range(ky, stride_, pad_, h, Ho, oy0, oy1);
      for (int kx = 0; kx < k_; ++kx) {
        int ox0, ox1;
        valid_range(kx, stride_, pad_, w, Wo, ox0, ox1);
        double* dst = col.data() + static_cast<size_t>((ci * k_ + ky) * k_ + kx) * Ho * Wo;
        for (int oy = oy0; oy < oy1; ++oy) {
          const double* row = in + (static_cast<std::ptrdiff_t>(oy * stride_ - pad_ + ky) * w - pad_ + kx);
          double* drow = dst + static_cast<size_t>(oy) * Wo;
          for (int ox = ox0; ox < ox1; ++ox) drow[ox] = row[ox * stride_];
        }
      }
    }
  }
}

void Conv2d::col2im(const Matrix& col, int h, int w, int c0, int cg, double* dst) const {
  const int Ho = out_size(h), Wo = out_size(w);
  for (int ci = 0; ci < cg; ++ci) {
    double* out = dst + static_cast<size_t>(c0 + ci) * h * w;
    for (int ky = 0; ky < k_; ++ky) {
      int oy0, oy1;
      valid_range(ky, stride_, pad_, h, Ho, oy0, oy1);
      for (int kx = 0; kx < k_; ++kx) {
        int ox0, ox1;
        valid_range(kx, stride_, pad_, w, Wo, ox0, ox1);
        const double* src = col.data() + static_cast<size_t>((ci * k_ + ky) * k_ + kx) * Ho * Wo;
        for (int oy = oy0; oy < oy1; ++oy) {
          double* row = out + (static_cast<std::ptrdiff_t>(oy * stride_ - pad_ + ky) * w - pad_ + kx);
          const double* srow = src + static_cast<size_t>(oy) * Wo;
          for (int ox = ox0; ox < ox1; ++ox) row[ox * stride_] += srow[ox];
        }
      }
    }
  }
}

Tensor Conv2d::forward_general(const Tensor& x) const {
  const int H = x.h(), W = x.w(), Ho = out_size(H), Wo = out_size(W);
  const int cgi = in_ / groups_, cgo = out_ / groups_;
  const Eigen::Index kk = static_cast<Eigen::Index>(cgi) * k_ * k_;
  const Eigen::Index hw = static_cast<Eigen::Index>(Ho) * Wo;
  Tensor y(x.n(), out_, Ho, Wo);
  Eigen::Map<const Matrix> wmat(weight_.value.data(), out_, kk);
  const bool pointwise = k_ == 1 && stride_ == 1;
  Matrix col;
  for (int n = 0; n < x.n(); ++n) {
    for (int g = 0; g < groups_; ++g) {
      Eigen::Map<Matrix> out(y.sample(n) + static_cast<size_t>(g) * cgo * hw, cgo, hw);
      if (pointwise) {
        Eigen::Map<const Matrix> in(x.sample(n) + static_cast<size_t>(g) * cgi * hw, cgi, hw);
        out.noalias() = wmat.middleRows(g * cgo, cgo) * in;
      } else {
        im2col(x.sample(n), H, W, g * cgi, cgi, col);
        out.noalias() = wmat.middleRows(g * cgo, cgo) * col;
      }
    }
  }
  return y;
}

Tensor Conv2d::backward_general(const Tensor& gout) {
  const Tensor& x = input_;
  const int H = x.h(), W = x.w(), Ho = gout.h(), Wo = gout.w();
  const int cgi = in_ / groups_, cgo = out_ / groups_;
  const Eigen::Index kk = static_cast<Eigen::Index>(cgi) * k_ * k_;
  const Eigen::Index hw = static_cast<Eigen::Index>(Ho) * Wo;
  Tensor dx(x.n(), in_, H, W);
  Eigen::Map<const Matrix> wmat(weight_.value.data(), out_, kk);
  Eigen::Map<Matrix> dwmat(weight_.grad.data(), out_, kk);
  const bool pointwise = k_ == 1 && stride_ == 1;
  Matrix col, dcol;
  for (int n = 0; n < x.n(); ++n) {
    for (int g = 0; g < groups_; ++g) {
      Eigen::Map<const Matrix> go(gout.sample(n) + static_cast<size_t>(g) * cgo * hw, cgo, hw);
      if (pointwise) {
        Eigen::Map<const Matrix> in(x.sample(n) + static_cast<size_t>(g) * cgi * hw, cgi, hw);
        Eigen::Map<Matrix> din(dx.sample(n) + static_cast<size_t>(g) * cgi * hw, cgi, hw);
        dwmat.middleRows(g * cgo, cgo).noalias() += go * in.transpose();
        din.noalias() = wmat.middleRows(g * cgo, cgo).transpose() * go;
      } else {
        im2col(x.sample(n), H, W, g * cgi, cgi, col);
        dwmat.middleRows(g * cgo, cgo).noalias() += go * col.transpose();
        dcol.noalias() = wmat.middleRows(g * cgo, cgo).transpose() * go;
        col2im(dcol, H, W, g * cgi, cgi, dx.sample(n));
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d
// ---------------------------------------------------------------------------

BatchNorm2d::BatchNorm2d(std::string name, int channels, double momentum, double eps)
    : c_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(name + ".gamma", ParamKind::Norm, static_cast<size_t>(channels), 1.0),
      beta_(name + ".beta", ParamKind::Norm, static_cast<size_t>(channels), 0.0),
      running_mean_(name + ".running_mean", ParamKind::State, static_cast<size_t>(channels), 0.0),
      running_var_(name + ".running_var", ParamKind::State, static_cast<size_t>(channels), 1.0) {}

void BatchNorm2d::collect(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  if (x.c() != c_)
    throw StructuralError("norm " + gamma_.name + ": expected " + std::to_string(c_) + " channels, got " +
                          x.shape_string());
  const size_t hw = x.plane();
  const double m = static_cast<double>(x.n()) * static_cast<double>(hw);
  Tensor y(x.n(), x.c(), x.h(), x.w());
  inv_std_.assign(static_cast<size_t>(c_), 0.0);
  batch_stats_ = mode != Mode::Eval;
  if (batch_stats_) xhat_ = Tensor(x.n(), x.c(), x.h(), x.w());

  for (int c = 0; c < c_; ++c) {
    double mean, var;
    if (batch_stats_) {
      double s = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const double* p = x.sample(n) + c * hw;
        for (size_t i = 0; i < hw; ++i) s += p[i];
      }
      mean = s / m;
      double v = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const double* p = x.sample(n) + c * hw;
        for (size_t i = 0; i < hw; ++i) v += (p[i] - mean) * (p[i] - mean);
      }
      var = v / m;
      if (mode == Mode::Train) {
        const double unbiased = m > 1.0 ? var * m / (m - 1.0) : var;
        auto& rm = running_mean_.value[static_cast<size_t>(c)];
        auto& rv = running_var_.value[static_cast<size_t>(c)];
        rm = (1.0 - momentum_) * rm + momentum_ * mean;
        rv = (1.0 - momentum_) * rv + momentum_ * unbiased;
      }
    } else {
      mean = running_mean_.value[static_cast<size_t>(c)];
      var = running_var_.value[static_cast<size_t>(c)];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[static_cast<size_t>(c)] = inv;
    const double ga = gamma_.value[static_cast<size_t>(c)], be = beta_.value[static_cast<size_t>(c)];
    for (int n = 0; n < x.n(); ++n) {
      const double* p = x.sample(n) + c * hw;
      double* q = y.sample(n) + c * hw;
      double* xh = batch_stats_ ? xhat_.sample(n) + c * hw : nullptr;
      for (size_t i = 0; i < hw; ++i) {
        const double h = (p[i] - mean) * inv;
        if (xh) xh[i] = h;
        q[i] = ga * h + be;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& g) {
  if (!batch_stats_) throw StructuralError("backward through eval-mode normalization is not supported");
  const size_t hw = g.plane();
  const double m = static_cast<double>(g.n()) * static_cast<double>(hw);
  Tensor dx(g.n(), g.c(), g.h(), g.w());
  for (int c = 0; c < c_; ++c) {
    const size_t cc = static_cast<size_t>(c);
    const double ga = gamma_.value[cc], inv = inv_std_[cc];
    double sum_g = 0.0, sum_gx = 0.0;
    for (int n = 0; n < g.n(); ++n) {
      const double* gp = g.sample(n) + c * hw;
      const double* xh = xhat_.sample(n) + c * hw;
      for (size_t i = 0; i < hw; ++i) {
        sum_g += gp[i];
        sum_gx += gp[i] * xh[i];
      }
    }
    beta_.grad[cc] += sum_g;
    gamma_.grad[cc] += sum_gx;
    const double scale = ga * inv / m;
    for (int n = 0; n < g.n(); ++n) {
      const double* gp = g.sample(n) + c * hw;
      const double* xh = xhat_.sample(n) + c * hw;
      double* d = dx.sample(n) + c * hw;
      for (size_t i = 0; i < hw; ++i) d[i] = scale * (m * gp[i] - sum_g - xh[i] * sum_gx);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Pointwise and pooling layers
// ---------------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, Mode mode) {
  if (mode != Mode::Eval) input_ = x;
  Tensor y = x;
  for (double& v : y.vec()) {
    v = std::max(v, 0.0);
    if (cap_ > 0.0) v = std::min(v, cap_);
  }
  return y;
}

Tensor ReLU::backward(const Tensor& g) {
  Tensor dx = g;
  const double* x = input_.data();
  double* d = dx.data();
  for (size_t i = 0; i < dx.size(); ++i)
    if (x[i] <= 0.0 || (cap_ > 0.0 && x[i] >= cap_)) d[i] = 0.0;
  return dx;
}

Tensor MaxPool2d::forward(const Tensor& x, Mode mode) {
  const int Ho = (x.h() + 2 * pad_ - k_) / stride_ + 1;
  const int Wo = (x.w() + 2 * pad_ - k_) / stride_ + 1;
  Tensor y(x.n(), x.c(), Ho, Wo);
  const bool keep = mode != Mode::Eval;
  if (keep) argmax_.assign(y.size(), 0);
  in_n_ = x.n();
  in_c_ = x.c();
  in_h_ = x.h();
  in_w_ = x.w();
  size_t o = 0;
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          size_t best_i = 0;
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= x.h()) continue;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= x.w()) continue;
              const size_t i = ((static_cast<size_t>(n) * x.c() + c) * x.h() + iy) * x.w() + ix;
              if (x.data()[i] > best) {
                best = x.data()[i];
                best_i = i;
              }
            }
          }
          y.data()[o] = best;
          if (keep) argmax_[o] = best_i;
        }
  return y;
}

Tensor MaxPool2d::backward(const Tensor& g) {
  Tensor dx(in_n_, in_c_, in_h_, in_w_);
  for (size_t o = 0; o < g.size(); ++o) dx.data()[argmax_[o]] += g.data()[o];
  return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, Mode) {
  h_ = x.h();
  w_ = x.w();
  Tensor y(x.n(), x.c(), 1, 1);
  const size_t hw = x.plane();
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const double* p = x.sample(n) + c * hw;
      double s = 0.0;
      for (size_t i = 0; i < hw; ++i) s += p[i];
      y.at(n, c, 0, 0) = s / static_cast<double>(hw);
    }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& g) {
  Tensor dx(g.n(), g.c(), h_, w_);
  const size_t hw = dx.plane();
  const double inv = 1.0 / static_cast<double>(hw);
  for (int n = 0; n < g.n(); ++n)
    for (int c = 0; c < g.c(); ++c) {
      double* p = dx.sample(n) + c * hw;
      const double v = g.at(n, c, 0, 0) * inv;
      for (size_t i = 0; i < hw; ++i) p[i] = v;
    }
  return dx;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Linear::Linear(std::string name, int in_features, int out_features, bool bias, Rng& rng)
    : in_(in_features),
      out_(out_features),
      has_bias_(bias),
      weight_(name + ".weight", ParamKind::Weight, static_cast<size_t>(in_features) * out_features),
      bias_(name + ".bias", ParamKind::Weight, bias ? static_cast<size_t>(out_features) : 0) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  for (double& v : weight_.value) v = rng.uniform(-bound, bound);
  for (double& v : bias_.value) v = rng.uniform(-bound, bound);
}

void Linear::collect(std::vector<Param*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

Tensor Linear::forward(const Tensor& x, Mode mode) {
  if (static_cast<size_t>(x.c()) * x.plane() != static_cast<size_t>(in_))
    throw StructuralError("linear " + weight_.name + ": expected " + std::to_string(in_) +
                          " features, got " + x.shape_string());
  if (mode != Mode::Eval) input_ = x;
  Tensor y(x.n(), out_, 1, 1);
  Eigen::Map<const Matrix> w(weight_.value.data(), out_, in_);
  auto ym = y.as_matrix();
  ym.noalias() = x.as_matrix() * w.transpose();
  if (has_bias_) {
    Eigen::Map<const Eigen::RowVectorXd> b(bias_.value.data(), out_);
    ym.rowwise() += b;
  }
  return y;
}

Tensor Linear::backward(const Tensor& g) {
  Eigen::Map<const Matrix> w(weight_.value.data(), out_, in_);
  Eigen::Map<Matrix> dw(weight_.grad.data(), out_, in_);
  const auto gm = g.as_matrix();
  dw.noalias() += gm.transpose() * input_.as_matrix();
  if (has_bias_) {
    Eigen::Map<Eigen::RowVectorXd> db(bias_.grad.data(), out_);
    db += gm.colwise().sum();
  }
  Tensor dx(input_.n(), input_.c(), input_.h(), input_.w());
  dx.as_matrix().noalias() = gm * w;
  return dx;
}

// ---------------------------------------------------------------------------
// Containers
// ---------------------------------------------------------------------------

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, mode);
  return h;
}

Tensor Sequential::backward(const Tensor& g) {
  Tensor d = g;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d);
  return d;
}

void Sequential::collect(std::vector<Param*>& out) {
  for (auto& l : layers_) l->collect(out);
}

void Sequential::clear_cache() {
  for (auto& l : layers_) l->clear_cache();
}

Residual::Residual(LayerPtr body, LayerPtr shortcut, bool post_relu)
    : body_(std::move(body)), shortcut_(std::move(shortcut)), post_relu_(post_relu) {}

Tensor Residual::forward(const Tensor& x, Mode mode) {
  Tensor y = body_->forward(x, mode);
  if (shortcut_) {
    add_into(y, shortcut_->forward(x, mode));
  } else {
    if (!y.same_shape(x)) throw StructuralError("identity shortcut shape mismatch " + x.shape_string());
    add_into(y, x);
  }
  if (post_relu_)
    for (double& v : y.vec()) v = std::max(v, 0.0);
  if (mode != Mode::Eval) output_ = y;
  return y;
}

Tensor Residual::backward(const Tensor& g) {
  Tensor gy = g;
  if (post_relu_) {
    const double* y = output_.data();
    double* d = gy.data();
    for (size_t i = 0; i < gy.size(); ++i)
      if (y[i] <= 0.0) d[i] = 0.0;
  }
  Tensor dx = body_->backward(gy);
  if (shortcut_)
    add_into(dx, shortcut_->backward(gy));
  else
    add_into(dx, gy);
  return dx;
}

void Residual::collect(std::vector<Param*>& out) {
  body_->collect(out);
  if (shortcut_) shortcut_->collect(out);
}

void Residual::clear_cache() {
  body_->clear_cache();
  if (shortcut_) shortcut_->clear_cache();
  output_ = Tensor();
}

}  // namespace nn
}  // namespace sslnas
