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

#ifndef SSLNAS_NN_LAYERS_HPP_
#define SSLNAS_NN_LAYERS_HPP_

#include <memory>
#include <string>
#include <vector>

#include "sslnas/rng.hpp"
#include "sslnas/tensor.hpp"

namespace sslnas::nn {

// Train: batch statistics, running statistics updated, activations cached.
// Eval: running statistics.
// Probe: batch statistics without touching running statistics. Used to score
// candidate ops that are not on the sampled path.
enum class Mode { Train, Eval, Probe };

enum class ParamKind {
  Weight,  // conv/linear weights and biases; subject to weight decay
  Norm,    // normalization scale/shift; never decayed
  State,   // running statistics; not optimized
};

struct Param {
  std::string name;
  ParamKind kind = ParamKind::Weight;
  std::vector<double> value;
  std::vector<double> grad;

  Param() = default;
  Param(std::string n, ParamKind k, size_t size, double fill = 0.0)
      : name(std::move(n)), kind(k), value(size, fill), grad(k == ParamKind::State ? 0 : size, 0.0) {}
  bool trainable() const { return kind != ParamKind::State; }
};

// A differentiable layer. backward() must follow the matching forward() and
// accumulates into parameter gradients.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  // Appends every parameter (including running statistics), names prefixed.
  virtual void collect(std::vector<Param*>& out) { (void)out; }
  // Drops cached activations.
  virtual void clear_cache() {}
};

using LayerPtr = std::unique_ptr<Layer>;

class Identity final : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode) override { return x; }
  Tensor backward(const Tensor& g) override { return g; }
};

// 2-D convolution without bias, "same" padding (k / 2).
class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int groups, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Param*>& out) override { out.push_back(&weight_); }
  void clear_cache() override { input_ = Tensor(); }

  Param& weight() { return weight_; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  bool depthwise() const { return groups_ == in_ && groups_ == out_; }
  Tensor forward_depthwise(const Tensor& x) const;
  Tensor forward_general(const Tensor& x) const;
  Tensor backward_depthwise(const Tensor& g);
  Tensor backward_general(const Tensor& g);
  void im2col(const double* src, int h, int w, int c0, int cg, Matrix& col) const;
  void col2im(const Matrix& col, int h, int w, int c0, int cg, double* dst) const;
  int out_size(int s) const { return (s + 2 * pad_ - k_) / stride_ + 1; }

  int in_, out_, k_, stride_, groups_, pad_;
  Param weight_;  // [out][in/groups][k][k]
  Tensor input_;
};

class BatchNorm2d final : public Layer {
 public:
  BatchNorm2d(std::string name, int channels, double momentum = 0.1, double eps = 1e-5);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Param*>& out) override;
  void clear_cache() override { xhat_ = Tensor(); }

  Param& gamma() { return gamma_; }
  Param& beta() { return beta_; }
  Param& running_mean() { return running_mean_; }
  Param& running_var() { return running_var_; }

 private:
  int c_;
  double momentum_, eps_;
  Param gamma_, beta_, running_mean_, running_var_;
  Tensor xhat_;
  std::vector<double> inv_std_;
  bool batch_stats_ = true;
};

// max(0, x), optionally clipped at `cap`.
class ReLU final : public Layer {
 public:
  explicit ReLU(double cap = 0.0) : cap_(cap) {}
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void clear_cache() override { input_ = Tensor(); }

 private:
  double cap_;  // 0 means uncapped
  Tensor input_;
};

class MaxPool2d final : public Layer {
 public:
  MaxPool2d(int kernel, int stride) : k_(kernel), stride_(stride), pad_(kernel / 2) {}
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void clear_cache() override { argmax_.clear(); }

 private:
  int k_, stride_, pad_;
  int in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
  std::vector<size_t> argmax_;
};

class GlobalAvgPool final : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  int h_ = 0, w_ = 0;
};

// Fully connected layer over flattened features; output is N x out x 1 x 1.
class Linear final : public Layer {
 public:
  Linear(std::string name, int in_features, int out_features, bool bias, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Param*>& out) override;
  void clear_cache() override { input_ = Tensor(); }

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  int in_, out_;
  bool has_bias_;
  Param weight_;  // [out][in]
  Param bias_;
  Tensor input_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;
  void add(LayerPtr layer) { layers_.push_back(std::move(layer)); }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Param*>& out) override;
  void clear_cache() override;
  size_t size() const { return layers_.size(); }
  Layer& at(size_t i) { return *layers_.at(i); }

 private:
  std::vector<LayerPtr> layers_;
};

// y = body(x) + shortcut(x), then an optional ReLU. A null shortcut is the
// identity.
class Residual final : public Layer {
 public:
  Residual(LayerPtr body, LayerPtr shortcut, bool post_relu);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Param*>& out) override;
  void clear_cache() override;

 private:
  LayerPtr body_;
  LayerPtr shortcut_;
  bool post_relu_;
  Tensor output_;
};

}  // namespace sslnas::nn

#endif  // SSLNAS_NN_LAYERS_HPP_
