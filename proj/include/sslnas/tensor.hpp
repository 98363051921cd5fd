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

#ifndef SSLNAS_TENSOR_HPP_
#define SSLNAS_TENSOR_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sslnas {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Dense NCHW tensor of doubles. Feature batches use h = w = 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0)
      : n_(n), c_(c), h_(h), w_(w), data_(static_cast<size_t>(n) * c * h * w, fill) {}

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  size_t size() const { return data_.size(); }
  size_t plane() const { return static_cast<size_t>(h_) * w_; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& at(int n, int c, int y, int x) {
    return data_[((static_cast<size_t>(n) * c_ + c) * h_ + y) * w_ + x];
  }
  double at(int n, int c, int y, int x) const {
    return data_[((static_cast<size_t>(n) * c_ + c) * h_ + y) * w_ + x];
  }

  double* sample(int n) { return data_.data() + static_cast<size_t>(n) * c_ * plane(); }
  const double* sample(int n) const { return data_.data() + static_cast<size_t>(n) * c_ * plane(); }

  bool same_shape(const Tensor& o) const { return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
  std::string shape_string() const;

  // N x (C*H*W) row-major view of the data.
  Eigen::Map<Matrix> as_matrix() { return {data_.data(), n_, static_cast<Eigen::Index>(c_) * h_ * w_}; }
  Eigen::Map<const Matrix> as_matrix() const {
    return {data_.data(), n_, static_cast<Eigen::Index>(c_) * h_ * w_};
  }

  static Tensor from_matrix(const Matrix& m);

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.same_shape(b) && a.data_ == b.data_; }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

}  // namespace sslnas

#endif  // SSLNAS_TENSOR_HPP_
