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

// A single mixed edge with two MBConv candidates feeding a softplus loss.
// Two exact objectives are differentiated with respect to alpha:
//   mixed:    L(sum_k p_k o_k(x)), gate sensitivities <dL/dy, o_k>;
//   expected: sum_k p_k L(o_k(x)), gate sensitivities L(o_k).
// In both cases arch_gradient(p, sensitivities) must equal the finite
// differences of the objective.

#ifndef SSLNAS_TESTS_MICRO_MODEL_HPP_
#define SSLNAS_TESTS_MICRO_MODEL_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sslnas/nn/network.hpp"
#include "sslnas/supernet.hpp"

namespace sslnas::testing {

class MicroModel {
 public:
  explicit MicroModel(std::uint64_t seed) : rng_(seed) {
    ops_.push_back(nn::make_mbconv("c0", 4, 4, 3, 3, 1, false, rng_));
    ops_.push_back(nn::make_mbconv("c1", 4, 4, 5, 6, 1, false, rng_));
    x_ = Tensor(3, 4, 6, 6);
    for (double& v : x_.vec()) v = rng_.normal();
    for (const auto& op : ops_) outs_.push_back(op->forward(x_, nn::Mode::Probe));
    r_ = Tensor(outs_[0].n(), outs_[0].c(), outs_[0].h(), outs_[0].w());
    for (double& v : r_.vec()) v = rng_.normal();
    alpha_ = {rng_.normal(), rng_.normal()};
  }

  struct Report {
    double max_rel_error = 0.0;
    double gradient_sum = 0.0;
  };

  Report check() const {
    Report rep;
    const auto p = path_probabilities(alpha_);

    // Mixed-output objective.
    Tensor y = mix(p);
    std::vector<double> dy(y.size());
    for (size_t i = 0; i < y.size(); ++i) dy[i] = r_.data()[i] * sigmoid(r_.data()[i] * y.data()[i]);
    std::vector<double> g_mixed(2);
    for (size_t k = 0; k < 2; ++k)
      g_mixed[k] = std::inner_product(dy.begin(), dy.end(), outs_[k].data(), 0.0);
    const auto grad_mixed = arch_gradient(p, g_mixed);

    // Expected-loss objective.
    const std::vector<double> g_expected = {loss(outs_[0]), loss(outs_[1])};
    const auto grad_expected = arch_gradient(p, g_expected);

    for (size_t k = 0; k < 2; ++k) {
      auto fd = [&](auto objective) {
        const double h = 1e-5;
        auto a = alpha_;
        a[k] += h;
        const double up = objective(path_probabilities(a));
        a[k] -= 2 * h;
        const double down = objective(path_probabilities(a));
        return (up - down) / (2 * h);
      };
      const double n_mixed = fd([&](const std::vector<double>& q) { return loss(mix(q)); });
      const double n_expected = fd([&](const std::vector<double>& q) { return q[0] * g_expected[0] + q[1] * g_expected[1]; });
      rep.max_rel_error = std::max({rep.max_rel_error, rel(grad_mixed[k], n_mixed), rel(grad_expected[k], n_expected)});
    }
    rep.gradient_sum = std::max(std::abs(grad_mixed[0] + grad_mixed[1]), std::abs(grad_expected[0] + grad_expected[1]));
    return rep;
  }

 private:
  static double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
  static double softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }
  static double rel(double a, double b) { return std::abs(a - b) / std::max(1e-12, std::abs(a) + std::abs(b)); }

  double loss(const Tensor& y) const {
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += softplus(r_.data()[i] * y.data()[i]);
    return s;
  }

  Tensor mix(const std::vector<double>& p) const {
    Tensor y = outs_[0];
    for (size_t i = 0; i < y.size(); ++i) y.data()[i] = p[0] * outs_[0].data()[i] + p[1] * outs_[1].data()[i];
    return y;
  }

  Rng rng_;
  std::vector<nn::LayerPtr> ops_;
  Tensor x_, r_;
  std::vector<Tensor> outs_;
  std::vector<double> alpha_;
};

}  // namespace sslnas::testing

#endif  // SSLNAS_TESTS_MICRO_MODEL_HPP_
