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

#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "micro_model.hpp"
#include "sslnas/error.hpp"
#include "sslnas/supernet.hpp"

using namespace sslnas;
using sslnas::testing::random_tensor;

TEST_CASE("path probabilities") {
  const std::vector<double> a = {0.3, -1.0, 2.0, 0.0};
  const auto p = path_probabilities(a);
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<double> shifted = a;
  for (double& v : shifted) v += 700.0;
  const auto q = path_probabilities(shifted);
  for (size_t i = 0; i < p.size(); ++i) CHECK(q[i] == doctest::Approx(p[i]).epsilon(1e-12));
  const std::vector<double> flat(7, 0.0);
  for (double v : path_probabilities(flat)) CHECK(v == doctest::Approx(1.0 / 7.0));
  const std::vector<double> bad = {0.0, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(path_probabilities(bad), NumericError);
}

TEST_CASE("arch_gradient is the softmax pullback and sums to zero") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> alpha(7), g(7);
    for (double& v : alpha) v = rng.normal();
    for (double& v : g) v = rng.normal(0.0, 10.0);
    const auto p = path_probabilities(alpha);
    const auto grad = arch_gradient(p, g);
    CHECK(std::abs(std::accumulate(grad.begin(), grad.end(), 0.0)) < 1e-12);
    // d/d alpha of sum_j g_j p_j(alpha), by central differences.
    for (size_t k = 0; k < alpha.size(); ++k) {
      auto f = [&](double delta) {
        auto a2 = alpha;
        a2[k] += delta;
        const auto p2 = path_probabilities(a2);
        return std::inner_product(p2.begin(), p2.end(), g.begin(), 0.0);
      };
      const double fd = (f(1e-6) - f(-1e-6)) / 2e-6;
      CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-6).scale(10.0));
    }
  }
  const std::vector<double> p2 = {0.5, 0.5}, g1 = {1.0};
  CHECK_THROWS_AS(arch_gradient(p2, g1), DomainError);
}

TEST_CASE("micro-model architecture gradient matches finite differences of the expected loss") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    testing::MicroModel m(seed);
    const auto r = m.check();
    CHECK(r.max_rel_error < 1e-6);
    CHECK(std::abs(r.gradient_sum) < 1e-12);
  }
}

TEST_CASE("gate sampling follows the path probabilities") {
  Supernet net(build_default_space(0.25), 4);
  auto& edges = net.edges();
  Rng init(8);
  for (auto& e : edges)
    for (double& a : e.alpha) a = init.normal();
  constexpr int kDraws = 20000;
  std::vector<std::vector<int>> counts(edges.size());
  for (size_t i = 0; i < edges.size(); ++i) counts[i].assign(edges[i].candidates.size(), 0);
  Rng rng(9);
  for (int t = 0; t < kDraws; ++t) {
    const GateSample g = net.sample_gates(rng);
    for (size_t i = 0; i < edges.size(); ++i) ++counts[i][static_cast<size_t>(g.chosen[i])];
  }
  for (size_t i = 0; i < edges.size(); ++i) {
    const auto p = path_probabilities(edges[i]);
    for (size_t k = 0; k < p.size(); ++k) {
      const double sigma = std::sqrt(p[k] * (1.0 - p[k]) / kDraws);
      // 4 sigma keeps the family-wise false-alarm rate small over ~140 cells.
      CHECK(std::abs(counts[i][k] / static_cast<double>(kDraws) - p[k]) < 4.0 * sigma + 1e-12);
    }
  }
}

TEST_CASE("derivation takes the argmax with ties to the first candidate") {
  Supernet net(build_default_space(0.5), 1);
  ArchitectureSpec a = derive_architecture(net);
  for (const auto& c : a.cells) CHECK(c.op == CellOp::mbconv(3, 3));
  net.edges()[3].alpha.back() = 1.0;         // Zero
  net.edges()[0].alpha[5] = 0.5;             // MB6 7x7
  net.edges()[7].alpha[1] = net.edges()[7].alpha[4] = 2.0;  // tie: MB3 5x5 wins
  a = derive_architecture(net);
  CHECK(a.cells[3].op == CellOp::zero());
  CHECK(a.cells[0].op == CellOp::mbconv(7, 6));
  CHECK(a.cells[7].op == CellOp::mbconv(5, 3));
  CHECK(a.width_multiplier == 0.5);
  CHECK(parse_arch(serialize_arch(a)) == a);
}

TEST_CASE("sampled-path and all-paths estimators agree on the sampled candidate") {
  Supernet net(build_default_space(0.25), 6);
  Rng rng(10);
  for (auto& e : net.edges())
    for (double& a : e.alpha) a = 0.3 * rng.normal();
  const Tensor x = random_tensor(6, 3, 16, 16, rng);
  const GateSample g = net.sample_gates(rng);
  const Tensor y = net.forward(g, x, nn::Mode::Train);
  net.backward(random_tensor(y.n(), y.c(), 1, 1, rng));
  const auto sampled = net.gate_gradients(GateEstimator::SampledPath, 0.0);
  const auto all = net.gate_gradients(GateEstimator::AllPaths, 0.0);
  const auto score = net.gate_gradients(GateEstimator::ScoreFunction, 2.0);
  for (size_t i = 0; i < all.size(); ++i) {
    const auto c = static_cast<size_t>(g.chosen[i]);
    for (size_t k = 0; k < all[i].size(); ++k) {
      if (k == c) {
        CHECK(sampled[i][k] == doctest::Approx(all[i][k] / g.probs[i][k]).epsilon(1e-10));
        CHECK(score[i][k] == doctest::Approx(2.0 / g.probs[i][k]));
      } else {
        CHECK(sampled[i][k] == 0.0);
        CHECK(score[i][k] == 0.0);
      }
    }
    if (net.edges()[i].candidates.back().kind == OpKind::Zero) CHECK(all[i].back() == 0.0);
  }
}

TEST_CASE("zero gates make the edge an identity") {
  Supernet net(build_default_space(0.25), 3);
  Rng rng(4);
  const Tensor x = random_tensor(4, 3, 16, 16, rng);
  std::vector<int> chosen(21, 0);
  const Tensor base = net.forward(net.fixed_gates(chosen), x, nn::Mode::Eval);
  // Edges 1..3 are non-initial cells of stage 1; turning them off changes the
  // output, turning them back on restores it exactly.
  for (int e : {1, 2, 3}) chosen[static_cast<size_t>(e)] = 6;
  const Tensor skipped = net.forward(net.fixed_gates(chosen), x, nn::Mode::Eval);
  double diff = 0.0;
  for (size_t i = 0; i < base.size(); ++i) diff += std::abs(base.data()[i] - skipped.data()[i]);
  CHECK(diff > 0.0);
  for (int e : {1, 2, 3}) chosen[static_cast<size_t>(e)] = 0;
  const Tensor again = net.forward(net.fixed_gates(chosen), x, nn::Mode::Eval);
  CHECK(again.vec() == base.vec());
  chosen[0] = 6;
  CHECK_THROWS(net.fixed_gates(chosen));
}
