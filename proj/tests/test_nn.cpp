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

#include "doctest.h"
#include "gradcheck.hpp"
#include "sslnas/error.hpp"
#include "sslnas/nn/network.hpp"

using namespace sslnas;
using sslnas::testing::check_layer;
using sslnas::testing::random_tensor;

namespace {

// Direct-loop convolution used as the reference for all conv paths.
Tensor reference_conv(const Tensor& x, const std::vector<double>& w, int out, int k, int stride, int groups) {
  const int pad = k / 2;
  const int oh = (x.h() + 2 * pad - k) / stride + 1, ow = (x.w() + 2 * pad - k) / stride + 1;
  const int cin_g = x.c() / groups, cout_g = out / groups;
  Tensor y(x.n(), out, oh, ow);
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < out; ++o) {
      const int g = o / cout_g;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double s = 0.0;
          for (int ci = 0; ci < cin_g; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || ix < 0 || iy >= x.h() || ix >= x.w()) continue;
                s += w[((static_cast<size_t>(o) * cin_g + ci) * k + ky) * k + kx] * x.at(n, g * cin_g + ci, iy, ix);
              }
          y.at(n, o, oy, ox) = s;
        }
    }
  return y;
}

}  // namespace

TEST_CASE("conv2d forward matches direct loops on every code path") {
  Rng rng(1);
  struct Case {
    int in, out, k, stride, groups;
  };
  for (Case c : {Case{3, 5, 3, 2, 1}, Case{4, 6, 1, 1, 1}, Case{6, 6, 5, 1, 6}, Case{6, 6, 3, 2, 6}, Case{4, 8, 3, 1, 2},
                 Case{3, 4, 7, 2, 1}}) {
    nn::Conv2d conv("c", c.in, c.out, c.k, c.stride, c.groups, rng);
    Tensor x = random_tensor(2, c.in, 9, 7, rng);
    Tensor y = conv.forward(x, nn::Mode::Eval);
    Tensor ref = reference_conv(x, conv.weight().value, c.out, c.k, c.stride, c.groups);
    REQUIRE(y.same_shape(ref));
    for (size_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d gradients match central differences") {
  Rng rng(2);
  for (int groups : {1, 2, 4}) {
    nn::Conv2d conv("c", 4, 4, 3, 1, groups, rng);
    auto r = check_layer(conv, random_tensor(2, 4, 6, 6, rng), rng);
    CHECK(r.max_rel < 1e-6);
  }
  nn::Conv2d strided("s", 3, 5, 5, 2, 1, rng);
  CHECK(check_layer(strided, random_tensor(2, 3, 7, 8, rng), rng).max_rel < 1e-6);
  nn::Conv2d dw("d", 5, 5, 7, 2, 5, rng);
  CHECK(check_layer(dw, random_tensor(2, 5, 9, 9, rng), rng).max_rel < 1e-6);
  nn::Conv2d pw("p", 5, 3, 1, 1, 1, rng);
  CHECK(check_layer(pw, random_tensor(3, 5, 4, 4, rng), rng).max_rel < 1e-6);
}

TEST_CASE("batchnorm gradients and running statistics") {
  Rng rng(3);
  nn::BatchNorm2d bn("bn", 3);
  for (double& g : bn.gamma().value) g = rng.uniform(0.5, 1.5);
  for (double& b : bn.beta().value) b = rng.normal();
  Tensor x = random_tensor(4, 3, 3, 3, rng);
  CHECK(check_layer(bn, x, rng).max_rel < 1e-5);

  nn::BatchNorm2d fresh("f", 1);
  Tensor one(2, 1, 1, 2);
  one.vec() = {1.0, 2.0, 3.0, 4.0};
  fresh.forward(one, nn::Mode::Train);
  // mean 2.5, unbiased variance 5/3, momentum 0.1
  CHECK(fresh.running_mean().value[0] == doctest::Approx(0.25));
  CHECK(fresh.running_var().value[0] == doctest::Approx(0.9 + 0.1 * 5.0 / 3.0));

  const auto mean_before = fresh.running_mean().value;
  fresh.forward(one, nn::Mode::Probe);
  CHECK(fresh.running_mean().value == mean_before);

  fresh.forward(one, nn::Mode::Eval);
  CHECK_THROWS_AS(fresh.backward(one), StructuralError);
}

TEST_CASE("pooling, relu6 and linear gradients") {
  Rng rng(4);
  nn::MaxPool2d pool(3, 2);
  CHECK(check_layer(pool, random_tensor(2, 2, 7, 6, rng), rng).max_rel < 1e-6);
  nn::GlobalAvgPool gap;
  CHECK(check_layer(gap, random_tensor(2, 3, 4, 5, rng), rng).max_rel < 1e-6);
  nn::ReLU relu6(6.0);
  Tensor x = random_tensor(2, 2, 3, 3, rng);
  for (double& v : x.vec()) v *= 4.0;
  CHECK(check_layer(relu6, x, rng).max_rel < 1e-6);
  nn::Linear fc("fc", 6, 4, true, rng);
  CHECK(check_layer(fc, random_tensor(3, 6, 1, 1, rng), rng).max_rel < 1e-6);
}

// Small steps keep the perturbations from crossing ReLU kinks, which BN
// couples across the whole batch.
TEST_CASE("mbconv and residual blocks backpropagate correctly") {
  Rng rng(5);
  constexpr double kEps = 1e-7;
  auto plain = nn::make_mbconv("m", 4, 6, 3, 3, 2, false, rng);
  CHECK(check_layer(*plain, random_tensor(3, 4, 6, 6, rng), rng, kEps).max_rel < 1e-4);
  auto res = nn::make_mbconv("r", 4, 4, 5, 6, 1, true, rng);
  CHECK(check_layer(*res, random_tensor(3, 4, 5, 5, rng), rng, kEps).max_rel < 1e-4);

  CellPlan basic{0, CellOp::basic(), 4, 8, 0, 2, 2, false};
  auto b = nn::make_cell("b", basic, rng);
  CHECK(check_layer(*b, random_tensor(3, 4, 6, 6, rng), rng, kEps).max_rel < 1e-4);
  CellPlan bottle{0, CellOp::bottleneck(), 8, 8, 4, 1, 2, true};
  auto bt = nn::make_cell("bt", bottle, rng);
  CHECK(check_layer(*bt, random_tensor(3, 8, 4, 4, rng), rng, kEps).max_rel < 1e-4);
}

TEST_CASE("zero cells are exact identities") {
  Rng rng(6);
  CellPlan zero{1, CellOp::zero(), 8, 8, 0, 1, 1, true};
  auto z = nn::make_cell("z", zero, rng);
  Tensor x = random_tensor(2, 8, 4, 4, rng);
  CHECK(z->forward(x, nn::Mode::Eval) == x);
}

TEST_CASE("backbone parameter count agrees with the analytic counter") {
  Rng rng(7);
  for (const auto& arch : {searched_arch(0.25, std::vector<CellOp>(21, CellOp::mbconv(5, 6))),
                           mobilenet_v2(0.5), resnet_like({{1, 1, 1, 1}, OpKind::Bottleneck, 2}, 0.25),
                           resnet_like({{1, 2, 1, 1}, OpKind::Basic, 4}, 0.5)}) {
    nn::Backbone net(arch, rng);
    std::vector<nn::Param*> ps;
    net.collect(ps);
    CHECK(nn::count_trainable(ps) == count_params(arch));
  }
}

TEST_CASE("backbone feature dimension and input checks") {
  Rng rng(8);
  std::vector<CellOp> ops(21, CellOp::mbconv(3, 3));
  nn::Backbone net(searched_arch(0.25, ops), rng);
  Tensor y = net.forward(random_tensor(2, 3, 32, 32, rng), nn::Mode::Train);
  CHECK(y.c() == scale_channels(320, 0.25));
  CHECK(y.h() == 1);
  CHECK_THROWS_AS(net.forward(random_tensor(1, 3, 8, 8, rng), nn::Mode::Eval), StructuralError);
  CHECK_THROWS_AS(net.forward(random_tensor(1, 1, 32, 32, rng), nn::Mode::Eval), StructuralError);
}
