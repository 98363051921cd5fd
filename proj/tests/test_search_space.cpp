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

#include <array>
#include <numeric>

#include "doctest.h"
#include "sslnas/error.hpp"
#include "sslnas/search_space.hpp"

using namespace sslnas;

namespace {

std::int64_t conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t groups = 1) {
  return in / groups * out * k * k;
}

// BasicBlock ResNet backbone (no fc), written out from the layer recipe.
std::int64_t resnet_basic_oracle(const std::array<int, 4>& blocks) {
  std::int64_t total = conv(3, 64, 7) + 2 * 64;
  std::int64_t in = 64;
  const std::array<std::int64_t, 4> widths = {64, 128, 256, 512};
  for (size_t s = 0; s < 4; ++s) {
    const std::int64_t c = widths[s];
    for (int b = 0; b < blocks[s]; ++b) {
      total += conv(in, c, 3) + 2 * c + conv(c, c, 3) + 2 * c;
      if (in != c || (b == 0 && s > 0)) total += conv(in, c, 1) + 2 * c;
      in = c;
    }
  }
  return total;
}

// MobileNetV2 with its 1000-way classifier, from the (t, c, n, s) table.
std::int64_t mobilenet_v2_oracle() {
  struct Row {
    int t, c, n;
  };
  const Row rows[] = {{1, 16, 1}, {6, 24, 2}, {6, 32, 3}, {6, 64, 4}, {6, 96, 3}, {6, 160, 3}, {6, 320, 1}};
  std::int64_t total = conv(3, 32, 3) + 2 * 32;
  std::int64_t in = 32;
  for (const Row& r : rows)
    for (int i = 0; i < r.n; ++i) {
      const std::int64_t hidden = in * r.t;
      if (r.t != 1) total += conv(in, hidden, 1) + 2 * hidden;
      total += conv(hidden, hidden, 3, hidden) + 2 * hidden;
      total += conv(hidden, r.c, 1) + 2 * r.c;
      in = r.c;
    }
  total += conv(320, 1280, 1) + 2 * 1280;
  return total + 1280 * 1000 + 1000;
}

}  // namespace

TEST_CASE("default space layout") {
  const SearchSpaceSpec space = build_default_space(1.0);
  CHECK(space.total_cells() == kDefaultNumCells);
  CHECK(space.stages.size() == 6);
  int with_zero = 0;
  for (int i = 0; i < space.total_cells(); ++i) {
    const auto cands = candidate_set(space, i);
    const auto [stage, pos] = space.locate_cell(i);
    (void)stage;
    if (pos == 0) {
      CHECK(cands.size() == 6);
    } else {
      REQUIRE(cands.size() == 7);
      CHECK(cands.back() == CellOp::zero());
      ++with_zero;
    }
    CHECK(cands.front() == CellOp::mbconv(3, 3));
  }
  CHECK(with_zero == 15);
  CHECK_THROWS_AS(candidate_set(space, 21), DomainError);
  CHECK_THROWS_AS(build_default_space(0.0), DomainError);
}

TEST_CASE("channel scaling") {
  CHECK(scale_channels(32, 1.0) == 32);
  CHECK(scale_channels(24, 0.25) == 8);
  CHECK(scale_channels(320, 0.25) == 80);
  CHECK(scale_channels(40, 1.4) == 56);
}

TEST_CASE("handcrafted references match layer-recipe counts") {
  CHECK(count_params(resnet18()) == resnet_basic_oracle({2, 2, 2, 2}));
  CHECK(count_params(resnet18()) == 11176512);
  CHECK(count_params(resnet50()) == 23508032);
  CHECK(count_params_with_classifier(mobilenet_v2(), 1000) == mobilenet_v2_oracle());
  CHECK(mobilenet_v2_oracle() == 3504872);
  CHECK(count_params(resnet_like({{1, 1, 1, 1}, OpKind::Basic, 1}, 1.0)) == resnet_basic_oracle({1, 1, 1, 1}));
}

TEST_CASE("parameter count is additive over stem, cells and head") {
  Rng rng(3);
  for (int i = 0; i < 60; ++i) {
    ArchitectureSpec a = i % 3 == 0   ? sample_resnet_variant(rng)
                         : i % 3 == 1 ? sample_mobilenet_variant(rng)
                                      : sample_searched_variant(rng, 0.5 + 0.25 * (i % 4));
    const NetworkPlan plan = plan_network(a);
    std::int64_t sum = stem_params(plan.stem) + head_params(plan);
    for (const auto& c : plan.cells) sum += cell_params(c);
    CHECK(count_params(a) == sum);
  }
}

TEST_CASE("searched feature dimension and zero cells") {
  std::vector<CellOp> ops(21, CellOp::mbconv(7, 6));
  const auto full = searched_arch(1.0, ops);
  CHECK(plan_network(full).feature_dim == 320);
  CHECK(plan_network(searched_arch(0.25, ops)).feature_dim == 80);
  // Removing a cell removes exactly its parameters.
  const NetworkPlan plan = plan_network(full);
  ops[2] = CellOp::zero();
  CHECK(count_params(full) - count_params(searched_arch(1.0, ops)) == cell_params(plan.cells[2]));
  ops[0] = CellOp::zero();
  CHECK_THROWS_AS(searched_arch(1.0, ops), StructuralError);
}

TEST_CASE("top/bottom ratio") {
  const std::array<std::int64_t, 4> cells = {1, 2, 3, 4};
  CHECK(top_bottom_ratio(cells) == doctest::Approx(7.0 / 3.0));
  const std::array<std::int64_t, 3> odd = {1, 2, 3};
  // ceil(3/2) = 2 cells on the input side.
  CHECK(top_bottom_ratio(odd, 0, 0) == doctest::Approx(1.0));
  CHECK(top_bottom_ratio(odd, 3, 3) == doctest::Approx(1.0));
  CHECK(top_bottom_ratio(resnet18()) > 1.0);
}

TEST_CASE("samplers stay inside their configured ranges and are seeded") {
  Rng a(11), b(11);
  for (int i = 0; i < 50; ++i) {
    const auto r = sample_resnet_variant(a);
    CHECK(r == sample_resnet_variant(b));
    for (int n : r.resnet.blocks) CHECK((n >= 1 && n <= 4));
    CHECK((r.resnet.groups == 1 || r.resnet.groups == 2 || r.resnet.groups == 4));
    const auto m = sample_mobilenet_variant(a);
    CHECK(m == sample_mobilenet_variant(b));
    CHECK(m.width_multiplier >= 0.5);
    CHECK(m.width_multiplier <= 2.0);
    const auto s = sample_searched_variant(a, 0.5);
    CHECK(s == sample_searched_variant(b, 0.5));
    CHECK(s.cells.size() == 21);
  }
}

TEST_CASE("architecture documents round-trip") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto a = i % 3 == 0 ? sample_resnet_variant(rng)
                   : i % 3 == 1 ? sample_mobilenet_variant(rng)
                                : sample_searched_variant(rng, 0.25 * (1 + i % 5));
    const std::string text = serialize_arch(a);
    CHECK(parse_arch(text) == a);
    CHECK(serialize_arch(parse_arch(text)) == text);
  }
}

TEST_CASE("malformed architecture documents name the field") {
  const std::string good = serialize_arch(searched_arch(0.5, std::vector<CellOp>(21, CellOp::mbconv(5, 3))));
  auto field_of = [](const std::string& text) {
    try {
      parse_arch(text);
    } catch (const ParseError& e) {
      return e.field();
    }
    return std::string("<accepted>");
  };
  auto replace = [&](const std::string& from, const std::string& to) {
    std::string s = good;
    const auto pos = s.find(from);
    REQUIRE(pos != std::string::npos);
    return s.replace(pos, from.size(), to);
  };
  CHECK(field_of("{") == "");
  CHECK(field_of("[]") == "");
  CHECK(field_of(replace("\"schema_version\": 1", "\"schema_version\": 9")) == "/schema_version");
  CHECK(field_of(replace("\"family\": \"searched\"", "\"family\": \"vgg\"")) == "/family");
  CHECK(field_of(replace("\"kernel\": 5", "\"kernel\": 4")) == "/cells/0/op");
  CHECK(field_of(replace("\"kind\": \"mbconv\"", "\"kind\": \"conv\"")) == "/cells/0/op/kind");
  CHECK(field_of(replace("\"stage\": 0", "\"stage\": \"zero\"")) == "/cells/0/stage");
  CHECK(field_of(replace("\"width_multiplier\": 0.5", "\"width_multiplier\": \"wide\"")) == "/width_multiplier");
}
