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
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "doctest.h"
#include "micro_run.hpp"
#include "sslnas/error.hpp"
#include "sslnas/trainer.hpp"

using namespace sslnas;
namespace fs = std::filesystem;

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0.3, 0, 100) == 0.3);
  CHECK(cosine_lr(0.3, 100, 100) == 0.0);
  CHECK(cosine_lr(0.3, 50, 100) == 0.15);
  CHECK(cosine_lr(0.3, 60, 120) == 0.15);
  CHECK(cosine_lr(1.0, 25, 100) == doctest::Approx((1.0 + std::cos(std::numbers::pi / 4)) / 2));
  CHECK_THROWS_AS(cosine_lr(0.3, 101, 100), DomainError);
  CHECK_THROWS_AS(cosine_lr(0.3, -1, 100), DomainError);
  CHECK_THROWS_AS(cosine_lr(0.3, 0, 0), DomainError);
}

TEST_CASE("SGD follows the momentum-buffer recurrence; decay skips norms") {
  nn::Param w("layer.conv.weight", nn::ParamKind::Weight, 2);
  w.value = {1.0, 2.0};
  w.grad = {0.5, -1.0};
  nn::Param gamma("layer.bn.gamma", nn::ParamKind::Norm, 1, 1.0);
  gamma.grad = {0.2};
  nn::Param mean("layer.bn.running_mean", nn::ParamKind::State, 1, 0.7);
  OptimizerState st;
  const std::vector<nn::Param*> ps = {&w, &gamma, &mean};
  sgd_step(ps, 0.1, 0.9, 0.01, st);
  // First step: buf = g + wd * w.
  CHECK(w.value[0] == doctest::Approx(1.0 - 0.1 * (0.5 + 0.01)).epsilon(1e-15));
  CHECK(w.value[1] == doctest::Approx(2.0 - 0.1 * (-1.0 + 0.02)).epsilon(1e-15));
  CHECK(gamma.value[0] == doctest::Approx(1.0 - 0.1 * 0.2).epsilon(1e-15));
  CHECK(mean.value[0] == 0.7);
  const double w0 = w.value[0], buf0 = 0.5 + 0.01;
  sgd_step(ps, 0.1, 0.9, 0.01, st);
  CHECK(w.value[0] == doctest::Approx(w0 - 0.1 * (0.9 * buf0 + 0.5 + 0.01 * w0)).epsilon(1e-15));
  CHECK(st.sgd_steps == 2);
  const auto decayed = decayed_parameter_names(ps);
  CHECK(decayed == std::vector<std::string>{"layer.conv.weight"});
}

TEST_CASE("weight decay audit over a whole supernet") {
  TrainConfig cfg = testing::micro_config(0);
  SearchState s(build_default_space(0.25), cfg);
  std::vector<nn::Param*> ps = s.net.params();
  s.head.collect(ps);
  const auto decayed = decayed_parameter_names(ps);
  const std::set<std::string> names(decayed.begin(), decayed.end());
  int norms = 0;
  for (const nn::Param* p : ps) {
    const bool is_norm = p->kind != nn::ParamKind::Weight;
    norms += is_norm;
    CHECK(names.count(p->name) == (is_norm ? 0u : 1u));
    if (p->name.find(".bn.") != std::string::npos) CHECK(is_norm);
  }
  CHECK(norms > 0);
}

TEST_CASE("config documents round-trip and reject unknown fields") {
  TrainConfig c;
  c.batch_size = 17;
  c.estimator = GateEstimator::AllPaths;
  c.augment.hue = 0.05;
  const std::string text = config_to_json(c);
  CHECK(config_to_json(config_from_json(text)) == text);
  CHECK(config_hash(config_from_json(text)) == config_hash(c));
  c.lr_alpha = 0.2;
  CHECK(config_hash(c) != config_hash(config_from_json(text)));
  CHECK_THROWS_AS(config_from_json(R"({"batchsize": 3})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"batch_size": 0})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"estimator": "gumbel"})"), ConfigError);
  CHECK(config_from_json(R"({"warmup_epochs": 2})").warmup_epochs == 2);
}

TEST_CASE("alpha stays bit-constant through warmup") {
  const Dataset data = testing::micro_data();
  const TrainConfig cfg = testing::micro_config(1);
  SearchState s(build_default_space(0.25), cfg);
  Rng rng(3);
  for (auto& e : s.net.edges())
    for (double& a : e.alpha) a = rng.normal();
  std::vector<std::vector<double>> before;
  for (const auto& e : s.net.edges()) before.push_back(e.alpha);
  const auto w_before = s.net.params().front()->value;
  warmup_phase(s, data, compute_normalization(data), cfg);
  for (size_t i = 0; i < before.size(); ++i) CHECK(s.net.edges()[i].alpha == before[i]);
  CHECK(s.net.params().front()->value != w_before);
  CHECK(s.opt.adam_steps == 0);
}

TEST_CASE("search moves alpha and derives a valid architecture") {
  const Dataset data = testing::micro_data();
  const TrainConfig cfg = testing::micro_config(2);
  SearchState s(build_default_space(0.25), cfg);
  const Normalization norm = compute_normalization(data);
  CHECK_THROWS_AS(search_phase(s, data, norm, cfg), DomainError);
  warmup_phase(s, data, norm, cfg);
  search_phase(s, data, norm, cfg);
  CHECK(s.phase == Phase::Search);
  CHECK(s.opt.adam_steps > 0);
  bool moved = false;
  for (const auto& e : s.net.edges())
    for (double a : e.alpha) moved = moved || a != 0.0;
  CHECK(moved);
  CHECK_NOTHROW(validate_arch(derive_architecture(s.net)));
}

TEST_CASE("checkpoint container round-trips and detects damage") {
  const fs::path dir = fs::temp_directory_path() / "sslnas_ckpt_test";
  fs::remove_all(dir);
  Checkpoint ck;
  ck.phase = "search";
  ck.epoch = 3;
  ck.config_hash = 0xfeedULL;
  ck.space_hash = "abc";
  ck.alphas = {{0.1, -0.2}, {1e-300, 3.0}};
  ck.tensors["w"] = {1.0, 2.0, -0.0};
  ck.counters["sgd_steps"] = 12;
  save_checkpoint(dir / "ck", ck);
  CHECK(!fs::exists(dir / "ck.tmp"));
  CHECK(load_checkpoint(dir / "ck") == ck);
  CHECK(load_checkpoint(dir / "ck", 0xfeed) == ck);
  try {
    load_checkpoint(dir / "ck", 0xbeef);
    FAIL("config hash mismatch accepted");
  } catch (const IntegrityError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("feed") != std::string::npos);
    CHECK(msg.find("beef") != std::string::npos);
  }
  std::string bytes;
  {
    std::ifstream in(dir / "ck", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(dir / "bad", std::ios::binary | std::ios::trunc);
    out << b;
  };
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  write(flipped);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad"), IntegrityError);
  write(bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(load_checkpoint(dir / "bad"), IntegrityError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("resumed search equals the uninterrupted run") {
  const fs::path dir = fs::temp_directory_path() / "sslnas_resume_test";
  fs::remove_all(dir);
  const auto r = testing::compare_resume(dir, 5);
  CHECK(r.alphas_equal);
  CHECK(r.params_equal);
  CHECK(r.optimizer_equal);
  CHECK(r.losses_equal);
  fs::remove_all(dir);
}

TEST_CASE("fixed-topology pretraining and supervised training") {
  const Dataset data = testing::micro_data();
  TrainConfig cfg = testing::micro_config(4);
  cfg.pretrain_epochs = 2;
  cfg.supervised_epochs = 2;
  const Normalization norm = compute_normalization(data);
  Rng rng(1);
  const ArchitectureSpec arch = sample_searched_variant(rng, 0.25);
  ModelState pre(arch, cfg, Phase::Pretrain);
  const double before = evaluate_ssl_loss(pre, data, norm, cfg);
  CHECK(evaluate_ssl_loss(pre, data, norm, cfg) == before);
  pretrain(pre, data, norm, cfg);
  CHECK(pre.epoch == 2);
  CHECK(std::isfinite(evaluate_ssl_loss(pre, data, norm, cfg)));

  ModelState sup(arch, cfg, Phase::Supervised, data.num_classes());
  supervised_train(sup, data, norm, cfg);
  const double acc = classify_accuracy(sup, data, norm, cfg);
  CHECK((acc >= 0.0 && acc <= 1.0));
  CHECK_THROWS_AS(ModelState(arch, cfg, Phase::Supervised, 1), DomainError);

  // Backbone weights carry over into a fresh network.
  nn::Backbone fresh(arch, rng);
  load_backbone_weights(fresh, arch, pre.checkpoint(cfg));
  std::vector<nn::Param*> a, b;
  fresh.collect(a);
  pre.backbone.collect(b);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);
  CHECK_THROWS_AS(load_backbone_weights(fresh, sample_searched_variant(rng, 0.5), pre.checkpoint(cfg)),
                  IntegrityError);
}
