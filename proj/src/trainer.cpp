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

#include "sslnas/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "sslnas/error.hpp"

namespace sslnas {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void validate(const TrainConfig& c) {
  auto need = [](bool ok, const char* field, const char* rule) {
    if (!ok) throw ConfigError(std::string(field) + ": " + rule);
  };
  need(c.warmup_epochs >= 0, "warmup_epochs", "must be >= 0");
  need(c.search_epochs >= 0, "search_epochs", "must be >= 0");
  need(c.pretrain_epochs >= 0, "pretrain_epochs", "must be >= 0");
  need(c.supervised_epochs >= 0, "supervised_epochs", "must be >= 0");
  need(c.batch_size >= 2, "batch_size", "must be >= 2");
  need(c.lr_weights >= 0, "lr_weights", "must be >= 0");
  need(c.lr_alpha >= 0, "lr_alpha", "must be >= 0");
  need(c.weight_decay >= 0, "weight_decay", "must be >= 0");
  need(c.momentum >= 0 && c.momentum < 1, "momentum", "must lie in [0, 1)");
  need(c.adam_beta1 >= 0 && c.adam_beta1 < 1, "adam_beta1", "must lie in [0, 1)");
  need(c.adam_beta2 >= 0 && c.adam_beta2 < 1, "adam_beta2", "must lie in [0, 1)");
  need(c.adam_eps > 0, "adam_eps", "must be > 0");
  need(c.alpha_split_fraction > 0 && c.alpha_split_fraction <= 0.5, "alpha_split_fraction",
       "must lie in (0, 0.5]");
  need(c.temperature > 0 && std::isfinite(c.temperature), "temperature", "must be positive");
  need(c.projection.hidden_dim > 0 && c.projection.out_dim > 0, "projection", "dims must be positive");
  try {
    validate(c.augment);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("augment: ") + e.what());
  }
}

std::string estimator_name(GateEstimator e) {
  switch (e) {
    case GateEstimator::SampledPath: return "sampled_path";
    case GateEstimator::AllPaths: return "all_paths";
    case GateEstimator::ScoreFunction: return "score_function";
  }
  return "?";
}

GateEstimator parse_estimator(const std::string& name) {
  if (name == "sampled_path") return GateEstimator::SampledPath;
  if (name == "all_paths") return GateEstimator::AllPaths;
  if (name == "score_function") return GateEstimator::ScoreFunction;
  throw ConfigError("estimator: unknown value '" + name + "'");
}

namespace {

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["warmup_epochs"] = c.warmup_epochs;
  j["search_epochs"] = c.search_epochs;
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["supervised_epochs"] = c.supervised_epochs;
  j["batch_size"] = c.batch_size;
  j["lr_weights"] = c.lr_weights;
  j["lr_alpha"] = c.lr_alpha;
  j["weight_decay"] = c.weight_decay;
  j["momentum"] = c.momentum;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["alpha_split_fraction"] = c.alpha_split_fraction;
  j["temperature"] = c.temperature;
  j["estimator"] = estimator_name(c.estimator);
  j["projection"] = {{"hidden_dim", c.projection.hidden_dim}, {"out_dim", c.projection.out_dim}};
  const AugmentConfig& a = c.augment;
  j["augment"] = {{"crop_scale", {a.crop_scale_min, a.crop_scale_max}},
                  {"crop_ratio", {a.crop_ratio_min, a.crop_ratio_max}},
                  {"hflip_prob", a.hflip_prob},
                  {"jitter_prob", a.jitter_prob},
                  {"brightness", a.brightness},
                  {"contrast", a.contrast},
                  {"saturation", a.saturation},
                  {"hue", a.hue},
                  {"grayscale_prob", a.grayscale_prob},
                  {"blur", a.blur},
                  {"output_size", a.output_size}};
  j["seed"] = c.seed;
  return j;
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& prefix = "") {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(prefix + key + ": wrong type (" + j.at(key).dump() + ")");
  }
}

void read_interval(const nlohmann::json& j, const char* key, double& lo, double& hi) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(std::string("augment.") + key + ": expected [lo, hi]");
  lo = v[0].get<double>();
  hi = v[1].get<double>();
}

}  // namespace

std::string config_to_json(const TrainConfig& cfg) { return to_json(cfg).dump(2); }

TrainConfig config_from_json(const std::string& text, const TrainConfig& base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("train config: expected an object");
  static const char* kKnown[] = {"warmup_epochs", "search_epochs", "pretrain_epochs", "supervised_epochs",
                                 "batch_size", "lr_weights", "lr_alpha", "weight_decay", "momentum",
                                 "adam_beta1", "adam_beta2", "adam_eps", "alpha_split_fraction", "temperature",
                                 "estimator", "projection", "augment", "seed"};
  for (const auto& [key, _] : j.items())
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown))
      throw ConfigError("train config: unknown field '" + key + "'");
  TrainConfig c = base;
  read(j, "warmup_epochs", c.warmup_epochs);
  read(j, "search_epochs", c.search_epochs);
  read(j, "pretrain_epochs", c.pretrain_epochs);
  read(j, "supervised_epochs", c.supervised_epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "lr_weights", c.lr_weights);
  read(j, "lr_alpha", c.lr_alpha);
  read(j, "weight_decay", c.weight_decay);
  read(j, "momentum", c.momentum);
  read(j, "adam_beta1", c.adam_beta1);
  read(j, "adam_beta2", c.adam_beta2);
  read(j, "adam_eps", c.adam_eps);
  read(j, "alpha_split_fraction", c.alpha_split_fraction);
  read(j, "temperature", c.temperature);
  read(j, "seed", c.seed);
  if (j.contains("estimator")) {
    std::string name;
    read(j, "estimator", name);
    c.estimator = parse_estimator(name);
  }
  if (j.contains("projection")) {
    const auto& p = j.at("projection");
    read(p, "hidden_dim", c.projection.hidden_dim, "projection.");
    read(p, "out_dim", c.projection.out_dim, "projection.");
  }
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    AugmentConfig& g = c.augment;
    read_interval(a, "crop_scale", g.crop_scale_min, g.crop_scale_max);
    read_interval(a, "crop_ratio", g.crop_ratio_min, g.crop_ratio_max);
    read(a, "hflip_prob", g.hflip_prob, "augment.");
    read(a, "jitter_prob", g.jitter_prob, "augment.");
    read(a, "brightness", g.brightness, "augment.");
    read(a, "contrast", g.contrast, "augment.");
    read(a, "saturation", g.saturation, "augment.");
    read(a, "hue", g.hue, "augment.");
    read(a, "grayscale_prob", g.grayscale_prob, "augment.");
    read(a, "blur", g.blur, "augment.");
    read(a, "output_size", g.output_size, "augment.");
  }
  validate(c);
  return c;
}

std::uint64_t config_hash(const TrainConfig& cfg) { return fnv1a(to_json(cfg).dump()); }

double cosine_lr(double lr0, std::int64_t t, std::int64_t T) {
  if (T < 1) throw DomainError("cosine_lr: T must be >= 1");
  if (t < 0 || t > T) throw DomainError("cosine_lr: t=" + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
  // t / T first: the midpoint ratio is then exactly 0.5 for every even T.
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * (static_cast<double>(t) / static_cast<double>(T))));
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

void sgd_step(const std::vector<nn::Param*>& params, double lr, double momentum, double weight_decay,
              OptimizerState& state) {
  for (nn::Param* p : params) {
    if (!p->trainable()) continue;
    const double wd = p->kind == nn::ParamKind::Weight ? weight_decay : 0.0;
    auto it = state.momentum.find(p->name);
    const bool fresh = it == state.momentum.end();
    if (fresh) it = state.momentum.emplace(p->name, std::vector<double>(p->value.size(), 0.0)).first;
    std::vector<double>& buf = it->second;
    if (buf.size() != p->value.size()) throw StructuralError("momentum buffer shape mismatch for " + p->name);
    for (size_t i = 0; i < p->value.size(); ++i) {
      const double d = p->grad[i] + wd * p->value[i];
      buf[i] = fresh ? d : momentum * buf[i] + d;
      p->value[i] -= lr * buf[i];
    }
  }
  ++state.sgd_steps;
}

void adam_step(std::vector<MixedEdge>& edges, const std::vector<std::vector<double>>& grads, double lr,
               const TrainConfig& cfg, OptimizerState& state) {
  if (grads.size() != edges.size()) throw DomainError("adam_step: one gradient row per edge required");
  const std::int64_t t = ++state.adam_steps;
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
  for (size_t e = 0; e < edges.size(); ++e) {
    auto& alpha = edges[e].alpha;
    if (grads[e].size() != alpha.size()) throw DomainError("adam_step: gradient length mismatch");
    const std::string key = "alpha." + std::to_string(e);
    auto& m = state.adam_m.try_emplace(key, alpha.size(), 0.0).first->second;
    auto& v = state.adam_v.try_emplace(key, alpha.size(), 0.0).first->second;
    for (size_t k = 0; k < alpha.size(); ++k) {
      const double g = grads[e][k];
      m[k] = cfg.adam_beta1 * m[k] + (1 - cfg.adam_beta1) * g;
      v[k] = cfg.adam_beta2 * v[k] + (1 - cfg.adam_beta2) * g * g;
      alpha[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.adam_eps);
    }
  }
}

std::vector<std::string> decayed_parameter_names(const std::vector<nn::Param*>& params) {
  std::vector<std::string> out;
  for (const nn::Param* p : params)
    if (p->kind == nn::ParamKind::Weight) out.push_back(p->name);
  return out;
}

std::string phase_name(Phase p) {
  switch (p) {
    case Phase::Warmup: return "warmup";
    case Phase::Search: return "search";
    case Phase::Pretrain: return "pretrain";
    case Phase::Supervised: return "supervised";
  }
  return "?";
}

Phase parse_phase(const std::string& name) {
  if (name == "warmup") return Phase::Warmup;
  if (name == "search") return Phase::Search;
  if (name == "pretrain") return Phase::Pretrain;
  if (name == "supervised") return Phase::Supervised;
  throw IntegrityError("unknown phase tag '" + name + "'");
}

std::string space_hash(const SearchSpaceSpec& space) {
  std::string s = std::to_string(space.width_multiplier);
  for (const auto& st : space.stages)
    s += "|" + std::to_string(st.num_cells) + "," + std::to_string(st.out_channels) + "," + (st.downsamples ? "d" : "s");
  s += "|stem" + std::to_string(space.stem.conv_channels) + "," + std::to_string(space.stem.block_channels);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(s)));
  return buf;
}

// ---------------------------------------------------------------------------
// Data plumbing
// ---------------------------------------------------------------------------

namespace {

// Stream keys; changing these changes every random draw.
constexpr std::uint64_t kInitKey = 0x1417;
constexpr std::uint64_t kPermKey = 0x9e27;
constexpr std::uint64_t kGateKey = 0x6a7e;
constexpr std::uint64_t kAugKey = 0xa06d;
constexpr std::uint64_t kSplitKey = 0x5b17;

std::uint64_t phase_key(Phase p) { return static_cast<std::uint64_t>(p) + 1; }

std::vector<size_t> permutation(std::vector<size_t> items, std::uint64_t seed) {
  Rng rng(seed);
  for (size_t i = items.size(); i > 1; --i)
    std::swap(items[i - 1], items[static_cast<size_t>(rng.uniform_int(0, static_cast<long>(i - 1)))]);
  return items;
}

std::vector<size_t> iota(size_t n) {
  std::vector<size_t> v(n);
  for (size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

// Full batches of `batch` (the remainder is dropped); a pool smaller than one
// batch forms a single batch.
std::vector<std::vector<size_t>> make_batches(const std::vector<size_t>& order, int batch) {
  const size_t b = static_cast<size_t>(batch);
  std::vector<std::vector<size_t>> out;
  if (order.size() < b) {
    out.push_back(order);
    return out;
  }
  for (size_t i = 0; i + b <= order.size(); i += b) out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(i + b));
  return out;
}

// 2N interleaved views [a0, b0, a1, b1, ...].
Tensor ssl_batch(const Dataset& data, const std::vector<size_t>& idx, const Normalization& norm,
                 const TrainConfig& cfg, Phase phase, int epoch) {
  std::vector<Image> views(2 * idx.size());
  const std::uint64_t base = derive_seed(cfg.seed, {kAugKey, phase_key(phase)});
  parallel_for(idx.size(), [&](size_t i) {
    Rng rng = augment_stream(base, static_cast<std::uint64_t>(epoch), idx[i]);
    auto [a, b] = augment_pair(data.images[idx[i]], cfg.augment, rng);
    views[2 * i] = std::move(a);
    views[2 * i + 1] = std::move(b);
  });
  return to_tensor(views, norm);
}

Tensor single_view_batch(const Dataset& data, const std::vector<size_t>& idx, const Normalization& norm,
                         const TrainConfig& cfg, Phase phase, int epoch) {
  std::vector<Image> views(idx.size());
  const std::uint64_t base = derive_seed(cfg.seed, {kAugKey, phase_key(phase)});
  parallel_for(idx.size(), [&](size_t i) {
    Rng rng = augment_stream(base, static_cast<std::uint64_t>(epoch), idx[i]);
    views[i] = augment(data.images[idx[i]], cfg.augment, rng);
  });
  return to_tensor(views, norm);
}

Rng gate_stream(const TrainConfig& cfg, Phase phase, int epoch, int iteration, int which) {
  return Rng(derive_seed(cfg.seed, {kGateKey, phase_key(phase), static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(which)}));
}

void append(std::vector<nn::Param*>& dst, std::vector<nn::Param*> src) { dst.insert(dst.end(), src.begin(), src.end()); }

void require_data(const Dataset& data, const char* what) {
  if (data.size() < 2) throw DataError(std::string(what) + ": dataset needs at least 2 samples, got " + std::to_string(data.size()));
}

void write_epoch_checkpoint(const TrainHooks& hooks, int global_epoch, const std::function<Checkpoint()>& make) {
  if (hooks.checkpoint_dir.empty()) return;
  save_checkpoint(hooks.checkpoint_dir / ("epoch_" + std::to_string(global_epoch)), make());
}

void store_optimizer(const OptimizerState& opt, Checkpoint& ck) {
  for (const auto& [k, v] : opt.momentum) ck.tensors["opt.momentum/" + k] = v;
  for (const auto& [k, v] : opt.adam_m) ck.tensors["opt.adam_m/" + k] = v;
  for (const auto& [k, v] : opt.adam_v) ck.tensors["opt.adam_v/" + k] = v;
  ck.counters["sgd_steps"] = opt.sgd_steps;
  ck.counters["adam_steps"] = opt.adam_steps;
}

void restore_optimizer(const Checkpoint& ck, OptimizerState& opt) {
  opt = OptimizerState();
  auto take = [&](const std::string& prefix, std::map<std::string, std::vector<double>>& dst) {
    for (const auto& [k, v] : ck.tensors)
      if (k.rfind(prefix, 0) == 0) dst[k.substr(prefix.size())] = v;
  };
  take("opt.momentum/", opt.momentum);
  take("opt.adam_m/", opt.adam_m);
  take("opt.adam_v/", opt.adam_v);
  opt.sgd_steps = ck.counters.count("sgd_steps") ? ck.counters.at("sgd_steps") : 0;
  opt.adam_steps = ck.counters.count("adam_steps") ? ck.counters.at("adam_steps") : 0;
}

void store_params(const std::vector<nn::Param*>& params, Checkpoint& ck) {
  for (const nn::Param* p : params) ck.tensors[p->name] = p->value;
}

void restore_params(const std::vector<nn::Param*>& params, const Checkpoint& ck) {
  for (nn::Param* p : params) {
    auto it = ck.tensors.find(p->name);
    if (it == ck.tensors.end()) throw IntegrityError("checkpoint lacks tensor " + p->name);
    if (it->second.size() != p->value.size())
      throw IntegrityError("checkpoint tensor " + p->name + " has " + std::to_string(it->second.size()) +
                           " values, expected " + std::to_string(p->value.size()));
    p->value = it->second;
  }
}

ProjectionHead build_head(int in, const TrainConfig& cfg, std::uint64_t key) {
  Rng rng(derive_seed(cfg.seed, {kInitKey, key}));
  return ProjectionHead(in, cfg.projection, rng);
}

nn::Backbone build_backbone(const ArchitectureSpec& arch, const TrainConfig& cfg, Phase phase) {
  Rng rng(derive_seed(cfg.seed, {kInitKey, phase_key(phase), 1}));
  return nn::Backbone(arch, rng);
}

// Supervised cross-entropy with mean reduction; returns loss, fills dlogits.
double softmax_xent(const Matrix& logits, const std::vector<int>& labels, Matrix& grad) {
  const Eigen::Index n = logits.rows();
  grad.resize(n, logits.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) z += (grad(i, k) = std::exp(logits(i, k) - mx));
    grad.row(i) /= z;
    const int y = labels[static_cast<size_t>(i)];
    loss += -(logits(i, y) - mx - std::log(z));
    grad(i, y) -= 1.0;
  }
  grad /= static_cast<double>(n);
  return loss / static_cast<double>(n);
}

}  // namespace

std::pair<std::vector<size_t>, std::vector<size_t>> alpha_split(const Dataset& data, double fraction,
                                                                std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 0.5)) throw ConfigError("alpha_split_fraction must lie in (0, 0.5]");
  std::vector<size_t> w, a;
  const std::uint64_t key = derive_seed(seed, {kSplitKey});
  for (size_t i = 0; i < data.size(); ++i) {
    const std::string& id = i < data.ids.size() ? data.ids[i] : std::to_string(i);
    const double u = static_cast<double>(mix64(fnv1a(id) ^ key) >> 11) * 0x1.0p-53;
    (u < fraction ? a : w).push_back(i);
  }
  return {std::move(w), std::move(a)};
}

// ---------------------------------------------------------------------------
// Search state
// ---------------------------------------------------------------------------

SearchState::SearchState(const SearchSpaceSpec& space, const TrainConfig& cfg)
    : net(space, derive_seed(cfg.seed, {kInitKey, 0})),
      head(build_head(net.feature_dim(), cfg, 0x4ead)) {
  validate(cfg);
}

Checkpoint SearchState::checkpoint(const TrainConfig& cfg) {
  Checkpoint ck;
  ck.phase = phase_name(phase);
  ck.epoch = epoch;
  ck.config_hash = config_hash(cfg);
  ck.space_hash = space_hash(net.space());
  for (const auto& e : net.edges()) ck.alphas.push_back(e.alpha);
  store_params(net.params(), ck);
  std::vector<nn::Param*> hp;
  head.collect(hp);
  store_params(hp, ck);
  store_optimizer(opt, ck);
  return ck;
}

void SearchState::restore(const Checkpoint& ck, const TrainConfig& cfg) {
  if (ck.config_hash != config_hash(cfg)) throw IntegrityError("checkpoint was written under a different config");
  if (ck.space_hash != space_hash(net.space())) throw IntegrityError("checkpoint search space does not match");
  const Phase p = parse_phase(ck.phase);
  if (p != Phase::Warmup && p != Phase::Search) throw IntegrityError("not a search checkpoint: " + ck.phase);
  auto& edges = net.edges();
  if (ck.alphas.size() != edges.size()) throw IntegrityError("checkpoint edge count mismatch");
  for (size_t i = 0; i < edges.size(); ++i) {
    if (ck.alphas[i].size() != edges[i].alpha.size()) throw IntegrityError("checkpoint alpha length mismatch");
    edges[i].alpha = ck.alphas[i];
  }
  restore_params(net.params(), ck);
  std::vector<nn::Param*> hp;
  head.collect(hp);
  restore_params(hp, ck);
  restore_optimizer(ck, opt);
  phase = p;
  epoch = ck.epoch;
}

namespace {

std::vector<nn::Param*> active_params(SearchState& s, const GateSample& gates) {
  std::vector<nn::Param*> ps = s.net.path_params(gates);
  std::vector<nn::Param*> hp;
  s.head.collect(hp);
  append(ps, hp);
  return ps;
}

int search_global_epoch(const SearchState& s, const TrainConfig& cfg) {
  return s.phase == Phase::Warmup ? s.epoch : cfg.warmup_epochs + s.epoch;
}

void require_finite(double loss, Phase phase, int epoch, int iteration) {
  if (!std::isfinite(loss))
    throw NumericError(phase_name(phase) + ": loss became non-finite at epoch " + std::to_string(epoch) +
                       ", iteration " + std::to_string(iteration));
}

double run_objective(const SearchObjective& objective, SearchState& s, const Dataset& data, const Normalization& norm,
                     const TrainConfig& cfg, const std::vector<size_t>& batch, const GateSample& gates,
                     const BatchContext& ctx) {
  const double loss = objective ? objective(s, data, batch, gates, ctx)
                                : contrastive_objective(s, data, norm, cfg, batch, gates, ctx);
  require_finite(loss, ctx.phase, ctx.epoch, ctx.iteration);
  return loss;
}

}  // namespace

double contrastive_objective(SearchState& s, const Dataset& data, const Normalization& norm, const TrainConfig& cfg,
                             const std::vector<size_t>& batch, const GateSample& gates, const BatchContext& ctx) {
  // The alpha side uses its own augmentation epoch key so that a sample can
  // never share views with a weight batch.
  const int key = ctx.alpha_side ? ctx.epoch + (1 << 20) : ctx.epoch;
  const Tensor x = ssl_batch(data, batch, norm, cfg, ctx.phase, key);
  const Tensor f = s.net.forward(gates, x, nn::Mode::Train);
  const Matrix z = s.head.forward(f, nn::Mode::Train);
  const LossAndGrad lg = nt_xent_with_grad({z, cfg.temperature});
  s.net.backward(s.head.backward(lg.grad));
  return lg.loss;
}

void warmup_phase(SearchState& s, const Dataset& data, const Normalization& norm, const TrainConfig& cfg,
                  const TrainHooks& hooks, const SearchObjective& objective) {
  validate(cfg);
  require_data(data, "warmup");
  if (s.phase != Phase::Warmup) return;
  const std::vector<size_t> all = iota(data.size());
  const auto steps = static_cast<std::int64_t>(make_batches(all, cfg.batch_size).size());
  const std::int64_t total = steps * cfg.warmup_epochs;
  int done = 0;
  while (s.epoch < cfg.warmup_epochs) {
    if (hooks.stop_after_epochs >= 0 && done >= hooks.stop_after_epochs) return;
    const int epoch = s.epoch;
    const auto batches =
        make_batches(permutation(all, derive_seed(cfg.seed, {kPermKey, phase_key(Phase::Warmup), static_cast<std::uint64_t>(epoch)})),
                     cfg.batch_size);
    EpochInfo info{Phase::Warmup, epoch, 0.0, 0.0, 0.0};
    for (size_t it = 0; it < batches.size(); ++it) {
      const std::int64_t t = epoch * steps + static_cast<std::int64_t>(it);
      const double lr = cosine_lr(cfg.lr_weights, t, total);
      Rng grng = gate_stream(cfg, Phase::Warmup, epoch, static_cast<int>(it), 0);
      const GateSample gates = s.net.sample_gates(grng);
      const double loss = run_objective(objective, s, data, norm, cfg, batches[it], gates,
                                        {Phase::Warmup, epoch, static_cast<int>(it), false});
      const auto ps = active_params(s, gates);
      sgd_step(ps, lr, cfg.momentum, cfg.weight_decay, s.opt);
      nn::zero_grad(ps);
      s.net.clear_cache();
      s.head.clear_cache();
      if (it == 0) info.lr_weights = lr;
      info.loss += loss / static_cast<double>(batches.size());
      if (hooks.on_step) hooks.on_step({Phase::Warmup, epoch, static_cast<int>(it), t, lr, 0.0, loss, batches[it], {}});
    }
    ++s.epoch;
    ++done;
    spdlog::debug("warmup epoch {} loss {:.6f}", epoch, info.loss);
    if (hooks.on_epoch) hooks.on_epoch(info);
    write_epoch_checkpoint(hooks, search_global_epoch(s, cfg), [&] { return s.checkpoint(cfg); });
  }
}

void search_phase(SearchState& s, const Dataset& data, const Normalization& norm, const TrainConfig& cfg,
                  const TrainHooks& hooks, const SearchObjective& objective) {
  validate(cfg);
  require_data(data, "search");
  if (s.phase == Phase::Warmup) {
    if (s.epoch < cfg.warmup_epochs) throw DomainError("search_phase requires a completed warmup");
    s.phase = Phase::Search;
    s.epoch = 0;
  }
  auto [wsplit, asplit] = alpha_split(data, cfg.alpha_split_fraction, cfg.seed);
  if (asplit.size() < 2) throw DataError("search: alpha split has " + std::to_string(asplit.size()) + " samples");
  if (wsplit.size() < 2) throw DataError("search: weight split has " + std::to_string(wsplit.size()) + " samples");
  const auto steps = static_cast<std::int64_t>(make_batches(wsplit, cfg.batch_size).size());
  const std::int64_t total = steps * cfg.search_epochs;
  const size_t abatch = std::min(asplit.size(), static_cast<size_t>(cfg.batch_size));
  int done = 0;
  while (s.epoch < cfg.search_epochs) {
    if (hooks.stop_after_epochs >= 0 && done >= hooks.stop_after_epochs) return;
    const int epoch = s.epoch;
    const auto ep = static_cast<std::uint64_t>(epoch);
    const auto batches =
        make_batches(permutation(wsplit, derive_seed(cfg.seed, {kPermKey, phase_key(Phase::Search), ep, 0})), cfg.batch_size);
    const auto aorder = permutation(asplit, derive_seed(cfg.seed, {kPermKey, phase_key(Phase::Search), ep, 1}));
    EpochInfo info{Phase::Search, epoch, 0.0, 0.0, 0.0};
    for (size_t it = 0; it < batches.size(); ++it) {
      const std::int64_t t = epoch * steps + static_cast<std::int64_t>(it);
      const double lr_w = cosine_lr(cfg.lr_weights, t, total);
      const double lr_a = cosine_lr(cfg.lr_alpha, t, total);

      // (i) weight step on the weight split.
      Rng wrng = gate_stream(cfg, Phase::Search, epoch, static_cast<int>(it), 0);
      const GateSample wg = s.net.sample_gates(wrng);
      const double loss = run_objective(objective, s, data, norm, cfg, batches[it], wg,
                                        {Phase::Search, epoch, static_cast<int>(it), false});
      auto ps = active_params(s, wg);
      sgd_step(ps, lr_w, cfg.momentum, cfg.weight_decay, s.opt);
      nn::zero_grad(ps);
      s.net.clear_cache();
      s.head.clear_cache();

      // (ii) architecture step on the alpha split.
      std::vector<size_t> aidx(abatch);
      for (size_t j = 0; j < abatch; ++j) aidx[j] = aorder[(it * abatch + j) % aorder.size()];
      Rng arng = gate_stream(cfg, Phase::Search, epoch, static_cast<int>(it), 1);
      const GateSample ag = s.net.sample_gates(arng);
      const double aloss = run_objective(objective, s, data, norm, cfg, aidx, ag,
                                         {Phase::Search, epoch, static_cast<int>(it), true});
      const auto sens = s.net.gate_gradients(cfg.estimator, aloss);
      std::vector<std::vector<double>> grads;
      grads.reserve(sens.size());
      for (size_t e = 0; e < sens.size(); ++e) grads.push_back(arch_gradient(ag.probs[e], sens[e]));
      adam_step(s.net.edges(), grads, lr_a, cfg, s.opt);
      ps = active_params(s, ag);
      nn::zero_grad(ps);
      s.net.clear_cache();
      s.head.clear_cache();

      if (it == 0) {
        info.lr_weights = lr_w;
        info.lr_alpha = lr_a;
      }
      info.loss += loss / static_cast<double>(batches.size());
      if (hooks.on_step) hooks.on_step({Phase::Search, epoch, static_cast<int>(it), t, lr_w, lr_a, loss, batches[it], aidx});
    }
    ++s.epoch;
    ++done;
    spdlog::debug("search epoch {} loss {:.6f}", epoch, info.loss);
    if (hooks.on_epoch) hooks.on_epoch(info);
    write_epoch_checkpoint(hooks, search_global_epoch(s, cfg), [&] { return s.checkpoint(cfg); });
  }
}

// ---------------------------------------------------------------------------
// Fixed-topology models
// ---------------------------------------------------------------------------

ModelState::ModelState(const ArchitectureSpec& a, const TrainConfig& cfg, Phase p, int num_classes)
    : arch(a), backbone(build_backbone(a, cfg, p)), phase(p) {
  validate(cfg);
  if (p == Phase::Pretrain) {
    head = std::make_unique<ProjectionHead>(build_head(backbone.feature_dim(), cfg, 0x4eae));
  } else if (p == Phase::Supervised) {
    if (num_classes < 2) throw DomainError("supervised model needs at least 2 classes");
    Rng rng(derive_seed(cfg.seed, {kInitKey, phase_key(p), 2}));
    classifier = std::make_unique<nn::Linear>("classifier", backbone.feature_dim(), num_classes, true, rng);
  } else {
    throw DomainError("ModelState is for pretrain or supervised phases");
  }
}

std::vector<nn::Param*> ModelState::params() {
  std::vector<nn::Param*> ps;
  backbone.collect(ps);
  if (head) head->collect(ps);
  if (classifier) classifier->collect(ps);
  return ps;
}

Checkpoint ModelState::checkpoint(const TrainConfig& cfg) {
  Checkpoint ck;
  ck.phase = phase_name(phase);
  ck.epoch = epoch;
  ck.config_hash = config_hash(cfg);
  ck.arch_json = serialize_arch(arch);
  store_params(params(), ck);
  store_optimizer(opt, ck);
  return ck;
}

void ModelState::restore(const Checkpoint& ck, const TrainConfig& cfg) {
  if (ck.config_hash != config_hash(cfg)) throw IntegrityError("checkpoint was written under a different config");
  if (parse_phase(ck.phase) != phase) throw IntegrityError("checkpoint phase " + ck.phase + " does not match");
  if (parse_arch(ck.arch_json) != arch) throw IntegrityError("checkpoint architecture does not match");
  restore_params(params(), ck);
  restore_optimizer(ck, opt);
  epoch = ck.epoch;
}

void pretrain(ModelState& s, const Dataset& data, const Normalization& norm, const TrainConfig& cfg,
              const TrainHooks& hooks) {
  validate(cfg);
  require_data(data, "pretrain");
  if (!s.head) throw DomainError("pretrain needs a model built for the pretrain phase");
  const std::vector<size_t> all = iota(data.size());
  const auto steps = static_cast<std::int64_t>(make_batches(all, cfg.batch_size).size());
  const std::int64_t total = steps * std::max(1, cfg.pretrain_epochs);
  const auto ps = s.params();
  int done = 0;
  while (s.epoch < cfg.pretrain_epochs) {
    if (hooks.stop_after_epochs >= 0 && done >= hooks.stop_after_epochs) return;
    const int epoch = s.epoch;
    const auto batches = make_batches(
        permutation(all, derive_seed(cfg.seed, {kPermKey, phase_key(Phase::Pretrain), static_cast<std::uint64_t>(epoch)})),
        cfg.batch_size);
    EpochInfo info{Phase::Pretrain, epoch, 0.0, 0.0, 0.0};
    for (size_t it = 0; it < batches.size(); ++it) {
      const std::int64_t t = epoch * steps + static_cast<std::int64_t>(it);
      const double lr = cosine_lr(cfg.lr_weights, t, total);
      const Tensor x = ssl_batch(data, batches[it], norm, cfg, Phase::Pretrain, epoch);
      const Tensor f = s.backbone.forward(x, nn::Mode::Train);
      const Matrix z = s.head->forward(f, nn::Mode::Train);
      const LossAndGrad lg = nt_xent_with_grad({z, cfg.temperature});
      require_finite(lg.loss, Phase::Pretrain, epoch, static_cast<int>(it));
      s.backbone.backward(s.head->backward(lg.grad));
      sgd_step(ps, lr, cfg.momentum, cfg.weight_decay, s.opt);
      nn::zero_grad(ps);
      s.backbone.clear_cache();
      s.head->clear_cache();
      if (it == 0) info.lr_weights = lr;
      info.loss += lg.loss / static_cast<double>(batches.size());
      if (hooks.on_step) hooks.on_step({Phase::Pretrain, epoch, static_cast<int>(it), t, lr, 0.0, lg.loss, batches[it], {}});
    }
    ++s.epoch;
    ++done;
    spdlog::debug("pretrain epoch {} loss {:.6f}", epoch, info.loss);
    if (hooks.on_epoch) hooks.on_epoch(info);
    write_epoch_checkpoint(hooks, s.epoch, [&] { return s.checkpoint(cfg); });
  }
}

void supervised_train(ModelState& s, const Dataset& data, const Normalization& norm, const TrainConfig& cfg,
                      const TrainHooks& hooks) {
  validate(cfg);
  require_data(data, "supervised");
  if (!s.classifier) throw DomainError("supervised_train needs a model built for the supervised phase");
  const Eigen::Index classes = static_cast<Eigen::Index>(s.classifier->bias().value.size());
  if (data.num_classes() != classes)
    throw DomainError("dataset has " + std::to_string(data.num_classes()) + " classes, classifier has " +
                      std::to_string(classes));
  for (int y : data.labels)
    if (y < 0 || y >= classes) throw DomainError("label " + std::to_string(y) + " outside the class range");
  const std::vector<size_t> all = iota(data.size());
  const auto steps = static_cast<std::int64_t>(make_batches(all, cfg.batch_size).size());
  const std::int64_t total = steps * std::max(1, cfg.supervised_epochs);
  const auto ps = s.params();
  int done = 0;
  while (s.epoch < cfg.supervised_epochs) {
    if (hooks.stop_after_epochs >= 0 && done >= hooks.stop_after_epochs) return;
    const int epoch = s.epoch;
    const auto batches = make_batches(
        permutation(all, derive_seed(cfg.seed, {kPermKey, phase_key(Phase::Supervised), static_cast<std::uint64_t>(epoch)})),
        cfg.batch_size);
    EpochInfo info{Phase::Supervised, epoch, 0.0, 0.0, 0.0};
    for (size_t it = 0; it < batches.size(); ++it) {
      const std::int64_t t = epoch * steps + static_cast<std::int64_t>(it);
      const double lr = cosine_lr(cfg.lr_weights, t, total);
      const Tensor x = single_view_batch(data, batches[it], norm, cfg, Phase::Supervised, epoch);
      std::vector<int> labels;
      for (size_t i : batches[it]) labels.push_back(data.labels[i]);
      const Tensor f = s.backbone.forward(x, nn::Mode::Train);
      const Tensor logits = s.classifier->forward(f, nn::Mode::Train);
      Matrix g;
      const double loss = softmax_xent(logits.as_matrix(), labels, g);
      require_finite(loss, Phase::Supervised, epoch, static_cast<int>(it));
      s.backbone.backward(s.classifier->backward(Tensor::from_matrix(g)));
      sgd_step(ps, lr, cfg.momentum, cfg.weight_decay, s.opt);
      nn::zero_grad(ps);
      s.backbone.clear_cache();
      s.classifier->clear_cache();
      if (it == 0) info.lr_weights = lr;
      info.loss += loss / static_cast<double>(batches.size());
      if (hooks.on_step) hooks.on_step({Phase::Supervised, epoch, static_cast<int>(it), t, lr, 0.0, loss, batches[it], {}});
    }
    ++s.epoch;
    ++done;
    spdlog::debug("supervised epoch {} loss {:.6f}", epoch, info.loss);
    if (hooks.on_epoch) hooks.on_epoch(info);
    write_epoch_checkpoint(hooks, s.epoch, [&] { return s.checkpoint(cfg); });
  }
}

double classify_accuracy(ModelState& s, const Dataset& data, const Normalization& norm, const TrainConfig& cfg) {
  if (!s.classifier) throw DomainError("classify_accuracy needs a supervised model");
  if (data.empty()) throw DataError("classify_accuracy: empty dataset");
  const size_t batch_size = static_cast<size_t>(cfg.batch_size);
  size_t correct = 0;
  for (size_t start = 0; start < data.size(); start += batch_size) {
    const size_t end = std::min(data.size(), start + batch_size);
    std::vector<Image> views;
    for (size_t i = start; i < end; ++i) views.push_back(resize_view(data.images[i], cfg.augment.output_size));
    const Tensor logits = s.classifier->forward(s.backbone.forward(to_tensor(views, norm), nn::Mode::Eval), nn::Mode::Eval);
    const auto m = logits.as_matrix();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      Eigen::Index arg;
      m.row(r).maxCoeff(&arg);
      if (arg == data.labels[start + static_cast<size_t>(r)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double evaluate_ssl_loss(ModelState& s, const Dataset& data, const Normalization& norm, const TrainConfig& cfg) {
  if (!s.head) throw DomainError("evaluate_ssl_loss needs a pretrain model");
  require_data(data, "evaluate_ssl_loss");
  const auto batches = make_batches(iota(data.size()), cfg.batch_size);
  double total = 0.0;
  for (const auto& b : batches) {
    // A fixed epoch key makes the views identical across calls.
    const Tensor x = ssl_batch(data, b, norm, cfg, Phase::Pretrain, -1);
    const Matrix z = s.head->forward(s.backbone.forward(x, nn::Mode::Probe), nn::Mode::Probe);
    total += nt_xent({z, cfg.temperature});
  }
  s.backbone.clear_cache();
  s.head->clear_cache();
  return total / static_cast<double>(batches.size());
}

void load_backbone_weights(nn::Backbone& backbone, const ArchitectureSpec& arch, const Checkpoint& ckpt) {
  if (ckpt.arch_json.empty()) throw IntegrityError("checkpoint does not hold a fixed-topology model");
  if (parse_arch(ckpt.arch_json) != arch) throw IntegrityError("checkpoint architecture does not match");
  std::vector<nn::Param*> ps;
  backbone.collect(ps);
  restore_params(ps, ckpt);
}

}  // namespace sslnas
