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

#ifndef SSLNAS_TRAINER_HPP_
#define SSLNAS_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sslnas/dataset.hpp"
#include "sslnas/nn/network.hpp"
#include "sslnas/ssl.hpp"
#include "sslnas/supernet.hpp"

namespace sslnas {

// Desk-scale defaults; the full-scale recipe is 40/120/100 epochs at batch
// 640 (search) or 512 (study) on 224x224 inputs.
struct TrainConfig {
  int warmup_epochs = 4;
  int search_epochs = 12;
  int pretrain_epochs = 10;
  int supervised_epochs = 10;
  int batch_size = 64;
  double lr_weights = 0.25;
  double lr_alpha = 0.1;
  double weight_decay = 4e-5;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double alpha_split_fraction = 0.2;
  double temperature = kDefaultTemperature;
  GateEstimator estimator = GateEstimator::SampledPath;
  ProjectionHeadSpec projection;
  AugmentConfig augment;
  std::uint64_t seed = 0;
};

// Throws ConfigError naming the offending field.
void validate(const TrainConfig& cfg);

// Stable JSON rendering (fixed key order) and its inverse. Parsing starts
// from `base` so partial documents act as overrides.
std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& text, const TrainConfig& base = {});
std::uint64_t config_hash(const TrainConfig& cfg);

std::string estimator_name(GateEstimator e);
GateEstimator parse_estimator(const std::string& name);

// lr0 * (1 + cos(pi t / T)) / 2. Throws DomainError unless 0 <= t <= T, T >= 1.
double cosine_lr(double lr0, std::int64_t t, std::int64_t T);

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

// Buffers are keyed by parameter name and created on first use, so only
// parameters that have been on an active path own state.
struct OptimizerState {
  std::map<std::string, std::vector<double>> momentum;
  std::map<std::string, std::vector<double>> adam_m;
  std::map<std::string, std::vector<double>> adam_v;
  std::int64_t sgd_steps = 0;
  std::int64_t adam_steps = 0;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

// SGD with momentum (buf = mu * buf + g + wd * w; w -= lr * buf). Weight
// decay applies to ParamKind::Weight only. Running statistics are skipped.
void sgd_step(const std::vector<nn::Param*>& params, double lr, double momentum, double weight_decay,
              OptimizerState& state);

// Adam with bias correction on the architecture logits. `grads[i]` pairs with
// `edges[i].alpha`.
void adam_step(std::vector<MixedEdge>& edges, const std::vector<std::vector<double>>& grads, double lr,
               const TrainConfig& cfg, OptimizerState& state);

// Names of the parameters sgd_step applies weight decay to.
std::vector<std::string> decayed_parameter_names(const std::vector<nn::Param*>& params);

// ---------------------------------------------------------------------------
// Hooks and checkpoints
// ---------------------------------------------------------------------------

enum class Phase { Warmup, Search, Pretrain, Supervised };
std::string phase_name(Phase p);
Phase parse_phase(const std::string& name);

struct StepInfo {
  Phase phase = Phase::Warmup;
  int epoch = 0;
  int iteration = 0;
  std::int64_t step = 0;  // within the phase
  double lr_weights = 0.0;
  double lr_alpha = 0.0;
  double loss = 0.0;
  std::vector<size_t> weight_batch;  // dataset indices
  std::vector<size_t> alpha_batch;   // empty outside search
};

struct EpochInfo {
  Phase phase = Phase::Warmup;
  int epoch = 0;
  double loss = 0.0;      // mean weight-step loss
  double lr_weights = 0.0;  // at the first step of the epoch
  double lr_alpha = 0.0;
};

struct TrainHooks {
  std::function<void(const StepInfo&)> on_step;
  std::function<void(const EpochInfo&)> on_epoch;
  // When set, a checkpoint is written after every epoch as
  // checkpoint_dir/epoch_<k> (k counts completed epochs across phases).
  std::filesystem::path checkpoint_dir;
  // Stop after this many completed epochs in the current call (-1: run to
  // the end). Used to emulate interruption.
  int stop_after_epochs = -1;
};

inline constexpr int kCheckpointSchemaVersion = 1;

struct Checkpoint {
  std::string phase;
  int epoch = 0;  // completed epochs in `phase`
  std::uint64_t config_hash = 0;
  std::string space_hash;  // empty for fixed-topology runs
  std::string arch_json;   // fixed-topology runs only
  std::vector<std::vector<double>> alphas;
  std::map<std::string, std::vector<double>> tensors;
  std::map<std::string, std::int64_t> counters;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Atomic write (temporary file, then rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws IntegrityError on a corrupt file or, when expected_config_hash is
// non-zero, on a config-hash mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_config_hash = 0);

std::string space_hash(const SearchSpaceSpec& space);

// ---------------------------------------------------------------------------
// Training states and phases
// ---------------------------------------------------------------------------

// Supernet, projection head and optimizer buffers for warmup and search.
struct SearchState {
  SearchState(const SearchSpaceSpec& space, const TrainConfig& cfg);

  Supernet net;
  ProjectionHead head;
  OptimizerState opt;
  Phase phase = Phase::Warmup;
  int epoch = 0;  // completed epochs in `phase`

  Checkpoint checkpoint(const TrainConfig& cfg);
  void restore(const Checkpoint& ckpt, const TrainConfig& cfg);
};

struct BatchContext {
  Phase phase = Phase::Warmup;
  int epoch = 0;
  int iteration = 0;
  bool alpha_side = false;  // true for the architecture step
};

// Computes the loss of one batch through the supernet under `gates` and
// back-propagates it, leaving weight gradients and edge gradients in place.
// An empty objective means NT-Xent on two augmented views per sample.
using SearchObjective = std::function<double(SearchState& state, const Dataset& data,
                                             const std::vector<size_t>& batch, const GateSample& gates,
                                             const BatchContext& ctx)>;

// The default objective.
double contrastive_objective(SearchState& state, const Dataset& data, const Normalization& norm,
                             const TrainConfig& cfg, const std::vector<size_t>& batch, const GateSample& gates,
                             const BatchContext& ctx);

// Weight-only steps on sampled subnets; alpha is not touched.
void warmup_phase(SearchState& state, const Dataset& data, const Normalization& norm, const TrainConfig& cfg,
                  const TrainHooks& hooks = {}, const SearchObjective& objective = {});

// Alternates a weight step on the weight split and an alpha step on the
// held-out alpha split every iteration. Requires a completed warmup.
void search_phase(SearchState& state, const Dataset& data, const Normalization& norm, const TrainConfig& cfg,
                  const TrainHooks& hooks = {}, const SearchObjective& objective = {});

// Held-out alpha split: sample i goes to the alpha side iff a seeded hash of
// its id falls below `fraction`. Returns (weight indices, alpha indices).
std::pair<std::vector<size_t>, std::vector<size_t>> alpha_split(const Dataset& data, double fraction,
                                                                std::uint64_t seed);

// Fixed-topology backbone with its projection head (SSL) or classifier
// (supervised).
struct ModelState {
  ModelState(const ArchitectureSpec& arch, const TrainConfig& cfg, Phase phase, int num_classes = 0);

  ArchitectureSpec arch;
  nn::Backbone backbone;
  std::unique_ptr<ProjectionHead> head;     // Pretrain
  std::unique_ptr<nn::Linear> classifier;   // Supervised
  OptimizerState opt;
  Phase phase;
  int epoch = 0;

  std::vector<nn::Param*> params();
  Checkpoint checkpoint(const TrainConfig& cfg);
  void restore(const Checkpoint& ckpt, const TrainConfig& cfg);
};

// SimCLR training of a fixed topology from scratch.
void pretrain(ModelState& state, const Dataset& data, const Normalization& norm, const TrainConfig& cfg,
              const TrainHooks& hooks = {});

// Cross-entropy training of backbone and linear classifier from scratch.
void supervised_train(ModelState& state, const Dataset& data, const Normalization& norm, const TrainConfig& cfg,
                      const TrainHooks& hooks = {});

// Top-1 accuracy of a supervised model on a dataset (eval mode).
double classify_accuracy(ModelState& state, const Dataset& data, const Normalization& norm, const TrainConfig& cfg);

// Mean NT-Xent of the current weights over one deterministic pass.
double evaluate_ssl_loss(ModelState& state, const Dataset& data, const Normalization& norm, const TrainConfig& cfg);

// Copies the backbone tensors of a pretrain or supervised checkpoint, whose
// architecture must equal `arch`. Head, classifier and optimizer state are
// ignored, so the checkpoint's training config does not need to match.
void load_backbone_weights(nn::Backbone& backbone, const ArchitectureSpec& arch, const Checkpoint& ckpt);

}  // namespace sslnas

#endif  // SSLNAS_TRAINER_HPP_
