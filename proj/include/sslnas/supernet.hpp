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

#ifndef SSLNAS_SUPERNET_HPP_
#define SSLNAS_SUPERNET_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "sslnas/nn/network.hpp"
#include "sslnas/rng.hpp"
#include "sslnas/search_space.hpp"

namespace sslnas {

// A searchable cell: candidate ops and their architecture logits.
struct MixedEdge {
  int cell_index = 0;
  std::vector<CandidateOp> candidates;
  std::vector<double> alpha;
};

// One candidate index per edge plus the probability rows it was drawn from.
struct GateSample {
  std::vector<int> chosen;
  std::vector<std::vector<double>> probs;
};

// Softmax of the logits with max subtraction. Throws NumericError on
// non-finite input.
std::vector<double> path_probabilities(std::span<const double> alpha);
std::vector<double> path_probabilities(const MixedEdge& edge);

// Softmax-Jacobian pullback: g_k = sum_j gate_grads_j * p_j * (delta_jk - p_k).
std::vector<double> arch_gradient(std::span<const double> probs, std::span<const double> gate_grads);

// How per-candidate sensitivities for the architecture step are formed.
//   SampledPath:   <dL/dy, branch_c(x)> / p_c on the sampled candidate c,
//                  zero elsewhere (unbiased for the all-path version).
//   AllPaths:      <dL/dy, branch_j(x)> for every candidate j, with the
//                  downstream signal taken from the sampled subnet.
//   ScoreFunction: L * onehot(c) / p_c, i.e. g = L * (onehot(c) - p).
enum class GateEstimator { SampledPath, AllPaths, ScoreFunction };

// Shared-weight supernet over the default search space. Each candidate owns
// its weights and normalization statistics.
class Supernet {
 public:
  Supernet(const SearchSpaceSpec& space, std::uint64_t seed);

  const SearchSpaceSpec& space() const { return space_; }
  std::vector<MixedEdge>& edges() { return edges_; }
  const std::vector<MixedEdge>& edges() const { return edges_; }
  int feature_dim() const { return feature_dim_; }

  GateSample sample_gates(Rng& rng) const;
  GateSample fixed_gates(std::vector<int> chosen) const;

  // stem -> chosen op per edge (Zero is the identity) -> global average pool.
  Tensor forward(const GateSample& gates, const Tensor& x, nn::Mode mode);
  // Back-propagates through the last forward path; accumulates weight grads
  // and records the output gradient of every edge.
  Tensor backward(const Tensor& grad_out);

  // Per-edge candidate sensitivities for the last forward/backward pair.
  // `loss` is only used by the score-function estimator.
  std::vector<std::vector<double>> gate_gradients(GateEstimator estimator, double loss);

  // Every parameter (weights, norms, running statistics), canonical order.
  std::vector<nn::Param*> params();
  // Parameters touched by a forward pass with `gates`.
  std::vector<nn::Param*> path_params(const GateSample& gates);

  void clear_cache();

 private:
  struct Edge {
    std::vector<nn::LayerPtr> ops;
    bool residual = false;
  };

  SearchSpaceSpec space_;
  std::vector<MixedEdge> edges_;
  nn::LayerPtr stem_;
  std::vector<Edge> ops_;
  nn::GlobalAvgPool pool_;
  int feature_dim_ = 0;

  GateSample last_gates_;
  std::vector<Tensor> edge_in_;
  std::vector<Tensor> edge_out_;
  std::vector<Tensor> edge_grad_;
};

// Argmax of alpha per edge, ties to the lowest index. Weights are not copied.
ArchitectureSpec derive_architecture(const Supernet& net);
ArchitectureSpec derive_architecture(const SearchSpaceSpec& space, const std::vector<MixedEdge>& edges);

}  // namespace sslnas

#endif  // SSLNAS_SUPERNET_HPP_
