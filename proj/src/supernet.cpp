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

#include "sslnas/supernet.hpp"

#include <algorithm>
#include <cmath>

#include "sslnas/error.hpp"

namespace sslnas {

std::vector<double> path_probabilities(std::span<const double> alpha) {
  if (alpha.empty()) throw DomainError("path probabilities of an empty edge");
  for (double a : alpha)
    if (!std::isfinite(a)) throw NumericError("architecture logits must be finite");
  const double mx = *std::max_element(alpha.begin(), alpha.end());
  std::vector<double> p(alpha.size());
  double z = 0.0;
  for (size_t i = 0; i < alpha.size(); ++i) z += (p[i] = std::exp(alpha[i] - mx));
  for (double& v : p) v /= z;
  return p;
}

std::vector<double> path_probabilities(const MixedEdge& edge) { return path_probabilities(edge.alpha); }

std::vector<double> arch_gradient(std::span<const double> probs, std::span<const double> gate_grads) {
  if (probs.size() != gate_grads.size())
    throw DomainError("arch_gradient: " + std::to_string(probs.size()) + " probabilities vs " +
                      std::to_string(gate_grads.size()) + " gate gradients");
  // sum_j G_j p_j (delta_jk - p_k) = p_k (G_k - sum_j G_j p_j)
  double mean = 0.0;
  for (size_t j = 0; j < probs.size(); ++j) mean += gate_grads[j] * probs[j];
  std::vector<double> g(probs.size());
  for (size_t k = 0; k < probs.size(); ++k) g[k] = probs[k] * (gate_grads[k] - mean);
  return g;
}

Supernet::Supernet(const SearchSpaceSpec& space, std::uint64_t seed) : space_(space) {
  validate_space(space_);
  const NetworkPlan plan = plan_network(searched_arch(
      space_.width_multiplier, std::vector<CellOp>(static_cast<size_t>(space_.total_cells()), CellOp::mbconv(3, 3))));
  Rng rng(seed);
  stem_ = nn::make_stem("stem", plan.stem, rng);
  for (int i = 0; i < space_.total_cells(); ++i) {
    MixedEdge edge;
    edge.cell_index = i;
    edge.candidates = candidate_set(space_, i);
    edge.alpha.assign(edge.candidates.size(), 0.0);
    Edge ops;
    CellPlan cell = plan.cells[static_cast<size_t>(i)];
    ops.residual = cell.residual;
    for (size_t j = 0; j < edge.candidates.size(); ++j) {
      cell.op = edge.candidates[j];
      ops.ops.push_back(nn::make_cell("edges." + std::to_string(i) + ".cand." + std::to_string(j), cell, rng));
    }
    edges_.push_back(std::move(edge));
    ops_.push_back(std::move(ops));
  }
  feature_dim_ = plan.feature_dim;
}

GateSample Supernet::sample_gates(Rng& rng) const {
  GateSample s;
  for (const auto& e : edges_) {
    auto p = path_probabilities(e);
    const double u = rng.uniform();
    double acc = 0.0;
    int pick = static_cast<int>(p.size()) - 1;
    for (size_t j = 0; j < p.size(); ++j) {
      acc += p[j];
      if (u < acc) {
        pick = static_cast<int>(j);
        break;
      }
    }
    s.chosen.push_back(pick);
    s.probs.push_back(std::move(p));
  }
  return s;
}

GateSample Supernet::fixed_gates(std::vector<int> chosen) const {
  if (chosen.size() != edges_.size()) throw DomainError("gate vector length does not match edge count");
  GateSample s;
  for (size_t i = 0; i < edges_.size(); ++i) {
    if (chosen[i] < 0 || chosen[i] >= static_cast<int>(edges_[i].candidates.size()))
      throw DomainError("gate " + std::to_string(chosen[i]) + " out of range at edge " + std::to_string(i));
    s.probs.push_back(path_probabilities(edges_[i]));
  }
  s.chosen = std::move(chosen);
  return s;
}

Tensor Supernet::forward(const GateSample& gates, const Tensor& x, nn::Mode mode) {
  if (gates.chosen.size() != edges_.size()) throw StructuralError("gate sample does not match the supernet");
  if (x.c() != 3) throw StructuralError("supernet expects 3-channel input, got " + x.shape_string());
  if (x.h() < nn::kMinInputSize || x.w() < nn::kMinInputSize)
    throw StructuralError("input " + x.shape_string() + " smaller than " + std::to_string(nn::kMinInputSize) +
                          " pixels");
  const bool keep = mode != nn::Mode::Eval;
  last_gates_ = gates;
  edge_in_.assign(edges_.size(), Tensor());
  edge_out_.assign(edges_.size(), Tensor());
  edge_grad_.assign(edges_.size(), Tensor());

  Tensor h = stem_->forward(x, mode);
  for (size_t i = 0; i < ops_.size(); ++i) {
    const int c = gates.chosen[i];
    if (c < 0 || c >= static_cast<int>(ops_[i].ops.size()))
      throw StructuralError("gate out of range at edge " + std::to_string(i));
    Tensor out = ops_[i].ops[static_cast<size_t>(c)]->forward(h, mode);
    if (keep) {
      edge_in_[i] = std::move(h);
      edge_out_[i] = out;
    }
    h = std::move(out);
  }
  return pool_.forward(h, mode);
}

Tensor Supernet::backward(const Tensor& grad_out) {
  Tensor g = pool_.backward(grad_out);
  for (size_t i = ops_.size(); i-- > 0;) {
    edge_grad_[i] = g;
    g = ops_[i].ops[static_cast<size_t>(last_gates_.chosen[i])]->backward(g);
  }
  return stem_->backward(g);
}

namespace {

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

}  // namespace

std::vector<std::vector<double>> Supernet::gate_gradients(GateEstimator estimator, double loss) {
  if (edge_grad_.empty() || edge_grad_.front().empty())
    throw StructuralError("gate_gradients requires a training-mode forward and backward pass");
  std::vector<std::vector<double>> out;
  out.reserve(edges_.size());
  for (size_t i = 0; i < edges_.size(); ++i) {
    const size_t n = edges_[i].candidates.size();
    const size_t c = static_cast<size_t>(last_gates_.chosen[i]);
    const double pc = last_gates_.probs[i][c];
    std::vector<double> gg(n, 0.0);
    const Tensor& g = edge_grad_[i];
    // <g, x> is common to every residual candidate and cancels in the
    // softmax pullback, so only the branch part is scored.
    const double skip = ops_[i].residual ? dot(g, edge_in_[i]) : 0.0;
    auto branch = [&](size_t j) -> double {
      if (edges_[i].candidates[j].kind == OpKind::Zero) return 0.0;
      if (j == c) return dot(g, edge_out_[i]) - skip;
      Tensor o = ops_[i].ops[j]->forward(edge_in_[i], nn::Mode::Probe);
      ops_[i].ops[j]->clear_cache();
      return dot(g, o) - skip;
    };
    switch (estimator) {
      case GateEstimator::SampledPath:
        gg[c] = branch(c) / pc;
        break;
      case GateEstimator::AllPaths:
        for (size_t j = 0; j < n; ++j) gg[j] = branch(j);
        break;
      case GateEstimator::ScoreFunction:
        gg[c] = loss / pc;
        break;
    }
    out.push_back(std::move(gg));
  }
  return out;
}

std::vector<nn::Param*> Supernet::params() {
  std::vector<nn::Param*> out;
  stem_->collect(out);
  for (auto& e : ops_)
    for (auto& op : e.ops) op->collect(out);
  return out;
}

std::vector<nn::Param*> Supernet::path_params(const GateSample& gates) {
  std::vector<nn::Param*> out;
  stem_->collect(out);
  for (size_t i = 0; i < ops_.size(); ++i) ops_[i].ops.at(static_cast<size_t>(gates.chosen.at(i)))->collect(out);
  return out;
}

void Supernet::clear_cache() {
  stem_->clear_cache();
  for (auto& e : ops_)
    for (auto& op : e.ops) op->clear_cache();
  edge_in_.clear();
  edge_out_.clear();
  edge_grad_.clear();
}

ArchitectureSpec derive_architecture(const SearchSpaceSpec& space, const std::vector<MixedEdge>& edges) {
  std::vector<CellOp> ops;
  for (const auto& e : edges) {
    size_t best = 0;
    for (size_t j = 1; j < e.alpha.size(); ++j)
      if (e.alpha[j] > e.alpha[best]) best = j;
    ops.push_back(e.candidates.at(best));
  }
  return searched_arch(space.width_multiplier, ops);
}

ArchitectureSpec derive_architecture(const Supernet& net) { return derive_architecture(net.space(), net.edges()); }

}  // namespace sslnas
