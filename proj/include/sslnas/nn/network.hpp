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

#ifndef SSLNAS_NN_NETWORK_HPP_
#define SSLNAS_NN_NETWORK_HPP_

#include <string>
#include <vector>

#include "sslnas/nn/layers.hpp"
#include "sslnas/search_space.hpp"

namespace sslnas::nn {

// Block factories. Names prefix every parameter of the block.
LayerPtr make_mbconv(const std::string& name, int in, int out, int kernel, int expansion, int stride,
                     bool residual, Rng& rng);
LayerPtr make_cell(const std::string& name, const CellPlan& cell, Rng& rng);
LayerPtr make_stem(const std::string& name, const StemPlan& stem, Rng& rng);
LayerPtr make_head(const std::string& name, int in, int out, Rng& rng);

// Sum of sizes of the trainable parameters.
std::int64_t count_trainable(const std::vector<Param*>& params);
void zero_grad(const std::vector<Param*>& params);

// A discrete network: stem, cells, optional head conv, global average pool.
// Output is N x feature_dim x 1 x 1.
class Backbone final : public Layer {
 public:
  Backbone(const ArchitectureSpec& arch, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override { return body_.backward(grad_out); }
  void collect(std::vector<Param*>& out) override { body_.collect(out); }
  void clear_cache() override { body_.clear_cache(); }

  const NetworkPlan& plan() const { return plan_; }
  int feature_dim() const { return plan_.feature_dim; }

 private:
  NetworkPlan plan_;
  Sequential body_;
};

// Minimum input resolution accepted by networks (four stride-2 stages).
inline constexpr int kMinInputSize = 16;

}  // namespace sslnas::nn

#endif  // SSLNAS_NN_NETWORK_HPP_
