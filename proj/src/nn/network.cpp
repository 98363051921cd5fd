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

#include "sslnas/nn/network.hpp"

#include <algorithm>

#include "sslnas/error.hpp"

namespace sslnas::nn {

namespace {

constexpr double kRelu6 = 6.0;

void conv_bn(Sequential& seq, const std::string& name, int in, int out, int k, int stride, int groups, Rng& rng) {
  seq.add(std::make_unique<Conv2d>(name + ".conv", in, out, k, stride, groups, rng));
  seq.add(std::make_unique<BatchNorm2d>(name + ".bn", out));
}

LayerPtr shortcut(const std::string& name, const CellPlan& c, Rng& rng) {
  if (c.stride == 1 && c.in_channels == c.out_channels) return nullptr;
  auto seq = std::make_unique<Sequential>();
  conv_bn(*seq, name + ".shortcut", c.in_channels, c.out_channels, 1, c.stride, 1, rng);
  return seq;
}

}  // namespace

LayerPtr make_mbconv(const std::string& name, int in, int out, int kernel, int expansion, int stride,
                     bool residual, Rng& rng) {
  const int hidden = in * expansion;
  auto body = std::make_unique<Sequential>();
  if (expansion != 1) {
    conv_bn(*body, name + ".expand", in, hidden, 1, 1, 1, rng);
    body->add(std::make_unique<ReLU>(kRelu6));
  }
  conv_bn(*body, name + ".depthwise", hidden, hidden, kernel, stride, hidden, rng);
  body->add(std::make_unique<ReLU>(kRelu6));
  conv_bn(*body, name + ".project", hidden, out, 1, 1, 1, rng);
  if (!residual) return body;
  if (stride != 1 || in != out) throw StructuralError(name + ": residual MBConv must preserve shape");
  return std::make_unique<Residual>(std::move(body), nullptr, false);
}

LayerPtr make_cell(const std::string& name, const CellPlan& c, Rng& rng) {
  switch (c.op.kind) {
    case OpKind::Zero:
      if (!c.residual) throw StructuralError(name + ": Zero op at a shape-changing cell");
      return std::make_unique<Identity>();
    case OpKind::MBConv:
      return make_mbconv(name, c.in_channels, c.out_channels, c.op.kernel, c.op.expansion, c.stride,
                         c.residual, rng);
    case OpKind::Basic: {
      auto body = std::make_unique<Sequential>();
      conv_bn(*body, name + ".conv1", c.in_channels, c.out_channels, 3, c.stride, c.groups, rng);
      body->add(std::make_unique<ReLU>());
      conv_bn(*body, name + ".conv2", c.out_channels, c.out_channels, 3, 1, c.groups, rng);
      return std::make_unique<Residual>(std::move(body), shortcut(name, c, rng), true);
    }
    case OpKind::Bottleneck: {
      auto body = std::make_unique<Sequential>();
      conv_bn(*body, name + ".conv1", c.in_channels, c.mid_channels, 1, 1, 1, rng);
      body->add(std::make_unique<ReLU>());
      conv_bn(*body, name + ".conv2", c.mid_channels, c.mid_channels, 3, c.stride, c.groups, rng);
      body->add(std::make_unique<ReLU>());
      conv_bn(*body, name + ".conv3", c.mid_channels, c.out_channels, 1, 1, 1, rng);
      return std::make_unique<Residual>(std::move(body), shortcut(name, c, rng), true);
    }
  }
  throw StructuralError(name + ": unknown op");
}

LayerPtr make_stem(const std::string& name, const StemPlan& stem, Rng& rng) {
  auto seq = std::make_unique<Sequential>();
  conv_bn(*seq, name + ".first", 3, stem.conv_channels, stem.conv_kernel, 2, 1, rng);
  if (stem.kind == StemKind::Mobile) {
    seq->add(std::make_unique<ReLU>(kRelu6));
    seq->add(make_mbconv(name + ".block", stem.conv_channels, stem.block_channels, 3, 1, 1, false, rng));
  } else {
    seq->add(std::make_unique<ReLU>());
    seq->add(std::make_unique<MaxPool2d>(3, 2));
  }
  return seq;
}

LayerPtr make_head(const std::string& name, int in, int out, Rng& rng) {
  auto seq = std::make_unique<Sequential>();
  conv_bn(*seq, name, in, out, 1, 1, 1, rng);
  seq->add(std::make_unique<ReLU>(kRelu6));
  return seq;
}

std::int64_t count_trainable(const std::vector<Param*>& params) {
  std::int64_t n = 0;
  for (const Param* p : params)
    if (p->trainable()) n += static_cast<std::int64_t>(p->value.size());
  return n;
}

void zero_grad(const std::vector<Param*>& params) {
  for (Param* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

Backbone::Backbone(const ArchitectureSpec& arch, Rng& rng) : plan_(plan_network(arch)) {
  body_.add(make_stem("stem", plan_.stem, rng));
  for (size_t i = 0; i < plan_.cells.size(); ++i)
    body_.add(make_cell("cells." + std::to_string(i), plan_.cells[i], rng));
  if (plan_.head_channels > 0) {
    const int in = plan_.cells.empty() ? plan_.stem.out_channels() : plan_.cells.back().out_channels;
    body_.add(make_head("head", in, plan_.head_channels, rng));
  }
  body_.add(std::make_unique<GlobalAvgPool>());
}

Tensor Backbone::forward(const Tensor& x, Mode mode) {
  if (x.c() != 3) throw StructuralError("backbone expects 3-channel input, got " + x.shape_string());
  if (x.h() < kMinInputSize || x.w() < kMinInputSize)
    throw StructuralError("input " + x.shape_string() + " smaller than " + std::to_string(kMinInputSize) +
                          " pixels");
  return body_.forward(x, mode);
}

}  // namespace sslnas::nn
