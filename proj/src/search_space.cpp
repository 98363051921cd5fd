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

#include "sslnas/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sslnas/error.hpp"

namespace sslnas {

namespace {

constexpr std::array<int, 4> kResNetPlanes = {64, 128, 256, 512};

// MobileNetV2 bottleneck stages after the fixed e1 block.
constexpr std::array<int, 6> kMobileChannels = {24, 32, 64, 96, 160, 320};
constexpr std::array<int, 6> kMobileStrides = {2, 2, 2, 1, 2, 1};
constexpr int kMobileHead = 1280;

bool valid_width(double w) { return std::isfinite(w) && w > 0.0 && w <= 4.0; }

int round_up_to(int value, int multiple) { return (value + multiple - 1) / multiple * multiple; }

}  // namespace

std::string op_label(const CellOp& op) {
  switch (op.kind) {
    case OpKind::MBConv:
      return "MB" + std::to_string(op.expansion) + " " + std::to_string(op.kernel) + "x" +
             std::to_string(op.kernel);
    case OpKind::Zero:
      return "Zero";
    case OpKind::Basic:
      return "Basic";
    case OpKind::Bottleneck:
      return "Bottleneck";
  }
  return "?";
}

void validate_op(const CellOp& op) {
  if (op.kind == OpKind::MBConv) {
    if (op.kernel < 3 || op.kernel % 2 == 0)
      throw StructuralError("MBConv kernel must be odd and >= 3, got " + std::to_string(op.kernel));
    if (op.expansion < 1)
      throw StructuralError("MBConv expansion must be >= 1, got " + std::to_string(op.expansion));
  } else if (op.kernel != 0 || op.expansion != 0) {
    throw StructuralError(op_label(op) + " op carries no kernel/expansion");
  }
}

int scale_channels(int base, double width) {
  const long c = std::lround(static_cast<double>(base) * width);
  return static_cast<int>(std::max<long>(8, c));
}

int SearchSpaceSpec::total_cells() const {
  int n = 0;
  for (const auto& s : stages) n += s.num_cells;
  return n;
}

int SearchSpaceSpec::effective_channels(int base) const {
  return scale_channels(base, width_multiplier);
}

int SearchSpaceSpec::stage_channels(int stage) const {
  return effective_channels(stages.at(static_cast<size_t>(stage)).out_channels);
}

std::pair<int, int> SearchSpaceSpec::locate_cell(int cell_index) const {
  if (cell_index < 0) throw DomainError("cell index must be non-negative");
  int remaining = cell_index;
  for (size_t s = 0; s < stages.size(); ++s) {
    if (remaining < stages[s].num_cells) return {static_cast<int>(s), remaining};
    remaining -= stages[s].num_cells;
  }
  throw DomainError("cell index " + std::to_string(cell_index) + " out of range (total " +
                    std::to_string(total_cells()) + ")");
}

SearchSpaceSpec build_default_space(double width_multiplier) {
  if (!valid_width(width_multiplier))
    throw DomainError("width multiplier must lie in (0, 4], got " + std::to_string(width_multiplier));
  SearchSpaceSpec space;
  space.width_multiplier = width_multiplier;
  for (size_t s = 0; s < kDefaultStageChannels.size(); ++s)
    space.stages.push_back({kDefaultStageCells[s], kDefaultStageChannels[s], kDefaultStageDownsample[s]});
  return space;
}

void validate_space(const SearchSpaceSpec& space) {
  if (!valid_width(space.width_multiplier)) throw StructuralError("width multiplier out of range");
  if (space.stages.size() != 6) throw StructuralError("search space must have exactly 6 stages");
  for (size_t s = 0; s < 6; ++s) {
    const auto& st = space.stages[s];
    if (st.num_cells != kDefaultStageCells[s] || st.downsamples != kDefaultStageDownsample[s])
      throw StructuralError("stage " + std::to_string(s + 1) + " does not follow the 6-stage layout");
    if (st.out_channels <= 0) throw StructuralError("stage channels must be positive");
  }
}

std::vector<CandidateOp> candidate_set(const SearchSpaceSpec& space, int cell_index) {
  const auto [stage, pos] = space.locate_cell(cell_index);
  std::vector<CandidateOp> ops;
  for (int e : {3, 6})
    for (int k : {3, 5, 7}) ops.push_back(CandidateOp::mbconv(k, e));
  // Stage-initial cells change resolution and/or width, so they cannot be
  // skipped.
  if (pos > 0) ops.push_back(CandidateOp::zero());
  return ops;
}

std::string family_name(Family f) {
  switch (f) {
    case Family::Searched:
      return "searched";
    case Family::ResNetLike:
      return "resnet";
    case Family::MobileNetLike:
      return "mobilenet";
  }
  return "?";
}

Family parse_family(const std::string& name) {
  if (name == "searched") return Family::Searched;
  if (name == "resnet") return Family::ResNetLike;
  if (name == "mobilenet") return Family::MobileNetLike;
  throw DomainError("unknown architecture family '" + name + "'");
}

ArchitectureSpec mobilenet_like(const MobileNetParams& params, double width) {
  ArchitectureSpec arch;
  arch.family = Family::MobileNetLike;
  arch.width_multiplier = width;
  arch.mobilenet = params;
  for (int s = 0; s < 6; ++s)
    for (int b = 0; b < params.blocks[static_cast<size_t>(s)]; ++b)
      arch.cells.push_back({s, CellOp::mbconv(3, 6)});
  return arch;
}

ArchitectureSpec mobilenet_v2(double width) { return mobilenet_like(MobileNetParams{}, width); }

ArchitectureSpec resnet_like(const ResNetParams& params, double width) {
  ArchitectureSpec arch;
  arch.family = Family::ResNetLike;
  arch.width_multiplier = width;
  arch.resnet = params;
  const CellOp op = params.block == OpKind::Bottleneck ? CellOp::bottleneck() : CellOp::basic();
  for (int s = 0; s < 4; ++s)
    for (int b = 0; b < params.blocks[static_cast<size_t>(s)]; ++b) arch.cells.push_back({s, op});
  return arch;
}

ArchitectureSpec resnet18() { return resnet_like({{2, 2, 2, 2}, OpKind::Basic, 1}, 1.0); }

ArchitectureSpec resnet50() { return resnet_like({{3, 4, 6, 3}, OpKind::Bottleneck, 1}, 1.0); }

ArchitectureSpec searched_arch(double width, std::span<const CellOp> ops) {
  const SearchSpaceSpec space = build_default_space(width);
  if (static_cast<int>(ops.size()) != space.total_cells())
    throw StructuralError("searched architecture needs " + std::to_string(space.total_cells()) +
                          " ops, got " + std::to_string(ops.size()));
  ArchitectureSpec arch;
  arch.family = Family::Searched;
  arch.width_multiplier = width;
  for (int i = 0; i < space.total_cells(); ++i)
    arch.cells.push_back({space.locate_cell(i).first, ops[static_cast<size_t>(i)]});
  validate_arch(arch);
  return arch;
}

void validate_arch(const ArchitectureSpec& arch) {
  if (!valid_width(arch.width_multiplier))
    throw StructuralError("width multiplier must lie in (0, 4]");
  for (const auto& c : arch.cells) validate_op(c.op);

  switch (arch.family) {
    case Family::Searched: {
      const SearchSpaceSpec space = build_default_space(arch.width_multiplier);
      if (static_cast<int>(arch.cells.size()) != space.total_cells())
        throw StructuralError("searched architecture must have " + std::to_string(space.total_cells()) +
                              " cells, got " + std::to_string(arch.cells.size()));
      for (int i = 0; i < space.total_cells(); ++i) {
        const auto& cell = arch.cells[static_cast<size_t>(i)];
        const auto [stage, pos] = space.locate_cell(i);
        if (cell.stage != stage)
          throw StructuralError("cell " + std::to_string(i) + " belongs to stage " +
                                std::to_string(stage) + ", spec says " + std::to_string(cell.stage));
        const auto cands = candidate_set(space, i);
        if (std::find(cands.begin(), cands.end(), cell.op) == cands.end())
          throw StructuralError("cell " + std::to_string(i) + ": op " + op_label(cell.op) +
                                (pos == 0 ? " not allowed at a stage-initial cell" : " not in candidate set"));
      }
      break;
    }
    case Family::MobileNetLike: {
      for (int b : arch.mobilenet.blocks)
        if (b < 1) throw StructuralError("mobilenet stages need at least one block");
      if (arch.cells != mobilenet_like(arch.mobilenet, arch.width_multiplier).cells)
        throw StructuralError("cell list inconsistent with mobilenet block counts");
      break;
    }
    case Family::ResNetLike: {
      for (int b : arch.resnet.blocks)
        if (b < 1) throw StructuralError("resnet stages need at least one block");
      if (arch.resnet.block != OpKind::Basic && arch.resnet.block != OpKind::Bottleneck)
        throw StructuralError("resnet block must be Basic or Bottleneck");
      if (arch.resnet.groups < 1) throw StructuralError("resnet groups must be >= 1");
      if (arch.cells != resnet_like(arch.resnet, arch.width_multiplier).cells)
        throw StructuralError("cell list inconsistent with resnet block counts");
      break;
    }
  }
}

NetworkPlan plan_network(const ArchitectureSpec& arch) {
  validate_arch(arch);
  const double w = arch.width_multiplier;
  NetworkPlan plan;
  plan.family = arch.family;

  switch (arch.family) {
    case Family::Searched: {
      const SearchSpaceSpec space = build_default_space(w);
      plan.stem = {StemKind::Mobile, space.stem.kernel, space.effective_channels(space.stem.conv_channels),
                   space.effective_channels(space.stem.block_channels)};
      int in = plan.stem.out_channels();
      for (int i = 0; i < space.total_cells(); ++i) {
        const auto [stage, pos] = space.locate_cell(i);
        CellPlan c;
        c.stage = stage;
        c.op = arch.cells[static_cast<size_t>(i)].op;
        c.in_channels = in;
        c.out_channels = space.stage_channels(stage);
        c.stride = (pos == 0 && space.stages[static_cast<size_t>(stage)].downsamples) ? 2 : 1;
        c.residual = c.stride == 1 && c.in_channels == c.out_channels;
        plan.cells.push_back(c);
        in = c.out_channels;
      }
      plan.feature_dim = in;
      break;
    }
    case Family::MobileNetLike: {
      plan.stem = {StemKind::Mobile, 3, scale_channels(32, w), scale_channels(16, w)};
      int in = plan.stem.out_channels();
      for (int s = 0; s < 6; ++s) {
        const int out = scale_channels(kMobileChannels[static_cast<size_t>(s)], w);
        for (int b = 0; b < arch.mobilenet.blocks[static_cast<size_t>(s)]; ++b) {
          CellPlan c;
          c.stage = s;
          c.op = CellOp::mbconv(3, 6);
          c.in_channels = in;
          c.out_channels = out;
          c.stride = b == 0 ? kMobileStrides[static_cast<size_t>(s)] : 1;
          c.residual = c.stride == 1 && in == out;
          plan.cells.push_back(c);
          in = out;
        }
      }
      plan.head_channels = scale_channels(kMobileHead, std::max(1.0, w));
      plan.feature_dim = plan.head_channels;
      break;
    }
    case Family::ResNetLike: {
      const int g = arch.resnet.groups;
      plan.stem = {StemKind::ResNet, 7, scale_channels(64, w), 0};
      int in = plan.stem.out_channels();
      const bool bottleneck = arch.resnet.block == OpKind::Bottleneck;
      for (int s = 0; s < 4; ++s) {
        const int planes = round_up_to(scale_channels(kResNetPlanes[static_cast<size_t>(s)], w), g);
        const int out = bottleneck ? 4 * planes : planes;
        for (int b = 0; b < arch.resnet.blocks[static_cast<size_t>(s)]; ++b) {
          CellPlan c;
          c.stage = s;
          c.op = bottleneck ? CellOp::bottleneck() : CellOp::basic();
          c.in_channels = in;
          c.out_channels = out;
          c.mid_channels = planes;
          c.stride = (b == 0 && s > 0) ? 2 : 1;
          c.groups = g;
          c.residual = true;
          plan.cells.push_back(c);
          in = out;
        }
      }
      plan.feature_dim = in;
      break;
    }
  }
  return plan;
}

std::int64_t conv_params(int in_channels, int out_channels, int kernel, int groups) {
  return static_cast<std::int64_t>(out_channels) * (in_channels / groups) * kernel * kernel;
}

std::int64_t norm_params(int channels) { return 2LL * channels; }

namespace {

std::int64_t mbconv_params(int in, int out, int kernel, int expansion) {
  const int hidden = in * expansion;
  std::int64_t n = 0;
  if (expansion != 1) n += conv_params(in, hidden, 1) + norm_params(hidden);
  n += conv_params(hidden, hidden, kernel, hidden) + norm_params(hidden);
  n += conv_params(hidden, out, 1) + norm_params(out);
  return n;
}

std::int64_t shortcut_params(const CellPlan& c) {
  if (c.stride == 1 && c.in_channels == c.out_channels) return 0;
  return conv_params(c.in_channels, c.out_channels, 1) + norm_params(c.out_channels);
}

}  // namespace

std::int64_t stem_params(const StemPlan& stem) {
  std::int64_t n = conv_params(3, stem.conv_channels, stem.conv_kernel) + norm_params(stem.conv_channels);
  if (stem.kind == StemKind::Mobile) n += mbconv_params(stem.conv_channels, stem.block_channels, 3, 1);
  return n;
}

std::int64_t cell_params(const CellPlan& c) {
  switch (c.op.kind) {
    case OpKind::Zero:
      return 0;
    case OpKind::MBConv:
      return mbconv_params(c.in_channels, c.out_channels, c.op.kernel, c.op.expansion);
    case OpKind::Basic:
      return conv_params(c.in_channels, c.out_channels, 3, c.groups) + norm_params(c.out_channels) +
             conv_params(c.out_channels, c.out_channels, 3, c.groups) + norm_params(c.out_channels) +
             shortcut_params(c);
    case OpKind::Bottleneck:
      return conv_params(c.in_channels, c.mid_channels, 1) + norm_params(c.mid_channels) +
             conv_params(c.mid_channels, c.mid_channels, 3, c.groups) + norm_params(c.mid_channels) +
             conv_params(c.mid_channels, c.out_channels, 1) + norm_params(c.out_channels) +
             shortcut_params(c);
  }
  return 0;
}

std::int64_t head_params(const NetworkPlan& plan) {
  if (plan.head_channels == 0) return 0;
  const int in = plan.cells.empty() ? plan.stem.out_channels() : plan.cells.back().out_channels;
  return conv_params(in, plan.head_channels, 1) + norm_params(plan.head_channels);
}

std::int64_t count_params(const ArchitectureSpec& arch) {
  const NetworkPlan plan = plan_network(arch);
  std::int64_t n = stem_params(plan.stem) + head_params(plan);
  for (const auto& c : plan.cells) n += cell_params(c);
  return n;
}

std::int64_t count_params_with_classifier(const ArchitectureSpec& arch, int num_classes) {
  if (num_classes < 1) throw DomainError("classifier needs at least one class");
  const NetworkPlan plan = plan_network(arch);
  return count_params(arch) + static_cast<std::int64_t>(plan.feature_dim) * num_classes + num_classes;
}

double top_bottom_ratio(std::span<const std::int64_t> cell_params, std::int64_t stem, std::int64_t head) {
  if (cell_params.size() < 2) throw DomainError("top/bottom ratio needs at least 2 cells");
  const size_t split = (cell_params.size() + 1) / 2;
  std::int64_t bottom = stem;
  std::int64_t top = head;
  for (size_t i = 0; i < cell_params.size(); ++i) (i < split ? bottom : top) += cell_params[i];
  if (bottom <= 0) throw DomainError("degenerate input: bottom half has no parameters");
  return static_cast<double>(top) / static_cast<double>(bottom);
}

double top_bottom_ratio(const ArchitectureSpec& arch) {
  const NetworkPlan plan = plan_network(arch);
  std::vector<std::int64_t> per_cell;
  per_cell.reserve(plan.cells.size());
  for (const auto& c : plan.cells) per_cell.push_back(cell_params(c));
  return top_bottom_ratio(per_cell, stem_params(plan.stem), head_params(plan));
}

namespace {

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& grid) {
  if (grid.empty()) throw ConfigError("sampler grid is empty");
  return grid[static_cast<size_t>(rng.uniform_int(0, static_cast<long>(grid.size()) - 1))];
}

void check_block_range(int lo, int hi) {
  if (lo < 1 || hi < lo) throw ConfigError("sampler block range must satisfy 1 <= min <= max");
}

}  // namespace

ArchitectureSpec sample_resnet_variant(Rng& rng, const ResNetSamplerConfig& cfg) {
  check_block_range(cfg.min_blocks, cfg.max_blocks);
  ResNetParams p;
  for (int& b : p.blocks) b = static_cast<int>(rng.uniform_int(cfg.min_blocks, cfg.max_blocks));
  p.block = rng.bernoulli(0.5) ? OpKind::Bottleneck : OpKind::Basic;
  const double width = pick(rng, cfg.widths);
  p.groups = pick(rng, cfg.groups);
  return resnet_like(p, width);
}

ArchitectureSpec sample_mobilenet_variant(Rng& rng, const MobileNetSamplerConfig& cfg) {
  check_block_range(cfg.min_blocks, cfg.max_blocks);
  MobileNetParams p;
  for (int& b : p.blocks) b = static_cast<int>(rng.uniform_int(cfg.min_blocks, cfg.max_blocks));
  const double width = pick(rng, cfg.widths);
  return mobilenet_like(p, width);
}

ArchitectureSpec sample_searched_variant(Rng& rng, double width) {
  const SearchSpaceSpec space = build_default_space(width);
  std::vector<CellOp> ops;
  for (int i = 0; i < space.total_cells(); ++i) ops.push_back(pick(rng, candidate_set(space, i)));
  return searched_arch(width, ops);
}

}  // namespace sslnas
