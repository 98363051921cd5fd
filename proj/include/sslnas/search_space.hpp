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

#ifndef SSLNAS_SEARCH_SPACE_HPP_
#define SSLNAS_SEARCH_SPACE_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sslnas/rng.hpp"

namespace sslnas {

// ---------------------------------------------------------------------------
// Operations placed in a cell.
//
// MBConv and Zero are the searchable candidates. Basic and Bottleneck are the
// residual blocks of the ResNet-like family; they never appear in a candidate
// set.
// ---------------------------------------------------------------------------
enum class OpKind { MBConv, Zero, Basic, Bottleneck };

struct CellOp {
  OpKind kind = OpKind::Zero;
  int kernel = 0;     // MBConv only
  int expansion = 0;  // MBConv only

  static CellOp mbconv(int kernel, int expansion) { return {OpKind::MBConv, kernel, expansion}; }
  static CellOp zero() { return {OpKind::Zero, 0, 0}; }
  static CellOp basic() { return {OpKind::Basic, 0, 0}; }
  static CellOp bottleneck() { return {OpKind::Bottleneck, 0, 0}; }

  friend bool operator==(const CellOp&, const CellOp&) = default;
};

using CandidateOp = CellOp;

// "MB6 7x7", "Zero", "Basic", "Bottleneck".
std::string op_label(const CellOp& op);

// Throws StructuralError when the op violates its kind's field rules.
void validate_op(const CellOp& op);

struct StageSpec {
  int num_cells = 1;
  int out_channels = 8;  // before the width multiplier
  bool downsamples = false;
};

struct StemSpec {
  int kernel = 3;
  int stride = 2;
  int conv_channels = 32;   // first 3x3 conv
  int block_channels = 16;  // fixed MBConv e1 3x3 block following it
};

inline constexpr std::array<int, 6> kDefaultStageChannels = {24, 40, 80, 96, 192, 320};
inline constexpr std::array<int, 6> kDefaultStageCells = {4, 4, 4, 4, 4, 1};
inline constexpr std::array<bool, 6> kDefaultStageDownsample = {true, true, true, false, true, false};
inline constexpr int kDefaultNumCells = 21;

struct SearchSpaceSpec {
  std::vector<StageSpec> stages;
  double width_multiplier = 1.0;
  StemSpec stem;

  int total_cells() const;
  // Channel count after the width multiplier.
  int effective_channels(int base) const;
  int stage_channels(int stage) const;
  // Stage index and position within the stage for a global cell index.
  std::pair<int, int> locate_cell(int cell_index) const;
};

// Nearest integer of base * width, never below 8.
int scale_channels(int base, double width);

SearchSpaceSpec build_default_space(double width_multiplier);

// Throws StructuralError on a space that breaks the 6-stage layout rules.
void validate_space(const SearchSpaceSpec& space);

// Six MBConv variants (e in {3,6} x k in {3,5,7}, expansion-major order), plus
// Zero last whenever the cell is stride 1 and channel preserving.
std::vector<CandidateOp> candidate_set(const SearchSpaceSpec& space, int cell_index);

// ---------------------------------------------------------------------------
// Discrete architectures.
// ---------------------------------------------------------------------------
enum class Family { Searched, ResNetLike, MobileNetLike };

std::string family_name(Family f);
Family parse_family(const std::string& name);

struct CellSpec {
  int stage = 0;  // 0-indexed
  CellOp op;
  friend bool operator==(const CellSpec&, const CellSpec&) = default;
};

struct ResNetParams {
  std::array<int, 4> blocks = {2, 2, 2, 2};
  OpKind block = OpKind::Basic;
  int groups = 1;
  friend bool operator==(const ResNetParams&, const ResNetParams&) = default;
};

struct MobileNetParams {
  std::array<int, 6> blocks = {2, 3, 4, 3, 3, 1};
  friend bool operator==(const MobileNetParams&, const MobileNetParams&) = default;
};

struct ArchitectureSpec {
  Family family = Family::Searched;
  double width_multiplier = 1.0;
  std::vector<CellSpec> cells;
  ResNetParams resnet;        // meaningful for ResNetLike only
  MobileNetParams mobilenet;  // meaningful for MobileNetLike only

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

// Canonical handcrafted references.
ArchitectureSpec mobilenet_v2(double width = 1.0);
ArchitectureSpec mobilenet_like(const MobileNetParams& params, double width);
ArchitectureSpec resnet_like(const ResNetParams& params, double width);
ArchitectureSpec resnet18();
ArchitectureSpec resnet50();

// Searched-family spec with one op per cell of the default space.
ArchitectureSpec searched_arch(double width, std::span<const CellOp> ops);

// Throws StructuralError when the spec is malformed.
void validate_arch(const ArchitectureSpec& arch);

// ---------------------------------------------------------------------------
// Concrete layer plan shared by parameter accounting and network builders.
// ---------------------------------------------------------------------------
enum class StemKind { Mobile, ResNet };

struct StemPlan {
  StemKind kind = StemKind::Mobile;
  int conv_kernel = 3;
  int conv_channels = 32;
  int block_channels = 16;  // Mobile only: output of the fixed e1 block
  int out_channels() const { return kind == StemKind::Mobile ? block_channels : conv_channels; }
};

struct CellPlan {
  int stage = 0;
  CellOp op;
  int in_channels = 0;
  int out_channels = 0;
  int mid_channels = 0;  // Bottleneck inner width
  int stride = 1;
  int groups = 1;        // Basic/Bottleneck grouped 3x3
  bool residual = false; // identity shortcut around the op
};

struct NetworkPlan {
  Family family = Family::Searched;
  StemPlan stem;
  std::vector<CellPlan> cells;
  int head_channels = 0;  // 0: no head conv
  int feature_dim = 0;
};

NetworkPlan plan_network(const ArchitectureSpec& arch);

// Per-piece parameter algebra (weights plus normalization scale/shift).
std::int64_t conv_params(int in_channels, int out_channels, int kernel, int groups = 1);
std::int64_t norm_params(int channels);
std::int64_t stem_params(const StemPlan& stem);
std::int64_t cell_params(const CellPlan& cell);
std::int64_t head_params(const NetworkPlan& plan);

// Backbone parameters: stem + cells + head. Projection head and classifiers
// are excluded.
std::int64_t count_params(const ArchitectureSpec& arch);

// Backbone plus a linear classifier (weights and bias) over `num_classes`.
std::int64_t count_params_with_classifier(const ArchitectureSpec& arch, int num_classes);

// Ratio of output-side to input-side parameters. The cell sequence is split
// after ceil(M/2) cells; the stem belongs to the bottom half and the head to
// the top half.
double top_bottom_ratio(const ArchitectureSpec& arch);
double top_bottom_ratio(std::span<const std::int64_t> cell_params, std::int64_t stem = 0,
                        std::int64_t head = 0);

// ---------------------------------------------------------------------------
// Variant-family samplers.
// ---------------------------------------------------------------------------
struct ResNetSamplerConfig {
  int min_blocks = 1;
  int max_blocks = 4;
  std::vector<double> widths = {0.5, 0.75, 1.0, 1.5, 2.0};
  std::vector<int> groups = {1, 2, 4};
};

struct MobileNetSamplerConfig {
  int min_blocks = 1;
  int max_blocks = 4;
  std::vector<double> widths = {0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
};

ArchitectureSpec sample_resnet_variant(Rng& rng, const ResNetSamplerConfig& cfg = {});
ArchitectureSpec sample_mobilenet_variant(Rng& rng, const MobileNetSamplerConfig& cfg = {});

// Uniformly random candidate per cell of the default space.
ArchitectureSpec sample_searched_variant(Rng& rng, double width);

// ---------------------------------------------------------------------------
// Architecture documents (JSON).
// ---------------------------------------------------------------------------
inline constexpr int kArchSchemaVersion = 1;

std::string serialize_arch(const ArchitectureSpec& arch);
// Throws ParseError naming the offending field (JSON pointer) and position.
ArchitectureSpec parse_arch(const std::string& text);

}  // namespace sslnas

#endif  // SSLNAS_SEARCH_SPACE_HPP_
