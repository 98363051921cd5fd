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

#ifndef SSLNAS_EVAL_HPP_
#define SSLNAS_EVAL_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sslnas/dataset.hpp"
#include "sslnas/nn/network.hpp"
#include "sslnas/search_space.hpp"
#include "sslnas/tensor.hpp"

namespace sslnas {

// ---------------------------------------------------------------------------
// Linear evaluation
// ---------------------------------------------------------------------------

struct FeatureSet {
  Matrix features;  // samples x feature_dim
  std::vector<int> labels;
  int num_classes = 0;
};

// Backbone outputs (no projection head) in eval mode, one centre view per
// image at `input_size`. Throws DataError on an empty dataset.
FeatureSet extract_features(nn::Backbone& backbone, const Dataset& data, const Normalization& norm,
                            int input_size, int batch_size = 64);

struct LinearProbeConfig {
  double l2 = 1e-4;
  double gradient_tolerance = 1e-5;  // on the Euclidean norm of the gradient
  int max_iterations = 5000;
};

struct LinearProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double final_loss = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  Matrix weights;  // (feature_dim + 1) x classes, bias in the last row
};

// Multinomial logistic regression on features standardized with the
// training statistics. Objective: mean cross-entropy + l2/2 * ||W||^2 (bias
// excluded), minimized by L-BFGS. Throws DomainError on fewer than two
// classes or mismatched dimensions, NumericError on non-finite features.
LinearProbeResult linear_probe(const FeatureSet& train, const FeatureSet& test, const LinearProbeConfig& cfg = {});

// Test top-1 accuracy of linear_probe.
double linear_eval(const FeatureSet& train, const FeatureSet& test, const LinearProbeConfig& cfg = {});

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> xs);

// Both throw DomainError on length mismatch or n < 3 and NumericError when
// either input is constant (the coefficient is undefined).
double pearson(std::span<const double> xs, std::span<const double> ys);
double spearman(std::span<const double> xs, std::span<const double> ys);

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_sd = 0.0;  // sqrt(SSE / (n - 2))
  double t_quantile = 0.0;   // two-sided 95%, n - 2 degrees of freedom
  double x_mean = 0.0;
  double sxx = 0.0;
  int n = 0;

  double predict(double x) const { return intercept + slope * x; }
  // Half-width of the 95% confidence band on the mean response at x.
  double half_width(double x) const;
};

// Ordinary least squares of ys on xs. Throws DomainError for n < 3 and
// NumericError when xs is constant.
RegressionFit fit_regression_ci(std::span<const double> xs, std::span<const double> ys);

// ---------------------------------------------------------------------------
// Study tables and reports
// ---------------------------------------------------------------------------

struct ResultTable {
  std::vector<std::string> models;
  std::vector<std::string> datasets;
  Matrix top1;  // models x datasets, NaN marks a missing cell
  std::vector<std::int64_t> params;
  std::vector<double> ratios;
  std::vector<ArchitectureSpec> archs;  // optional, one per model
};

// Throws DataError on missing cells or accuracies outside [0, 1].
void validate(const ResultTable& table);

struct CorrelationReport {
  std::vector<std::string> datasets;
  Matrix spearman;
  Matrix pearson;
  Eigen::MatrixXi counts;
};

CorrelationReport build_correlation_matrix(const ResultTable& table);

// results.csv, corr.csv, corr_heatmap.svg, scatter_<a>__<b>.svg per pair and
// arch_<model>.svg per model with an architecture. Returns written paths.
std::vector<std::filesystem::path> emit_report(const CorrelationReport& report, const ResultTable& table,
                                               const std::filesystem::path& out_dir);

// Stage-ordered diagram of a searched- or MobileNet-family architecture.
std::string arch_diagram_svg(const ArchitectureSpec& arch, const std::string& title = "");

std::string results_csv(const ResultTable& table);
std::string correlation_csv(const CorrelationReport& report);
ResultTable parse_results_csv(const std::string& text);

}  // namespace sslnas

#endif  // SSLNAS_EVAL_HPP_
