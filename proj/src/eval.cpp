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

#include "sslnas/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>
#include <spdlog/spdlog.h>

#include "sslnas/error.hpp"
#include "sslnas/ssl.hpp"

namespace sslnas {

FeatureSet extract_features(nn::Backbone& backbone, const Dataset& data, const Normalization& norm,
                            int input_size, int batch_size) {
  if (data.empty()) throw DataError("extract_features: empty dataset");
  if (batch_size < 1) throw DomainError("extract_features: batch size must be positive");
  FeatureSet out;
  out.features.resize(static_cast<Eigen::Index>(data.size()), backbone.feature_dim());
  out.labels = data.labels;
  out.num_classes = data.num_classes();
  const auto step = static_cast<size_t>(batch_size);
  for (size_t start = 0; start < data.size(); start += step) {
    const size_t end = std::min(data.size(), start + step);
    std::vector<Image> views(end - start);
    for (size_t i = start; i < end; ++i) views[i - start] = resize_view(data.images[i], input_size);
    const Tensor f = backbone.forward(to_tensor(views, norm), nn::Mode::Eval);
    if (f.c() != backbone.feature_dim() || f.h() != 1 || f.w() != 1)
      throw StructuralError("extract_features: backbone output has unexpected shape");
    out.features.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        f.as_matrix();
  }
  backbone.clear_cache();
  return out;
}

// ---------------------------------------------------------------------------
// Linear probe
// ---------------------------------------------------------------------------

namespace {

// Rows are samples; the last column is the constant 1 for the bias.
Matrix design_matrix(const Matrix& features, const Vector& mean, const Vector& scale) {
  Matrix x(features.rows(), features.cols() + 1);
  x.leftCols(features.cols()) = (features.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  x.col(features.cols()).setOnes();
  return x;
}

class SoftmaxObjective final : public ceres::FirstOrderFunction {
 public:
  SoftmaxObjective(const Matrix& x, const std::vector<int>& labels, int classes, double l2)
      : x_(x), labels_(labels), classes_(classes), l2_(l2) {}

  int NumParameters() const override { return static_cast<int>(x_.cols()) * classes_; }

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    *cost = evaluate(parameters, gradient);
    return std::isfinite(*cost);
  }

  // Returns the objective and, when `gradient` is set, writes its gradient.
  double evaluate(const double* parameters, double* gradient) const {
    const Eigen::Index d = x_.cols();
    Eigen::Map<const Matrix> w(parameters, d, classes_);
    Matrix p = x_ * w;
    const double n = static_cast<double>(x_.rows());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double m = p.row(i).maxCoeff();
      p.row(i) = (p.row(i).array() - m).exp();
      const double z = p.row(i).sum();
      p.row(i) /= z;
      const int y = labels_[static_cast<size_t>(i)];
      loss -= std::log(std::max(p(i, y), 1e-300));
      p(i, y) -= 1.0;
    }
    const auto weights = w.topRows(d - 1);
    loss = loss / n + 0.5 * l2_ * weights.squaredNorm();
    if (gradient) {
      Eigen::Map<Matrix> g(gradient, d, classes_);
      g.noalias() = x_.transpose() * p / n;
      g.topRows(d - 1) += l2_ * weights;
    }
    return loss;
  }

 private:
  const Matrix& x_;
  const std::vector<int>& labels_;
  int classes_;
  double l2_;
};

double accuracy(const Matrix& x, const Matrix& w, const std::vector<int>& labels) {
  const Matrix logits = x * w;
  size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg;
    logits.row(i).maxCoeff(&arg);
    if (arg == labels[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

void check_features(const FeatureSet& s, const char* which) {
  if (s.features.rows() == 0) throw DataError(std::string("linear probe: empty ") + which + " set");
  if (static_cast<size_t>(s.features.rows()) != s.labels.size())
    throw DomainError(std::string("linear probe: ") + which + " features and labels differ in length");
  if (!s.features.allFinite()) throw NumericError(std::string("linear probe: non-finite ") + which + " features");
}

}  // namespace

LinearProbeResult linear_probe(const FeatureSet& train, const FeatureSet& test, const LinearProbeConfig& cfg) {
  check_features(train, "train");
  check_features(test, "test");
  if (train.features.cols() != test.features.cols())
    throw DomainError("linear probe: train and test feature dimensions differ");
  const int classes = std::max(train.num_classes, test.num_classes);
  for (const auto* s : {&train, &test})
    for (int y : s->labels)
      if (y < 0 || y >= classes) throw DomainError("linear probe: label " + std::to_string(y) + " out of range");
  std::vector<int> seen(static_cast<size_t>(classes), 0);
  for (int y : train.labels) seen[static_cast<size_t>(y)] = 1;
  if (classes < 2 || std::accumulate(seen.begin(), seen.end(), 0) < 2)
    throw DomainError("linear probe needs at least two classes in the training set");

  // Standardize with training statistics; constant features keep unit scale.
  const Vector mean = train.features.colwise().mean().transpose();
  Vector scale = ((train.features.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  for (Eigen::Index j = 0; j < scale.size(); ++j)
    if (!(scale(j) > 1e-12)) scale(j) = 1.0;
  const Matrix xtr = design_matrix(train.features, mean, scale);
  const Matrix xte = design_matrix(test.features, mean, scale);

  auto* objective = new SoftmaxObjective(xtr, train.labels, classes, cfg.l2);
  ceres::GradientProblem problem(objective);
  std::vector<double> w(static_cast<size_t>(objective->NumParameters()), 0.0);

  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::LBFGS;
  options.max_num_iterations = cfg.max_iterations;
  // Ceres tests the max-norm of the gradient; scaling by sqrt(dim) bounds the
  // Euclidean norm by the requested tolerance.
  options.gradient_tolerance = cfg.gradient_tolerance / std::sqrt(static_cast<double>(w.size()));
  options.function_tolerance = 1e-16;
  options.parameter_tolerance = 1e-16;
  options.logging_type = ceres::SILENT;
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(options, problem, w.data(), &summary);

  LinearProbeResult r;
  std::vector<double> g(w.size());
  r.final_loss = objective->evaluate(w.data(), g.data());
  r.gradient_norm = Eigen::Map<const Vector>(g.data(), static_cast<Eigen::Index>(g.size())).norm();
  r.iterations = static_cast<int>(summary.iterations.size());
  r.converged = r.gradient_norm < cfg.gradient_tolerance;
  if (!std::isfinite(r.final_loss)) throw NumericError("linear probe diverged");
  if (!r.converged)
    spdlog::warn("linear probe stopped with gradient norm {:.3e} after {} iterations ({})", r.gradient_norm,
                 r.iterations, summary.message);
  r.weights = Eigen::Map<const Matrix>(w.data(), xtr.cols(), classes);
  r.train_accuracy = accuracy(xtr, r.weights, train.labels);
  r.test_accuracy = accuracy(xte, r.weights, test.labels);
  return r;
}

double linear_eval(const FeatureSet& train, const FeatureSet& test, const LinearProbeConfig& cfg) {
  return linear_probe(train, test, cfg).test_accuracy;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<size_t> order(xs.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    // Positions i..j (0-based) share the mean of ranks i+1..j+1.
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

void check_pair(std::span<const double> xs, std::span<const double> ys, const char* what) {
  if (xs.size() != ys.size()) throw DomainError(std::string(what) + ": inputs differ in length");
  if (xs.size() < 3) throw DomainError(std::string(what) + " needs at least 3 observations");
  for (size_t i = 0; i < xs.size(); ++i)
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) throw NumericError(std::string(what) + ": non-finite input");
}

}  // namespace

double pearson(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys, "pearson");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("correlation is undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys, "spearman");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

double RegressionFit::half_width(double x) const {
  return t_quantile * residual_sd * std::sqrt(1.0 / n + (x - x_mean) * (x - x_mean) / sxx);
}

RegressionFit fit_regression_ci(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys, "fit_regression_ci");
  RegressionFit f;
  f.n = static_cast<int>(xs.size());
  const double n = static_cast<double>(xs.size());
  f.x_mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    f.sxx += (xs[i] - f.x_mean) * (xs[i] - f.x_mean);
    sxy += (xs[i] - f.x_mean) * (ys[i] - my);
  }
  if (f.sxx == 0.0) throw NumericError("regression is rank deficient: xs is constant");
  f.slope = sxy / f.sxx;
  f.intercept = my - f.slope * f.x_mean;
  double sse = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - f.predict(xs[i]);
    sse += r * r;
  }
  f.residual_sd = std::sqrt(sse / (n - 2.0));
  const boost::math::students_t dist(n - 2.0);
  f.t_quantile = boost::math::quantile(boost::math::complement(dist, 0.025));
  return f;
}

// ---------------------------------------------------------------------------
// Correlation matrix
// ---------------------------------------------------------------------------

void validate(const ResultTable& t) {
  const auto m = static_cast<Eigen::Index>(t.models.size());
  const auto d = static_cast<Eigen::Index>(t.datasets.size());
  if (m == 0 || d == 0) throw DataError("result table is empty");
  if (t.top1.rows() != m || t.top1.cols() != d) throw DataError("result table shape does not match its labels");
  if (t.params.size() != t.models.size() || t.ratios.size() != t.models.size())
    throw DataError("result table needs params and ratio for every model");
  if (!t.archs.empty() && t.archs.size() != t.models.size())
    throw DataError("result table architectures do not match the model list");
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      const double v = t.top1(i, j);
      if (std::isnan(v))
        throw DataError("missing accuracy for model '" + t.models[static_cast<size_t>(i)] + "' on dataset '" +
                        t.datasets[static_cast<size_t>(j)] + "'");
      if (v < 0.0 || v > 1.0) throw DataError("accuracy outside [0, 1] in result table");
    }
}

CorrelationReport build_correlation_matrix(const ResultTable& table) {
  validate(table);
  const auto d = static_cast<Eigen::Index>(table.datasets.size());
  CorrelationReport r;
  r.datasets = table.datasets;
  r.spearman = Matrix::Identity(d, d);
  r.pearson = Matrix::Identity(d, d);
  r.counts = Eigen::MatrixXi::Constant(d, d, static_cast<int>(table.models.size()));
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = a + 1; b < d; ++b) {
      // Pairs are put in a canonical order so floating-point sums, and hence
      // the report, do not depend on the row order of the table.
      std::vector<std::pair<double, double>> pairs;
      for (Eigen::Index i = 0; i < table.top1.rows(); ++i) pairs.push_back({table.top1(i, a), table.top1(i, b)});
      std::sort(pairs.begin(), pairs.end());
      std::vector<double> sa, sb;
      for (const auto& [x, y] : pairs) {
        sa.push_back(x);
        sb.push_back(y);
      }
      r.spearman(a, b) = r.spearman(b, a) = spearman(sa, sb);
      r.pearson(a, b) = r.pearson(b, a) = pearson(sa, sb);
    }
  return r;
}

}  // namespace sslnas
