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

// Independent reference implementations. They follow textbook definitions
// directly and share no code with the library.

#ifndef SSLNAS_TESTS_ORACLES_HPP_
#define SSLNAS_TESTS_ORACLES_HPP_

#include <cmath>
#include <vector>

#include "sslnas/nn/layers.hpp"
#include "sslnas/rng.hpp"
#include "sslnas/tensor.hpp"

namespace sslnas::testing {

// NT-Xent straight from its definition: for every anchor i, the positive is
// its partner (i ^ 1) and the denominator runs over all k != i.
inline double nt_xent_bruteforce(const Matrix& z, double tau) {
  const int m = static_cast<int>(z.rows());
  long double total = 0.0L;
  for (int i = 0; i < m; ++i) {
    auto sim = [&](int a, int b) {
      long double s = 0.0L;
      for (int c = 0; c < z.cols(); ++c) s += static_cast<long double>(z(a, c)) * z(b, c);
      return s;
    };
    long double den = 0.0L;
    for (int k = 0; k < m; ++k)
      if (k != i) den += std::exp(sim(i, k) / tau);
    total += -std::log(std::exp(sim(i, i ^ 1) / tau) / den);
  }
  return static_cast<double>(total / m);
}

inline Matrix random_unit_rows(int rows, int cols, Rng& rng) {
  Matrix z(rows, cols);
  for (int r = 0; r < rows; ++r) {
    double n = 0.0;
    for (int c = 0; c < cols; ++c) {
      z(r, c) = rng.normal();
      n += z(r, c) * z(r, c);
    }
    z.row(r) /= std::sqrt(n);
  }
  return z;
}

// Rank of x_i = 1 + #{j : x_j < x_i} + (#{j : x_j == x_i} - 1) / 2, by
// pairwise counting.
inline std::vector<double> rank_by_counting(const std::vector<double>& xs) {
  std::vector<double> r(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (size_t j = 0; j < xs.size(); ++j) {
      if (xs[j] < xs[i]) less += 1.0;
      if (xs[j] == xs[i]) equal += 1.0;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

// Product-moment correlation from raw moments in extended precision.
inline double pearson_moments(const std::vector<double>& xs, const std::vector<double>& ys) {
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const long double n = static_cast<long double>(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    const long double x = xs[i], y = ys[i];
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const long double cov = n * sxy - sx * sy;
  const long double vx = n * sxx - sx * sx, vy = n * syy - sy * sy;
  return static_cast<double>(cov / std::sqrt(vx * vy));
}

inline double spearman_by_definition(const std::vector<double>& xs, const std::vector<double>& ys) {
  return pearson_moments(rank_by_counting(xs), rank_by_counting(ys));
}

// Standard normal CDF.
inline double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace sslnas::testing

#endif  // SSLNAS_TESTS_ORACLES_HPP_
