#pragma once

// Shared helpers for the test binaries: tolerant matrix comparison, random
// batch construction, and reference (oracle) implementations kept
// independent of the library code they check.

#include <cmath>
#include <cstdint>
#include <vector>

#include "otdistill/matrix.hpp"
#include "otdistill/rng.hpp"

namespace testsupport {

using otdistill::EmbeddingBatch;
using otdistill::Matrix;
using otdistill::Rng;

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double err = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      err = std::max(err, std::abs(a(i, j) - b(i, j)));
  return err;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, double lo, double hi,
                            Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

inline EmbeddingBatch random_unit_batch(std::size_t n, std::size_t d, Rng& rng) {
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      m(i, j) = rng.normal();
      sq += m(i, j) * m(i, j);
    }
    const double norm = std::sqrt(sq);
    for (std::size_t j = 0; j < d; ++j) m(i, j) /= norm;
  }
  return otdistill::l2_normalize_rows(m);
}

// Long-run row/column scaling reference, written directly against the
// doubly-stochastic fixed point (no shared code with the library solver).
// Returns the row-stochastic plan.
inline Matrix sinkhorn_oracle(const Matrix& s, double lambda, std::size_t iterations) {
  const std::size_t n = s.rows();
  const double uniform = 1.0 / static_cast<double>(n);

  double s_max = s(0, 0);
  for (double v : s.data()) s_max = std::max(s_max, v);

  Matrix kernel(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) kernel(i, j) = std::exp((s(i, j) - s_max) / lambda);

  std::vector<double> r(n, 1.0), c(n, 1.0);
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += kernel(i, j) * c[j];
      r[i] = uniform / sum;
    }
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += r[i] * kernel(i, j);
      c[j] = uniform / sum;
    }
  }

  Matrix plan(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      plan(i, j) = r[i] * kernel(i, j) * c[j];
      row_sum += plan(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) plan(i, j) /= row_sum;
  }
  return plan;
}

// Least-squares additive decomposition residual: how far log(m) - s/lambda
// is from u_i + v_j form.
inline double separability_residual(const Matrix& m, const Matrix& s, double lambda) {
  const std::size_t n = m.rows();
  Matrix resid(n, n);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      resid(i, j) = std::log(m(i, j)) - s(i, j) / lambda;
      grand += resid(i, j);
    }
  }
  grand /= static_cast<double>(n * n);

  std::vector<double> row_mean(n, 0.0), col_mean(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      row_mean[i] += resid(i, j);
      col_mean[j] += resid(i, j);
    }
  for (double& v : row_mean) v /= static_cast<double>(n);
  for (double& v : col_mean) v /= static_cast<double>(n);

  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      worst = std::max(worst, std::abs(resid(i, j) - row_mean[i] - col_mean[j] + grand));
  return worst;
}

}  // namespace testsupport
