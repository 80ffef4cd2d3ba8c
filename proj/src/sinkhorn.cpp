#include "otdistill/sinkhorn.hpp"

#include <cassert>
#include <cmath>
#include <string>
#include <vector>

#include "otdistill/errors.hpp"

namespace otdistill {

namespace {

// exp((s - global max) / lambda), scaled to total mass 1.
Matrix initial_mass(const Matrix& s, double lambda) {
  const std::size_t n = s.rows();
  double s_max = -HUGE_VAL;
  for (double v : s.data()) s_max = std::max(s_max, v);

  Matrix t(n, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp((s(i, j) - s_max) / lambda);
      t(i, j) = e;
      total += e;
    }
  }
  // The max entry is exp(0) = 1, so total >= 1 and this never divides by 0.
  for (double& v : t.data()) v /= total;
  return t;
}

void row_sums(const Matrix& t, std::vector<double>& out) {
  out.assign(t.rows(), 0.0);
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (double v : t.row(i)) out[i] += v;
}

void col_sums(const Matrix& t, std::vector<double>& out) {
  out.assign(t.cols(), 0.0);
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) out[j] += t(i, j);
}

double max_deviation(const std::vector<double>& sums, double target) {
  double err = 0.0;
  for (double s : sums) err = std::max(err, std::abs(s - target));
  return err;
}

void require_positive(const std::vector<double>& sums, const char* what) {
  for (double s : sums) {
    if (s <= 0.0 || !std::isfinite(s)) {
      throw NonFinite(std::string(what) +
                      " mass underflowed to zero during Sinkhorn scaling");
    }
  }
}

// One sweep: rows to 1/N, then columns to 1/N.
void sweep(Matrix& t, std::vector<double>& sums) {
  const std::size_t n = t.rows();
  const double dn = static_cast<double>(n);

  row_sums(t, sums);
  require_positive(sums, "row");
  for (std::size_t i = 0; i < n; ++i) {
    const double scale = sums[i] * dn;
    for (double& v : t.row(i)) v /= scale;
  }

  col_sums(t, sums);
  require_positive(sums, "column");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) t(i, j) /= sums[j] * dn;
}

TransportPlan finalize(Matrix t, std::size_t iterations, bool converged) {
  const std::size_t n = t.rows();
  const double uniform = 1.0 / static_cast<double>(n);

  std::vector<double> sums;
  col_sums(t, sums);
  const double col_err = max_deviation(sums, uniform);
  row_sums(t, sums);
  const double row_err = max_deviation(sums, uniform);

  require_positive(sums, "row");
  for (std::size_t i = 0; i < n; ++i)
    for (double& v : t.row(i)) v /= sums[i];

  return {std::move(t), row_err, col_err, iterations, converged};
}

}  // namespace

TransportPlan sinkhorn(const Matrix& s, const SinkhornConfig& cfg) {
  if (!s.is_square()) throw NotSquare("sinkhorn requires a square similarity matrix");
  assert(cfg.lambda > 0.0);

  Matrix t = initial_mass(s, cfg.lambda);
  std::vector<double> sums;
  for (std::size_t k = 0; k < cfg.n_iter; ++k) sweep(t, sums);
  return finalize(std::move(t), cfg.n_iter, true);
}

TransportPlan sinkhorn_converged(const Matrix& s, double lambda, double tol,
                                 std::size_t max_iter) {
  if (!s.is_square()) throw NotSquare("sinkhorn requires a square similarity matrix");
  assert(lambda > 0.0 && tol > 0.0);

  const double uniform = 1.0 / static_cast<double>(s.rows());
  Matrix t = initial_mass(s, lambda);
  std::vector<double> sums;

  std::size_t used = 0;
  bool converged = false;
  while (used < max_iter) {
    sweep(t, sums);
    ++used;
    // Columns were just normalized, so the row marginal is the live residual.
    col_sums(t, sums);
    const double col_err = max_deviation(sums, uniform);
    row_sums(t, sums);
    const double row_err = max_deviation(sums, uniform);
    if (row_err < tol && col_err < tol) {
      converged = true;
      break;
    }
  }
  return finalize(std::move(t), used, converged);
}

}  // namespace otdistill
