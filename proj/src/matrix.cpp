#include "otdistill/matrix.hpp"

#include <cassert>
#include <cmath>
#include <cstdlib>
#include <string>

#include "otdistill/errors.hpp"

namespace otdistill {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ShapeMismatch("matrix data length " + std::to_string(values_.size()) +
                        " does not match " + std::to_string(rows_) + "x" +
                        std::to_string(cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix out(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeMismatch("ragged row in matrix literal");
    std::size_t j = 0;
    for (double v : row) out(i, j++) = v;
    ++i;
  }
  return out;
}

Matrix Matrix::transposed() const {
  Matrix out(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j);
  return out;
}

bool Matrix::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

EmbeddingBatch l2_normalize_rows(const Matrix& m) {
  std::vector<double> norms;
  return l2_normalize_rows(m, norms);
}

EmbeddingBatch l2_normalize_rows(const Matrix& m, std::vector<double>& norms_out) {
  EmbeddingBatch out{m, true};
  norms_out.assign(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sq = 0.0;
    for (double v : m.row(i)) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm < 1e-30) throw ZeroRowNorm(i);
    norms_out[i] = norm;
    // An already-unit row is left bit-for-bit intact; this makes the
    // operation exactly idempotent.
    if (std::abs(norm - 1.0) <= 1e-12) continue;
    for (double& v : out.matrix.row(i)) v /= norm;
  }
  return out;
}

Matrix gram(const EmbeddingBatch& a, const EmbeddingBatch& b) {
  if (a.dim() != b.dim()) {
    throw DimensionMismatch("gram: embedding dims differ (" + std::to_string(a.dim()) +
                            " vs " + std::to_string(b.dim()) + ")");
  }
  assert(a.normalized && b.normalized);
  return matmul_nt(a.matrix, b.matrix);
}

Matrix row_softmax(const Matrix& m, double inv_temp) {
  assert(inv_temp > 0.0);
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double row_max = -HUGE_VAL;
    for (double v : m.row(i)) row_max = std::max(row_max, v);
    double denom = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const double e = std::exp(inv_temp * (m(i, j) - row_max));
      out(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) /= denom;
  }
  return out;
}

double cross_entropy_rows(const Matrix& target, const Matrix& prob) {
  if (!target.same_shape(prob)) {
    throw ShapeMismatch("cross_entropy_rows: target is " + std::to_string(target.rows()) +
                        "x" + std::to_string(target.cols()) + ", prob is " +
                        std::to_string(prob.rows()) + "x" + std::to_string(prob.cols()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < target.rows(); ++i) {
    for (std::size_t j = 0; j < target.cols(); ++j) {
      const double t = target(i, j);
      if (t == 0.0) continue;  // 0 * log 0 := 0
      acc += t * std::log(prob(i, j));
    }
  }
  const double loss = -acc / static_cast<double>(target.rows());
  if (!std::isfinite(loss)) throw NonFiniteLoss("cross entropy is not finite");
  return loss;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionMismatch("matmul: inner dims differ (" + std::to_string(a.cols()) +
                            " vs " + std::to_string(b.rows()) + ")");
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionMismatch("matmul_nt: inner dims differ (" + std::to_string(a.cols()) +
                            " vs " + std::to_string(b.cols()) + ")");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ai = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto bj = b.row(j);
      double dot = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) dot += ai[k] * bj[k];
      out(i, j) = dot;
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionMismatch("matmul_tn: inner dims differ (" + std::to_string(a.rows()) +
                            " vs " + std::to_string(b.rows()) + ")");
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
    }
  }
  return out;
}

double frobenius_inner(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("frobenius_inner: shapes differ");
  double acc = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) acc += da[i] * db[i];
  return acc;
}

}  // namespace otdistill
