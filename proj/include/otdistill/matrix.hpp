#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace otdistill {

// Dense row-major matrix of doubles. The only storage type in the library;
// batches stay small (a few thousand rows), so there is no blocking, no
// sparsity, and no BLAS dependency.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  bool is_square() const { return rows_ == cols_; }
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }

  std::span<double> data() { return values_; }
  std::span<const double> data() const { return values_; }

  Matrix transposed() const;
  bool all_finite() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// A batch of N row embeddings. `normalized` records that every row has unit
// Euclidean norm (within 1e-12).
struct EmbeddingBatch {
  Matrix matrix;
  bool normalized = false;

  std::size_t n() const { return matrix.rows(); }
  std::size_t dim() const { return matrix.cols(); }
};

// Scales every row to unit Euclidean norm. Rows whose norm is already within
// 1e-12 of 1 are left untouched, which makes the operation exactly
// idempotent. Throws ZeroRowNorm for rows with norm below 1e-30.
EmbeddingBatch l2_normalize_rows(const Matrix& m);

// Same, but also reports the pre-normalization row norms (needed by the
// normalization Jacobian in the loss gradients).
EmbeddingBatch l2_normalize_rows(const Matrix& m, std::vector<double>& norms_out);

// Pairwise dot products: out[i][j] = a.row(i) . b.row(j). With normalized
// inputs these are cosine similarities in [-1, 1].
Matrix gram(const EmbeddingBatch& a, const EmbeddingBatch& b);

// Row-wise softmax of inv_temp * m, stabilized by per-row max subtraction.
// Output rows sum to 1 within 1e-12 and preserve the input ordering.
Matrix row_softmax(const Matrix& m, double inv_temp);

// -(1/N) sum_ij target[i][j] * log(prob[i][j]), where N is the row count.
// Terms with target == 0 contribute exactly 0 regardless of prob (explicit
// branch, no clamping). Throws NonFiniteLoss if the result is not finite.
double cross_entropy_rows(const Matrix& target, const Matrix& prob);

Matrix matmul(const Matrix& a, const Matrix& b);     // a (m x k) * b (k x n)
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a (m x k) * b^T, b (n x k)
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b, a (m x k), b (m x n)

double frobenius_inner(const Matrix& a, const Matrix& b);

}  // namespace otdistill
