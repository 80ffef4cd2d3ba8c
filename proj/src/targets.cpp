#include "otdistill/targets.hpp"

#include <string>
#include <utility>

#include "otdistill/errors.hpp"

namespace otdistill {

Matrix similarity_matrix(const EmbeddingBatch& teacher_v, const EmbeddingBatch& teacher_t,
                         const SimilarityConfig& cfg, Side side) {
  if (teacher_v.n() != teacher_t.n() || teacher_v.dim() != teacher_t.dim()) {
    throw DimensionMismatch("similarity_matrix: teacher batches must share N and d");
  }
  const Matrix vv = gram(teacher_v, teacher_v);
  const Matrix tt = gram(teacher_t, teacher_t);
  const Matrix& own = side == Side::image ? vv : tt;
  const Matrix& other = side == Side::image ? tt : vv;
  const Matrix cross = side == Side::image ? gram(teacher_v, teacher_t)
                                           : gram(teacher_t, teacher_v);

  const std::size_t n = teacher_v.n();
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      s(i, j) = cfg.gamma_v * own(i, j) + cfg.gamma_t * other(i, j) + cross(i, j);
    }
    s(i, i) -= cfg.eta;
  }
  return s;
}

TargetDistribution otter_target(const Matrix& s, const SinkhornConfig& sk) {
  if (s.rows() < 2) {
    throw DegenerateRow("transport target needs N >= 2: a 1x1 batch has no off-diagonal mass");
  }
  TransportPlan plan = sinkhorn(s, sk);
  return {std::move(plan.matrix), TargetKind::otter, 0.0};
}

TargetDistribution kd_target(const EmbeddingBatch& teacher_v, const EmbeddingBatch& teacher_t,
                             double inv_temp, Side side) {
  if (teacher_v.n() != teacher_t.n() || teacher_v.dim() != teacher_t.dim()) {
    throw DimensionMismatch("kd_target: teacher batches must share N and d");
  }
  const Matrix cross = side == Side::image ? gram(teacher_v, teacher_t)
                                           : gram(teacher_t, teacher_v);
  return {row_softmax(cross, inv_temp), TargetKind::kd, 0.0};
}

TargetDistribution label_smoothing_target(std::size_t n) {
  if (n < 2) {
    throw DegenerateRow("label smoothing target needs N >= 2, got " + std::to_string(n));
  }
  const double off = 1.0 / static_cast<double>(n - 1);
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = i == j ? 0.0 : off;
  return {std::move(m), TargetKind::label_smoothing, 0.0};
}

TargetDistribution hard_target(std::size_t n) {
  return {Matrix::identity(n), TargetKind::hard, 1.0};
}

TargetDistribution mix_with_identity(const TargetDistribution& m, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw AlphaOutOfRange(alpha);
  TargetDistribution out{Matrix(m.matrix.rows(), m.matrix.cols()), m.kind, alpha};
  for (std::size_t i = 0; i < m.matrix.rows(); ++i) {
    for (std::size_t j = 0; j < m.matrix.cols(); ++j) {
      const double id = i == j ? 1.0 : 0.0;
      out.matrix(i, j) = alpha * id + (1.0 - alpha) * m.matrix(i, j);
    }
  }
  return out;
}

}  // namespace otdistill
