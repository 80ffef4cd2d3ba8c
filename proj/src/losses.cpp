#include "otdistill/losses.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

#include "otdistill/errors.hpp"

namespace otdistill {

std::pair<double, double> info_nce(const EmbeddingBatch& zv, const EmbeddingBatch& zt,
                                   double inv_temp) {
  if (zv.n() != zt.n() || zv.dim() != zt.dim()) {
    throw DimensionMismatch("info_nce: batches must share N and d");
  }
  const Matrix logits = gram(zv, zt);
  const Matrix eye = Matrix::identity(zv.n());
  const double loss_v = cross_entropy_rows(eye, row_softmax(logits, inv_temp));
  const double loss_t = cross_entropy_rows(eye, row_softmax(logits.transposed(), inv_temp));
  return {loss_v, loss_t};
}

std::pair<double, double> distill_loss(const EmbeddingBatch& zv, const EmbeddingBatch& zt,
                                       double inv_temp, const TargetDistribution& target_v,
                                       const TargetDistribution& target_t) {
  if (zv.n() != zt.n() || zv.dim() != zt.dim()) {
    throw DimensionMismatch("distill_loss: batches must share N and d");
  }
  const Matrix logits = gram(zv, zt);
  if (target_v.matrix.rows() != zv.n() || !target_v.matrix.is_square() ||
      !target_t.matrix.same_shape(target_v.matrix)) {
    throw ShapeMismatch("distill_loss: targets must be NxN");
  }
  const double loss_v = cross_entropy_rows(target_v.matrix, row_softmax(logits, inv_temp));
  const double loss_t =
      cross_entropy_rows(target_t.matrix, row_softmax(logits.transposed(), inv_temp));
  return {loss_v, loss_t};
}

std::pair<TargetDistribution, TargetDistribution> build_targets(
    const EmbeddingBatch& teacher_zv, const EmbeddingBatch& teacher_zt,
    double teacher_inv_temp, const TrainConfig& cfg) {
  const std::size_t n = teacher_zv.n();
  switch (cfg.method) {
    case Method::infonce:
      return {hard_target(n), hard_target(n)};
    case Method::ls:
      return {label_smoothing_target(n), label_smoothing_target(n)};
    case Method::kd:
      return {kd_target(teacher_zv, teacher_zt, teacher_inv_temp, Side::image),
              kd_target(teacher_zv, teacher_zt, teacher_inv_temp, Side::text)};
    case Method::otter: {
      const SimilarityConfig sim{cfg.gamma_v, cfg.gamma_t, cfg.eta};
      const SinkhornConfig sk{cfg.lambda, cfg.sinkhorn_iters, 1e-9};
      return {otter_target(similarity_matrix(teacher_zv, teacher_zt, sim, Side::image), sk),
              otter_target(similarity_matrix(teacher_zv, teacher_zt, sim, Side::text), sk)};
    }
  }
  throw MethodUnknown("<invalid enum>");
}

namespace {

// Backpropagate through row L2 normalization: for each row,
// g_x = (g_z - (g_z . z) z) / |x|.
Matrix normalization_backward(const Matrix& d_embed, const EmbeddingBatch& z,
                              const std::vector<double>& norms) {
  Matrix out(d_embed.rows(), d_embed.cols());
  for (std::size_t i = 0; i < d_embed.rows(); ++i) {
    const auto g = d_embed.row(i);
    const auto zi = z.matrix.row(i);
    double radial = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) radial += g[k] * zi[k];
    for (std::size_t k = 0; k < g.size(); ++k) {
      out(i, k) = (g[k] - radial * zi[k]) / norms[i];
    }
  }
  return out;
}

}  // namespace

std::pair<LossBreakdown, GradientBundle> loss_and_gradients(const EncoderState& encoder,
                                                            const TeacherState& teacher,
                                                            const PairBatch& batch,
                                                            const TrainConfig& cfg) {
  const std::size_t n = batch.n();
  if (batch.text_features.rows() != n) {
    throw DimensionMismatch("loss_and_gradients: image/text batch sizes differ");
  }

  // Student forward.
  std::vector<double> norms_v, norms_t;
  const Matrix pre_v = matmul(batch.image_features, encoder.w_image);
  const Matrix pre_t = matmul(batch.text_features, encoder.w_text);
  const EmbeddingBatch zv = l2_normalize_rows(pre_v, norms_v);
  const EmbeddingBatch zt = l2_normalize_rows(pre_t, norms_t);
  const double inv_temp = encoder.inv_temp();

  const Matrix logits = gram(zv, zt);
  const Matrix logits_t = logits.transposed();
  const Matrix prob_v = row_softmax(logits, inv_temp);
  const Matrix prob_t = row_softmax(logits_t, inv_temp);

  // Teacher forward; targets are constants with respect to the student.
  const EmbeddingBatch tzv = encode_rows(batch.image_features, teacher.state.w_image);
  const EmbeddingBatch tzt = encode_rows(batch.text_features, teacher.state.w_text);
  const auto [target_v, target_t] =
      build_targets(tzv, tzt, teacher.state.inv_temp(), cfg);

  const Matrix eye = Matrix::identity(n);
  LossBreakdown loss;
  loss.alpha = cfg.alpha;
  loss.info_nce_v = cross_entropy_rows(eye, prob_v);
  loss.info_nce_t = cross_entropy_rows(eye, prob_t);
  loss.distill_v = cross_entropy_rows(target_v.matrix, prob_v);
  loss.distill_t = cross_entropy_rows(target_t.matrix, prob_t);
  loss.total = cfg.alpha * (loss.info_nce_v + loss.info_nce_t) +
               (1.0 - cfg.alpha) * (loss.distill_v + loss.distill_t);

  // Effective target of the mixed loss; cross-entropy is linear in the
  // target, so the loss-level mixture collapses to alpha I + (1-alpha) M.
  const double dn = static_cast<double>(n);
  Matrix delta_v(n, n), delta_t(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double id = i == j ? 1.0 : 0.0;
      const double qv = cfg.alpha * id + (1.0 - cfg.alpha) * target_v.matrix(i, j);
      const double qt = cfg.alpha * id + (1.0 - cfg.alpha) * target_t.matrix(i, j);
      delta_v(i, j) = (prob_v(i, j) - qv) / dn;
      delta_t(i, j) = (prob_t(i, j) - qt) / dn;
    }
  }

  // d total / d logits(i,j), folding in both directions.
  Matrix d_logits(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      d_logits(i, j) = inv_temp * (delta_v(i, j) + delta_t(j, i));

  const double d_inv_temp =
      frobenius_inner(delta_v, logits) + frobenius_inner(delta_t, logits_t);

  const Matrix d_zv = matmul(d_logits, zt.matrix);
  const Matrix d_zt = matmul_tn(d_logits, zv.matrix);

  GradientBundle grads;
  grads.d_weights_image =
      matmul_tn(batch.image_features, normalization_backward(d_zv, zv, norms_v));
  grads.d_weights_text =
      matmul_tn(batch.text_features, normalization_backward(d_zt, zt, norms_t));
  grads.d_log_inv_temp = inv_temp * d_inv_temp;

  return {loss, grads};
}

}  // namespace otdistill
