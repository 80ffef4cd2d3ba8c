#pragma once

#include <utility>

#include "otdistill/model.hpp"
#include "otdistill/targets.hpp"

namespace otdistill {

// Symmetric contrastive loss against one-hot pairing labels. Returns
// (image-to-text, text-to-image) components.
std::pair<double, double> info_nce(const EmbeddingBatch& zv, const EmbeddingBatch& zt,
                                   double inv_temp);

// Cross-entropy of the student's row-softmax probabilities against the given
// row-stochastic targets, per direction.
std::pair<double, double> distill_loss(const EmbeddingBatch& zv, const EmbeddingBatch& zt,
                                       double inv_temp, const TargetDistribution& target_v,
                                       const TargetDistribution& target_t);

// Distillation targets for cfg.method, computed from teacher embeddings:
// identity for infonce, uniform off-diagonal for ls, softmaxed cross
// similarities for kd, the transport plan over the full similarity matrix
// for otter. Both directions.
std::pair<TargetDistribution, TargetDistribution> build_targets(
    const EmbeddingBatch& teacher_zv, const EmbeddingBatch& teacher_zt,
    double teacher_inv_temp, const TrainConfig& cfg);

// Full forward pass and exact analytic gradients for one batch:
// student embeddings, teacher targets (no gradient flows through the
// teacher), the mixed loss alpha * L_contrastive + (1 - alpha) * L_distill
// over both directions, and its derivatives with respect to the encoder
// weights and the log inverse temperature.
//
// The chain is closed-form: softmax cross-entropy gives (P - Q)/N on the
// scaled logits, the dot-product layer routes that to each embedding side,
// the row normalization contributes (I - z z^T)/|x| per row, and the linear
// encoders finish with a feature-transpose product.
std::pair<LossBreakdown, GradientBundle> loss_and_gradients(const EncoderState& encoder,
                                                            const TeacherState& teacher,
                                                            const PairBatch& batch,
                                                            const TrainConfig& cfg);

}  // namespace otdistill
