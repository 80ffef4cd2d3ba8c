#pragma once

#include <cstddef>

#include "otdistill/matrix.hpp"
#include "otdistill/sinkhorn.hpp"

namespace otdistill {

// Weights for the teacher similarity matrix. eta is the diagonal suppression
// constant; 100 is large enough that, combined with the stabilized exp in
// sinkhorn, the transported diagonal lands below 1e-12 for any lambda >= 0.05.
struct SimilarityConfig {
  double gamma_v = 1.0;
  double gamma_t = 1.0;
  double eta = 100.0;
};

enum class Side { image, text };

enum class TargetKind { hard, label_smoothing, kd, otter };

// Row-stochastic matching target consumed by the distillation loss. alpha
// records the identity-mixing coefficient (0 for raw targets).
struct TargetDistribution {
  Matrix matrix;
  TargetKind kind = TargetKind::hard;
  double alpha = 0.0;
};

// Teacher similarity matrix:
//   side = image:  gamma_v V.V' + gamma_t T.T' + V.T' - eta I
//   side = text:   gamma_v T.T' + gamma_t V.V' + T.V' - eta I
// (V, T are the teacher image/text embedding batches). The sides swap roles:
// gamma_v always weighs the query modality's self-similarity, so the two
// sides are transposes of each other exactly when gamma_v == gamma_t.
Matrix similarity_matrix(const EmbeddingBatch& teacher_v, const EmbeddingBatch& teacher_t,
                         const SimilarityConfig& cfg, Side side);

// Optimal-transport matching target: the Sinkhorn plan over s. Requires
// N >= 2 (the off-diagonal conditional is undefined for a single pair).
TargetDistribution otter_target(const Matrix& s, const SinkhornConfig& sk);

// Conventional distillation target: row softmax of the teacher's cross-modal
// similarities. The diagonal is kept.
TargetDistribution kd_target(const EmbeddingBatch& teacher_v, const EmbeddingBatch& teacher_t,
                             double inv_temp, Side side);

// Uniform off-diagonal target: zero diagonal, 1/(n-1) elsewhere.
TargetDistribution label_smoothing_target(std::size_t n);

// One-hot pairing target (the identity matrix).
TargetDistribution hard_target(std::size_t n);

// alpha * I + (1 - alpha) * m. Expects m row-stochastic with zero diagonal,
// so the output diagonal is exactly alpha.
TargetDistribution mix_with_identity(const TargetDistribution& m, double alpha);

}  // namespace otdistill
