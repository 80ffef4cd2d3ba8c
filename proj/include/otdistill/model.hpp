#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "otdistill/matrix.hpp"

namespace otdistill {

enum class Method { infonce, ls, kd, otter };

std::string to_string(Method m);
Method method_from_string(const std::string& name);  // throws MethodUnknown

// Student parameters: one bias-free linear map per modality followed by row
// L2 normalization, plus a learnable inverse temperature stored in log space
// so positivity is structural.
struct EncoderState {
  Matrix w_image;  // d_img_in x d_emb
  Matrix w_text;   // d_txt_in x d_emb
  double log_inv_temp = 0.0;

  double inv_temp() const;
  std::size_t d_emb() const { return w_image.cols(); }
};

// Shadow copy of the student tracked by exponential moving average.
struct TeacherState {
  EncoderState state;
  double momentum = 0.999;
};

struct PairBatch {
  Matrix image_features;  // N x d_img_in
  Matrix text_features;   // N x d_txt_in
  std::vector<std::int64_t> latent_labels;  // evaluation only, may be empty

  std::size_t n() const { return image_features.rows(); }
};

struct TrainConfig {
  Method method = Method::infonce;
  double alpha = 0.5;
  double gamma_v = 1.0;
  double gamma_t = 1.0;
  double eta = 100.0;
  double lambda = 0.15;
  std::size_t sinkhorn_iters = 5;
  bool use_ema_teacher = true;
  double ema_momentum = 0.999;
  std::size_t batch_size = 512;
  std::size_t epochs = 10;
  double lr = 3e-3;
  double sgd_momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  std::size_t d_emb = 16;
  double init_inv_temp = 1.0 / 0.07;
};

struct LossBreakdown {
  double total = 0.0;
  double info_nce_v = 0.0;
  double info_nce_t = 0.0;
  double distill_v = 0.0;
  double distill_t = 0.0;
  double alpha = 0.0;
};

// Gradients of the total loss with respect to the EncoderState fields.
struct GradientBundle {
  Matrix d_weights_image;
  Matrix d_weights_text;
  double d_log_inv_temp = 0.0;
};

// features (N x d_in) -> unit-norm embeddings (N x d_emb).
EmbeddingBatch encode_rows(const Matrix& features, const Matrix& weights);

}  // namespace otdistill
