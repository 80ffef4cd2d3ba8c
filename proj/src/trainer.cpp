#include "otdistill/trainer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "otdistill/errors.hpp"
#include "otdistill/losses.hpp"
#include "otdistill/rng.hpp"

namespace otdistill {

namespace {

void ema_matrix(Matrix& teacher, const Matrix& student, double m) {
  if (!teacher.same_shape(student)) {
    throw ShapeMismatch("ema_update: teacher/student parameter shapes differ");
  }
  auto t = teacher.data();
  const auto s = student.data();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = m * t[i] + (1.0 - m) * s[i];
}

void sgd_matrix(Matrix& param, const Matrix& grad, Matrix& vel, double lr, double momentum,
                double weight_decay) {
  if (!param.same_shape(grad) || !param.same_shape(vel)) {
    throw ShapeMismatch("sgd_step: parameter/gradient/velocity shapes differ");
  }
  auto p = param.data();
  const auto g = grad.data();
  auto v = vel.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = momentum * v[i] + (g[i] + weight_decay * p[i]);
    p[i] -= lr * v[i];
  }
}

Matrix uniform_init(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}

}  // namespace

TeacherState ema_update(const TeacherState& teacher, const EncoderState& student) {
  TeacherState out = teacher;
  const double m = teacher.momentum;
  ema_matrix(out.state.w_image, student.w_image, m);
  ema_matrix(out.state.w_text, student.w_text, m);
  out.state.log_inv_temp = m * out.state.log_inv_temp + (1.0 - m) * student.log_inv_temp;
  return out;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  if (total_steps < 1 || step > total_steps) {
    throw StepOutOfRange("cosine_lr: need 0 <= step <= total_steps, total_steps >= 1");
  }
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void sgd_step(EncoderState& state, const GradientBundle& grads, GradientBundle& velocity,
              double lr, double momentum, double weight_decay) {
  sgd_matrix(state.w_image, grads.d_weights_image, velocity.d_weights_image, lr, momentum,
             weight_decay);
  sgd_matrix(state.w_text, grads.d_weights_text, velocity.d_weights_text, lr, momentum,
             weight_decay);
  velocity.d_log_inv_temp = momentum * velocity.d_log_inv_temp +
                            (grads.d_log_inv_temp + weight_decay * state.log_inv_temp);
  state.log_inv_temp -= lr * velocity.d_log_inv_temp;
}

EncoderState init_encoder(std::size_t d_img_in, std::size_t d_txt_in, const TrainConfig& cfg) {
  Rng rng(cfg.seed);
  EncoderState state;
  state.w_image = uniform_init(d_img_in, cfg.d_emb, rng);
  state.w_text = uniform_init(d_txt_in, cfg.d_emb, rng);
  state.log_inv_temp = std::log(cfg.init_inv_temp);
  return state;
}

GradientBundle zero_gradients(const EncoderState& state) {
  return {Matrix(state.w_image.rows(), state.w_image.cols()),
          Matrix(state.w_text.rows(), state.w_text.cols()), 0.0};
}

std::pair<EncoderState, TrainLog> train(const TrainConfig& cfg,
                                        const std::vector<PairBatch>& dataset) {
  TrainResult res = train_full(cfg, dataset);
  return {std::move(res.student), std::move(res.log)};
}

TrainResult train_full(const TrainConfig& cfg, const std::vector<PairBatch>& dataset) {
  std::vector<const PairBatch*> batches;
  for (const PairBatch& b : dataset) {
    if (b.n() == cfg.batch_size) batches.push_back(&b);
  }
  if (batches.empty()) {
    throw EmptyDataset("no batches of size " + std::to_string(cfg.batch_size));
  }

  const std::size_t d_img_in = batches.front()->image_features.cols();
  const std::size_t d_txt_in = batches.front()->text_features.cols();

  TrainResult res;
  res.student = init_encoder(d_img_in, d_txt_in, cfg);
  res.teacher = TeacherState{res.student, cfg.ema_momentum};

  GradientBundle velocity = zero_gradients(res.student);
  const std::size_t total_steps = cfg.epochs * batches.size();
  res.log.steps.reserve(total_steps);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const PairBatch* batch : batches) {
      const double lr = cosine_lr(step, total_steps, cfg.lr);
      try {
        if (!cfg.use_ema_teacher) res.teacher = TeacherState{res.student, cfg.ema_momentum};
        auto [loss, grads] = loss_and_gradients(res.student, res.teacher, *batch, cfg);
        sgd_step(res.student, grads, velocity, lr, cfg.sgd_momentum, cfg.weight_decay);
        if (cfg.use_ema_teacher) res.teacher = ema_update(res.teacher, res.student);
        res.log.steps.push_back({step, lr, loss});
      } catch (const NumericError& e) {
        throw NonFinite("training step " + std::to_string(step) + ": " + e.what());
      }
      ++step;
    }
  }
  if (!cfg.use_ema_teacher) res.teacher = TeacherState{res.student, cfg.ema_momentum};
  return res;
}

}  // namespace otdistill
