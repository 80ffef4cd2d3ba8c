#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "otdistill/model.hpp"

namespace otdistill {

struct StepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct TrainLog {
  std::vector<StepRecord> steps;
};

// theta_teacher <- m * theta_teacher + (1 - m) * theta_student, for every
// parameter including the log inverse temperature.
TeacherState ema_update(const TeacherState& teacher, const EncoderState& student);

// base_lr * 0.5 * (1 + cos(pi * step / total_steps)).
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

// Heavy-ball SGD: v <- momentum * v + (grad + weight_decay * param);
// param <- param - lr * v. Updates state and velocity in place.
void sgd_step(EncoderState& state, const GradientBundle& grads, GradientBundle& velocity,
              double lr, double momentum, double weight_decay);

// Seeded uniform init in [-1/sqrt(d_in), +1/sqrt(d_in)] per encoder;
// log_inv_temp starts at log(cfg.init_inv_temp).
EncoderState init_encoder(std::size_t d_img_in, std::size_t d_txt_in, const TrainConfig& cfg);

GradientBundle zero_gradients(const EncoderState& state);

// Full training loop: for every batch, loss_and_gradients -> sgd_step ->
// ema_update (teacher starts as an exact copy of the student; with
// use_ema_teacher = false the current student weights serve as teacher).
// Batches whose size differs from cfg.batch_size are dropped. Deterministic
// given cfg.seed.
std::pair<EncoderState, TrainLog> train(const TrainConfig& cfg,
                                        const std::vector<PairBatch>& dataset);

// As train(), but also returns the final teacher state (for checkpoints).
struct TrainResult {
  EncoderState student;
  TeacherState teacher;
  TrainLog log;
};
TrainResult train_full(const TrainConfig& cfg, const std::vector<PairBatch>& dataset);

}  // namespace otdistill
