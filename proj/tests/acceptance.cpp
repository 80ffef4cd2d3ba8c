// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its tolerances and its runtime budget.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "otdistill/cli.hpp"
#include "otdistill/errors.hpp"
#include "otdistill/evaluation.hpp"
#include "otdistill/io.hpp"
#include "otdistill/losses.hpp"
#include "otdistill/sinkhorn.hpp"
#include "otdistill/synthdata.hpp"
#include "otdistill/targets.hpp"
#include "otdistill/trainer.hpp"
#include "grad_check.hpp"
#include "support.hpp"

using namespace otdistill;
using testsupport::fd_gradients;
using testsupport::make_loss_setup;
using testsupport::max_abs_diff;
using testsupport::max_gradient_error;
using testsupport::random_matrix;
using testsupport::random_unit_batch;
using testsupport::separability_residual;

namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& why) {
    if (!cond && ok) {
      ok = false;
      detail = why;
    }
  }
  void note(const std::string& text) {
    if (!detail.empty()) detail += "; ";
    detail += text;
  }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ---- shared fixtures ----

SynthDataset clean_dataset() {
  SynthConfig cfg;
  cfg.n_concepts = 8;
  cfg.samples_per_concept = 128;
  cfg.d_img_in = 32;
  cfg.d_txt_in = 32;
  cfg.feature_noise_sigma = 0.1;
  cfg.caption_swap_prob = 0.0;
  cfg.seed = 101;
  return generate(cfg);
}

EncoderState train_clean_scorer(const SynthDataset& ds) {
  TrainConfig cfg;
  cfg.method = Method::infonce;
  cfg.batch_size = 64;
  cfg.epochs = 10;
  cfg.d_emb = 16;
  cfg.lr = 0.01;
  cfg.seed = 1;
  return train(cfg, make_batches(ds, cfg.batch_size, cfg.seed)).first;
}

// ---- criteria ----

Check c1_sinkhorn_correctness() {
  Check c;
  Rng rng(1);
  double worst_marginal = 0.0, worst_residual = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix s = random_matrix(16, 16, -2.0, 2.0, rng);
    const TransportPlan plan = sinkhorn_converged(s, 0.15, 1e-9, 100000);
    c.require(plan.converged, "plan did not converge");
    worst_marginal = std::max({worst_marginal, plan.row_marginal_error,
                               plan.col_marginal_error});
    worst_residual = std::max(worst_residual, separability_residual(plan.matrix, s, 0.15));
  }
  c.require(worst_marginal < 1e-9, "marginal error " + fmt(worst_marginal) + " >= 1e-9");
  c.require(worst_residual < 1e-8, "separability residual " + fmt(worst_residual) +
                                       " >= 1e-8");
  c.note("max marginal err " + fmt(worst_marginal) + ", max separability residual " +
         fmt(worst_residual));
  return c;
}

Check c2_zero_iteration_equivalence() {
  Check c;
  Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix s = random_matrix(12, 12, -2.0, 2.0, rng);
    const double lambda = rng.uniform(0.05, 0.5);
    const TransportPlan plan = sinkhorn(s, {lambda, 0, 1e-9});
    worst = std::max(worst, max_abs_diff(plan.matrix, row_softmax(s, 1.0 / lambda)));
  }
  c.require(worst <= 1e-12, "entrywise gap " + fmt(worst) + " > 1e-12");
  c.note("max entrywise gap " + fmt(worst));
  return c;
}

Check c3_kd_otter_equivalence() {
  Check c;
  Rng rng(3);
  double worst_target = 0.0, worst_loss = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const EmbeddingBatch v = random_unit_batch(16, 8, rng);
    const EmbeddingBatch t = random_unit_batch(16, 8, rng);
    const double inv_temp = rng.uniform(1.0, 15.0);
    for (Side side : {Side::image, Side::text}) {
      const TargetDistribution kd = kd_target(v, t, inv_temp, side);
      const Matrix s = similarity_matrix(v, t, {0.0, 0.0, 0.0}, side);
      const TargetDistribution ot = otter_target(s, {1.0 / inv_temp, 0, 1e-9});
      worst_target = std::max(worst_target, max_abs_diff(kd.matrix, ot.matrix));
    }

    // full losses through both routes on a shared student
    auto setup = make_loss_setup(500 + trial, 16, 8, 4);
    TrainConfig kd_cfg;
    kd_cfg.method = Method::kd;
    kd_cfg.alpha = 0.5;
    TrainConfig ot_cfg = kd_cfg;
    ot_cfg.method = Method::otter;
    ot_cfg.gamma_v = ot_cfg.gamma_t = ot_cfg.eta = 0.0;
    ot_cfg.sinkhorn_iters = 0;
    ot_cfg.lambda = 1.0 / setup.teacher.state.inv_temp();
    const double kd_total =
        loss_and_gradients(setup.encoder, setup.teacher, setup.batch, kd_cfg).first.total;
    const double ot_total =
        loss_and_gradients(setup.encoder, setup.teacher, setup.batch, ot_cfg).first.total;
    worst_loss = std::max(worst_loss, std::abs(kd_total - ot_total));
  }
  c.require(worst_target <= 1e-12, "target gap " + fmt(worst_target) + " > 1e-12");
  c.require(worst_loss <= 1e-10, "loss gap " + fmt(worst_loss) + " > 1e-10");
  c.note("max target gap " + fmt(worst_target) + ", max loss gap " + fmt(worst_loss));
  return c;
}

Check c4_gradient_fidelity() {
  Check c;
  double worst = 0.0;
  for (Method method : {Method::infonce, Method::ls, Method::kd, Method::otter}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto setup =
          make_loss_setup(1000 * (static_cast<std::uint64_t>(method) + 1) + seed, 8, 6, 4);
      TrainConfig cfg;
      cfg.method = method;
      cfg.alpha = 0.5;
      const auto [loss, analytic] =
          loss_and_gradients(setup.encoder, setup.teacher, setup.batch, cfg);
      const GradientBundle fd = fd_gradients(setup.encoder, setup.teacher, setup.batch, cfg);
      const double err = max_gradient_error(analytic, fd);
      if (err > worst) worst = err;
      c.require(err < 1e-5, "method " + to_string(method) + " seed " +
                                std::to_string(seed) + ": rel err " + fmt(err));
    }
  }
  c.note("max rel err " + fmt(worst) + " over 4 methods x 10 seeds");
  return c;
}

Check c5_diagonal_suppression() {
  Check c;
  Rng rng(5);
  double worst = 0.0;
  for (std::size_t n : {std::size_t{2}, std::size_t{8}, std::size_t{64}}) {
    const EmbeddingBatch v = random_unit_batch(n, 8, rng);
    const EmbeddingBatch t = random_unit_batch(n, 8, rng);
    for (Side side : {Side::image, Side::text}) {
      const Matrix s = similarity_matrix(v, t, {1.0, 1.0, 100.0}, side);
      for (double lambda : {0.05, 0.15, 0.3}) {
        const TargetDistribution target = otter_target(s, {lambda, 5, 1e-9});
        for (std::size_t i = 0; i < n; ++i)
          worst = std::max(worst, target.matrix(i, i));
      }
    }
  }
  c.require(worst <= 1e-12, "max diagonal " + fmt(worst) + " > 1e-12");
  c.note("max diagonal " + fmt(worst));
  return c;
}

Check c6_end_to_end_learning(const SynthDataset& ds, const EncoderState& scorer) {
  Check c;
  const EvalReport report = zero_shot_eval(scorer, ds, {1});
  const double fh1 = report.flat_hit_at.at(1);
  c.require(fh1 >= 0.95, "FH@1 " + fmt(fh1) + " < 0.95");
  c.note("infonce FH@1 " + fmt(fh1) + " after 10 epochs (8 concepts, swap 0, sigma 0.1)");
  return c;
}

Check c7_noise_robustness() {
  Check c;
  std::vector<double> nce_scores, otter_scores;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig scfg;
    scfg.n_concepts = 16;
    scfg.samples_per_concept = 160;  // 128 train + 32 held out per concept
    scfg.d_img_in = 32;
    scfg.d_txt_in = 32;
    scfg.feature_noise_sigma = 0.35;
    scfg.caption_swap_prob = 0.3;
    scfg.seed = 200 + seed;
    const SynthDataset full = generate(scfg);
    const auto [train_ds, held_ds] = split_per_concept(full, 128);

    auto run = [&](Method method) {
      TrainConfig cfg;
      cfg.method = method;
      cfg.alpha = 0.5;
      cfg.batch_size = 64;
      cfg.epochs = 10;
      cfg.d_emb = 16;
      cfg.lr = 0.01;
      cfg.ema_momentum = 0.9;  // EMA horizon matched to the 320-step run
      cfg.seed = seed;
      const auto [student, log] = train(cfg, make_batches(train_ds, cfg.batch_size, seed));
      return zero_shot_eval(student, held_ds, {1}).flat_hit_at.at(1);
    };
    const double nce = run(Method::infonce);
    const double ot = run(Method::otter);
    nce_scores.push_back(nce);
    otter_scores.push_back(ot);
    per_seed += " s" + std::to_string(seed) + ":" + fmt(nce) + "/" + fmt(ot);
  }
  const double med_nce = median(nce_scores);
  const double med_otter = median(otter_scores);
  c.require(med_otter > med_nce, "median otter " + fmt(med_otter) +
                                     " <= median infonce " + fmt(med_nce));
  c.note("held-out FH@1 medians: infonce " + fmt(med_nce) + ", otter " + fmt(med_otter) +
         "; per-seed (infonce/otter):" + per_seed);
  return c;
}

Check c8_noise_statistics(const SynthDataset& ds, const EncoderState& scorer) {
  Check c;
  Rng rng(7);
  std::vector<std::size_t> pool(ds.size());
  double prev = 2.0, max_residual = 0.0;
  std::string trend;
  for (std::size_t b : {std::size_t{128}, std::size_t{256}, std::size_t{512}}) {
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    double paired_acc = 0.0;
    const std::size_t n_batches = 50;
    for (std::size_t t = 0; t < n_batches; ++t) {
      for (std::size_t i = 0; i < b; ++i)
        std::swap(pool[i], pool[i + rng.bounded(pool.size() - i)]);
      Matrix img(b, ds.image_features.cols());
      Matrix txt(b, ds.text_features.cols());
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < img.cols(); ++j)
          img(i, j) = ds.image_features(pool[i], j);
        for (std::size_t j = 0; j < txt.cols(); ++j)
          txt(i, j) = ds.text_features(pool[i], j);
      }
      const EmbeddingBatch zv = encode_rows(img, scorer.w_image);
      const EmbeddingBatch zt = encode_rows(txt, scorer.w_text);
      const NoiseStats stats = noise_stats(row_softmax(gram(zv, zt), scorer.inv_temp()));
      paired_acc += stats.paired_mean;
      const double residual = std::abs(
          stats.paired_mean + static_cast<double>(b - 1) * stats.unpaired_mean - 1.0);
      max_residual = std::max(max_residual, residual);
    }
    const double paired = paired_acc / static_cast<double>(n_batches);
    c.require(paired < prev, "paired mean not strictly decreasing at batch " +
                                 std::to_string(b));
    trend += " " + std::to_string(b) + ":" + fmt(paired);
    prev = paired;
  }
  c.require(max_residual <= 1e-6, "identity residual " + fmt(max_residual) + " > 1e-6");
  c.note("paired mean by batch size:" + trend + "; max identity residual " +
         fmt(max_residual));
  return c;
}

Check c9_ls_and_fh_exactness() {
  Check c;
  // label smoothing fixtures, exact
  c.require(label_smoothing_target(2).matrix == Matrix::from_rows({{0, 1}, {1, 0}}),
            "ls(2) mismatch");
  const TargetDistribution ls3 = label_smoothing_target(3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      c.require(ls3.matrix(i, j) == (i == j ? 0.0 : 0.5), "ls(3) mismatch");
  const TargetDistribution ls5 = label_smoothing_target(5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      c.require(ls5.matrix(i, j) == (i == j ? 0.0 : 0.25), "ls(5) mismatch");

  // flat-hit fixtures, exact
  c.require(flat_hit_at_k({{0}, {1}, {2}}, {{0}, {1}, {2}}, 1) == 1.0, "fh perfect != 1");
  c.require(flat_hit_at_k({{9}, {9}, {9}}, {{0}, {1}, {2}}, 1) == 0.0, "fh miss != 0");
  c.require(flat_hit_at_k({{1, 2, 3, 4, 5}, {9, 8, 7, 6, 0}, {4, 4, 4, 4, 4}, {2, 9, 9, 9, 9}},
                          {{5, 11}, {0}, {12}, {2}}, 5) == 0.75,
            "fh 3-of-4 != 0.75");

  // monotonicity in k over 1,000 random prediction sets
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.bounded(5);
    std::vector<std::vector<std::int64_t>> preds(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = 1 + rng.bounded(6);
      for (std::size_t r = 0; r < k; ++r)
        preds[i].push_back(static_cast<std::int64_t>(rng.bounded(8)));
      labels[i] = {static_cast<std::int64_t>(rng.bounded(8))};
    }
    double prev_rate = 0.0;
    for (std::size_t k = 1; k <= 6; ++k) {
      const double rate = flat_hit_at_k(preds, labels, k);
      c.require(rate >= prev_rate, "fh not monotone in k");
      prev_rate = rate;
    }
  }
  c.note("all fixtures exact; monotone over 1000 random sets");
  return c;
}

Check c10_compositionality() {
  Check c;
  // hand set-arithmetic fixtures, exact
  CompositionalQuery q;
  q.q_image = {1, 2};
  q.q_text = {3};
  q.q_combined = {1, 2, 3};
  const AttributeSample partial{{}, {2, 3, 9}};
  const auto exact = compositionality_scores({q}, {partial});
  c.require(std::abs(exact.overlap_rate - 2.0 / 3.0) < 1e-15, "OR fixture mismatch");
  c.require(exact.image_overlap_rate == 0.5, "IOR fixture mismatch");
  c.require(exact.text_overlap_rate == 1.0, "TOR fixture mismatch");

  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SynthConfig scfg;
    scfg.n_concepts = 16;
    scfg.samples_per_concept = 64;
    scfg.d_img_in = 32;
    scfg.d_txt_in = 32;
    scfg.feature_noise_sigma = 0.1;
    scfg.caption_swap_prob = 0.0;
    scfg.seed = 400 + seed;
    const SynthDataset ds = generate(scfg);

    TrainConfig cfg;
    cfg.method = Method::infonce;
    cfg.batch_size = 64;
    cfg.epochs = 10;
    cfg.d_emb = 16;
    cfg.lr = 0.01;
    cfg.seed = seed;
    const auto [student, log] = train(cfg, make_batches(ds, cfg.batch_size, seed));

    const AttributeModel model = assign_concept_attributes(16, 64, 24, seed);
    const EmbeddingBatch images = encode_rows(ds.image_features, student.w_image);
    const EmbeddingBatch classes = encode_rows(ds.class_prototypes_text, student.w_text);
    const auto samples = make_attribute_samples(images, ds.concept_of_image, model);
    const Matrix protos = attribute_prototypes_from_classes(classes, model);
    const auto queries = compositional_queries(samples, protos, 10, 300, seed);

    const auto picks = retrieve_nearest(queries, samples);
    std::vector<AttributeSample> retrieved, random_retrieved;
    Rng rng(seed + 100);
    for (std::size_t i = 0; i < queries.size(); ++i) {
      retrieved.push_back(samples[picks[i]]);
      std::size_t pick = rng.bounded(samples.size() - 1);
      if (pick >= queries[i].source_i) ++pick;
      random_retrieved.push_back(samples[pick]);
    }
    const auto trained = compositionality_scores(queries, retrieved);
    const auto baseline = compositionality_scores(queries, random_retrieved);
    c.require(trained.overlap_rate > baseline.overlap_rate,
              "seed " + std::to_string(seed) + ": trained OR " +
                  fmt(trained.overlap_rate) + " <= random OR " +
                  fmt(baseline.overlap_rate));
    detail += " s" + std::to_string(seed) + ":" + fmt(trained.overlap_rate) + ">" +
              fmt(baseline.overlap_rate);
  }
  c.note("trained vs random OR per seed:" + detail);
  return c;
}

Check c11_reproducibility() {
  Check c;
  const fs::path root = fs::temp_directory_path() / "otdistill_acceptance_repro";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto p = [&](const std::string& name) { return (root / name).string(); };

  auto run = [&](std::vector<std::string> args) {
    const int code = cli::run(args);
    c.require(code == 0, "command failed: " + args.front());
  };

  run({"gen-data", "--concepts", "4", "--per-concept", "32", "--d-img", "8", "--d-txt",
       "8", "--sigma", "0.1", "--swap", "0.2", "--seed", "3", "--out", p("d.bin")});

  const std::vector<std::string> train_args = {
      "train", "--method", "otter", "--data", p("d.bin"), "--batch", "32",
      "--epochs", "2", "--d-emb", "4", "--seed", "7"};
  for (const char* dir : {"t1", "t2"}) {
    auto args = train_args;
    args.insert(args.end(), {"--out", p(dir)});
    run(args);
  }
  c.require(file_checksum(p("t1") + "/checkpoint.bin") ==
                file_checksum(p("t2") + "/checkpoint.bin"),
            "checkpoint checksums differ across reruns");
  c.require(file_checksum(p("t1") + "/train_log.tsv") ==
                file_checksum(p("t2") + "/train_log.tsv"),
            "train log checksums differ across reruns");

  for (const char* dir : {"e1", "e2"}) {
    run({"eval", "--checkpoint", p("t1") + "/checkpoint.bin", "--data", p("d.bin"),
         "--out", p(dir)});
  }
  c.require(file_checksum(p("e1") + "/eval_report.txt") ==
                file_checksum(p("e2") + "/eval_report.txt"),
            "eval report checksums differ across reruns");

  {
    std::FILE* sf = std::fopen(p("sweep.json").c_str(), "w");
    std::fputs(R"([{"method":"infonce","epochs":1},{"method":"ls","epochs":1}])", sf);
    std::fclose(sf);
  }
  for (const char* dir : {"s1", "s2"}) {
    run({"sweep", "--data", p("d.bin"), "--sweep-file", p("sweep.json"), "--batch", "32",
         "--d-emb", "4", "--seeds", "1,2", "--out", p(dir)});
  }
  c.require(file_checksum(p("s1") + "/sweep.tsv") == file_checksum(p("s2") + "/sweep.tsv"),
            "sweep table checksums differ across reruns");

  fs::remove_all(root);
  c.note("train, eval, and sweep artifacts are checksum-identical across reruns");
  return c;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Check()> fn;
  };

  // fixtures shared by criteria 6 and 8
  const SynthDataset clean = clean_dataset();
  const EncoderState scorer = train_clean_scorer(clean);

  const std::vector<Criterion> criteria = {
      {1, "sinkhorn marginals and scaling structure", 5.0, c1_sinkhorn_correctness},
      {2, "zero-iteration softmax equivalence", 1.0, c2_zero_iteration_equivalence},
      {3, "kd/otter equivalence", 2.0, c3_kd_otter_equivalence},
      {4, "gradient fidelity vs finite differences", 30.0, c4_gradient_fidelity},
      {5, "transport target diagonal suppression", 2.0, c5_diagonal_suppression},
      {6, "end-to-end zero-shot learning", 120.0,
       [&] { return c6_end_to_end_learning(clean, scorer); }},
      {7, "noise robustness: otter above infonce", 600.0, c7_noise_robustness},
      {8, "noise statistics trend and identity", 60.0,
       [&] { return c8_noise_statistics(clean, scorer); }},
      {9, "label smoothing and flat-hit exactness", 5.0, c9_ls_and_fh_exactness},
      {10, "compositional retrieval beats random", 120.0, c10_compositionality},
      {11, "bit-identical rerun artifacts", 600.0, c11_reproducibility},
  };

  int failures = 0;
  for (const Criterion& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Check check;
    try {
      check = criterion.fn();
    } catch (const std::exception& e) {
      check.ok = false;
      check.detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > criterion.budget_seconds) {
      check.ok = false;
      check.note("runtime " + fmt(seconds) + "s exceeds budget " +
                 fmt(criterion.budget_seconds) + "s");
    }
    std::printf("[%s] %2d. %s (%.2fs)%s%s\n", check.ok ? "PASS" : "FAIL", criterion.id,
                criterion.name, seconds, check.detail.empty() ? "" : " - ",
                check.detail.c_str());
    std::fflush(stdout);
    if (!check.ok) ++failures;
  }

  if (failures > 0) {
    std::printf("%d of %zu acceptance criteria failed\n", failures, criteria.size());
    return 1;
  }
  std::printf("all %zu acceptance criteria passed\n", criteria.size());
  return 0;
}
