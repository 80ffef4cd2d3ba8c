#include "otdistill/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "otdistill/errors.hpp"
#include "otdistill/evaluation.hpp"
#include "otdistill/io.hpp"
#include "otdistill/losses.hpp"
#include "otdistill/rng.hpp"
#include "otdistill/synthdata.hpp"
#include "otdistill/trainer.hpp"

namespace otdistill::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json config_to_json(const TrainConfig& cfg) {
  return json{{"method", to_string(cfg.method)},
              {"alpha", cfg.alpha},
              {"gamma_v", cfg.gamma_v},
              {"gamma_t", cfg.gamma_t},
              {"eta", cfg.eta},
              {"lambda", cfg.lambda},
              {"sinkhorn_iters", cfg.sinkhorn_iters},
              {"use_ema_teacher", cfg.use_ema_teacher},
              {"ema_momentum", cfg.ema_momentum},
              {"batch_size", cfg.batch_size},
              {"epochs", cfg.epochs},
              {"lr", cfg.lr},
              {"sgd_momentum", cfg.sgd_momentum},
              {"weight_decay", cfg.weight_decay},
              {"seed", cfg.seed},
              {"d_emb", cfg.d_emb},
              {"init_inv_temp", cfg.init_inv_temp}};
}

void apply_json_overrides(TrainConfig& cfg, const json& entry) {
  for (const auto& [key, value] : entry.items()) {
    if (key == "method") {
      cfg.method = method_from_string(value.get<std::string>());
    } else if (key == "alpha") {
      cfg.alpha = value.get<double>();
    } else if (key == "gamma_v") {
      cfg.gamma_v = value.get<double>();
    } else if (key == "gamma_t") {
      cfg.gamma_t = value.get<double>();
    } else if (key == "eta") {
      cfg.eta = value.get<double>();
    } else if (key == "lambda") {
      cfg.lambda = value.get<double>();
    } else if (key == "sinkhorn_iters") {
      cfg.sinkhorn_iters = value.get<std::size_t>();
    } else if (key == "use_ema_teacher") {
      cfg.use_ema_teacher = value.get<bool>();
    } else if (key == "ema_momentum") {
      cfg.ema_momentum = value.get<double>();
    } else if (key == "batch_size") {
      cfg.batch_size = value.get<std::size_t>();
    } else if (key == "epochs") {
      cfg.epochs = value.get<std::size_t>();
    } else if (key == "lr") {
      cfg.lr = value.get<double>();
    } else if (key == "sgd_momentum") {
      cfg.sgd_momentum = value.get<double>();
    } else if (key == "weight_decay") {
      cfg.weight_decay = value.get<double>();
    } else if (key == "d_emb") {
      cfg.d_emb = value.get<std::size_t>();
    } else if (key == "seed") {
      cfg.seed = value.get<std::uint64_t>();
    } else if (key == "init_inv_temp") {
      cfg.init_inv_temp = value.get<double>();
    } else {
      throw ConfigInvalid("unknown sweep config key '" + key + "'");
    }
  }
}

// Reproducibility record written next to every command's artifacts.
struct Manifest {
  std::string command;
  std::vector<std::string> args;
  json config;
  std::vector<std::uint64_t> seeds;
  json inputs = json::object();
  json outputs = json::object();
  std::string started = utc_now();

  void add_input(const std::string& label, const fs::path& path) {
    inputs[label] = {{"path", path.string()}, {"checksum", file_checksum(path)}};
  }
  void add_output(const fs::path& path) {
    outputs[path.filename().string()] = file_checksum(path);
  }
  void write(const fs::path& path) const {
    json j{{"tool", "otdistill"},   {"manifest_version", 1},
           {"command", command},    {"args", args},
           {"config", config},     {"seeds", seeds},
           {"inputs", inputs},     {"outputs", outputs},
           {"started_utc", started}, {"finished_utc", utc_now()}};
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write manifest '" + path.string() + "'");
    os << j.dump(2) << "\n";
  }
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigInvalid("cannot create output directory '" + dir.string() + "'");
}

std::vector<std::uint64_t> parse_u64_list(const std::string& csv, const char* flag) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    try {
      out.push_back(std::stoull(token));
    } catch (const std::exception&) {
      throw ConfigInvalid(std::string(flag) + ": cannot parse '" + token + "'");
    }
  }
  if (out.empty()) throw ConfigInvalid(std::string(flag) + ": empty list");
  return out;
}

struct Scorer {
  Checkpoint ckpt;
  SynthDataset ds;
};

Scorer load_scorer(const fs::path& ckpt_path, const fs::path& data_path) {
  Scorer s{load_checkpoint(ckpt_path), load_dataset(data_path)};
  if (s.ckpt.student.w_image.rows() != s.ds.image_features.cols() ||
      s.ckpt.student.w_text.rows() != s.ds.text_features.cols()) {
    throw DimensionMismatch("checkpoint expects " +
                            std::to_string(s.ckpt.student.w_image.rows()) + "/" +
                            std::to_string(s.ckpt.student.w_text.rows()) +
                            "-dim image/text features, dataset has " +
                            std::to_string(s.ds.image_features.cols()) + "/" +
                            std::to_string(s.ds.text_features.cols()));
  }
  return s;
}

void write_train_log(const TrainLog& log, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write train log '" + path.string() + "'");
  os << "step\tlr\ttotal\tinfo_nce_v\tinfo_nce_t\tdistill_v\tdistill_t\talpha\n";
  char buf[512];
  for (const auto& rec : log.steps) {
    std::snprintf(buf, sizeof buf,
                  "%zu\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n", rec.step,
                  rec.lr, rec.loss.total, rec.loss.info_nce_v, rec.loss.info_nce_t,
                  rec.loss.distill_v, rec.loss.distill_t, rec.loss.alpha);
    os << buf;
  }
}

// ---- gen-data ----

struct GenDataOpts {
  SynthConfig cfg;
  std::string out;
  bool text_format = false;
};

int cmd_gen_data(const GenDataOpts& opts, const std::vector<std::string>& args) {
  Manifest manifest;
  manifest.command = "gen-data";
  manifest.args = args;
  manifest.config = {{"n_concepts", opts.cfg.n_concepts},
                     {"samples_per_concept", opts.cfg.samples_per_concept},
                     {"d_img_in", opts.cfg.d_img_in},
                     {"d_txt_in", opts.cfg.d_txt_in},
                     {"feature_noise_sigma", opts.cfg.feature_noise_sigma},
                     {"caption_swap_prob", opts.cfg.caption_swap_prob},
                     {"seed", opts.cfg.seed},
                     {"text_format", opts.text_format}};
  manifest.seeds = {opts.cfg.seed};

  const SynthDataset ds = generate(opts.cfg);
  save_dataset(ds, opts.out, opts.text_format);
  manifest.add_output(opts.out);
  manifest.write(opts.out + ".manifest.json");

  std::size_t swapped = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.concept_of_image[i] != ds.concept_of_caption[i]) ++swapped;
  }
  std::cerr << "gen-data: wrote " << ds.size() << " pairs (" << ds.n_concepts
            << " concepts, d_img=" << ds.image_features.cols()
            << ", d_txt=" << ds.text_features.cols() << ", swapped captions: " << swapped
            << ") to " << opts.out << "\n";
  return 0;
}

// ---- train ----

struct TrainOpts {
  TrainConfig cfg;
  std::optional<double> alpha;  // per-method default when unset
  std::string data;
  std::string out_dir;
};

TrainConfig resolve_train_config(const TrainOpts& opts) {
  TrainConfig cfg = opts.cfg;
  cfg.alpha = opts.alpha ? *opts.alpha : (cfg.method == Method::ls ? 0.9 : 0.5);
  return cfg;
}

int cmd_train(const TrainOpts& opts, const std::vector<std::string>& args) {
  const TrainConfig cfg = resolve_train_config(opts);
  ensure_dir(opts.out_dir);

  Manifest manifest;
  manifest.command = "train";
  manifest.args = args;
  manifest.config = config_to_json(cfg);
  manifest.seeds = {cfg.seed};
  manifest.add_input("data", opts.data);

  const SynthDataset ds = load_dataset(opts.data);
  const auto batches = make_batches(ds, cfg.batch_size, cfg.seed);
  TrainResult result = train_full(cfg, batches);

  const fs::path out_dir(opts.out_dir);
  const fs::path ckpt_path = out_dir / "checkpoint.bin";
  const fs::path log_path = out_dir / "train_log.tsv";
  save_checkpoint({result.student, result.teacher, cfg, result.log.steps.size()}, ckpt_path);
  write_train_log(result.log, log_path);
  manifest.add_output(ckpt_path);
  manifest.add_output(log_path);
  manifest.write(out_dir / "manifest.json");

  const double first = result.log.steps.front().loss.total;
  const double last = result.log.steps.back().loss.total;
  std::cerr << "train: method=" << to_string(cfg.method) << " steps="
            << result.log.steps.size() << " loss " << first << " -> " << last << "\n";
  return 0;
}

// ---- eval ----

struct EvalOpts {
  std::string checkpoint;
  std::string data;
  std::string out_dir;
  std::string ks_csv = "1,5,10";
  bool ks_explicit = false;
};

int cmd_eval(const EvalOpts& opts, const std::vector<std::string>& args) {
  ensure_dir(opts.out_dir);
  Manifest manifest;
  manifest.command = "eval";
  manifest.args = args;
  manifest.add_input("checkpoint", opts.checkpoint);
  manifest.add_input("data", opts.data);

  Scorer scorer = load_scorer(opts.checkpoint, opts.data);
  manifest.config = config_to_json(scorer.ckpt.config);
  manifest.seeds = {scorer.ckpt.config.seed};

  std::vector<std::size_t> ks;
  for (std::uint64_t k : parse_u64_list(opts.ks_csv, "--k")) {
    if (k > scorer.ds.n_concepts) {
      if (opts.ks_explicit) {
        throw KTooLarge("k=" + std::to_string(k) + " exceeds the class count " +
                        std::to_string(scorer.ds.n_concepts));
      }
      continue;  // default cutoffs are clipped to the class count
    }
    ks.push_back(k);
  }
  if (ks.empty()) ks.push_back(1);

  EvalReport report = zero_shot_eval(scorer.ckpt.student, scorer.ds, ks);
  report.config_fingerprint = config_fingerprint(scorer.ckpt.config);

  const fs::path report_path = fs::path(opts.out_dir) / "eval_report.txt";
  {
    std::ofstream os(report_path);
    if (!os) throw FormatError("cannot write '" + report_path.string() + "'");
    write_eval_report(report, os);
  }
  manifest.add_output(report_path);
  manifest.write(fs::path(opts.out_dir) / "manifest.json");

  for (const auto& [k, rate] : report.flat_hit_at) {
    std::cerr << "eval: fh@" << k << " = " << rate << "\n";
  }
  return 0;
}

// ---- noise-stats ----

struct NoiseStatsOpts {
  std::string checkpoint;
  std::string data;
  std::string out_dir;
  std::string batch_sizes_csv = "128,256,512";
  std::size_t n_batches = 1000;
  std::uint64_t seed = 1;
};

NoiseStats averaged_noise_stats(const EncoderState& student, const SynthDataset& ds,
                                std::size_t batch_size, std::size_t n_batches, Rng& rng,
                                double* max_identity_residual) {
  if (batch_size > ds.size()) {
    throw ConfigInvalid("batch size " + std::to_string(batch_size) +
                        " exceeds the dataset size " + std::to_string(ds.size()));
  }
  std::vector<std::size_t> pool(ds.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});

  NoiseStats acc;
  acc.batch_size = batch_size;
  acc.n_batches = n_batches;
  for (std::size_t b = 0; b < n_batches; ++b) {
    for (std::size_t i = 0; i < batch_size; ++i) {
      std::swap(pool[i], pool[i + rng.bounded(pool.size() - i)]);
    }
    Matrix img(batch_size, ds.image_features.cols());
    Matrix txt(batch_size, ds.text_features.cols());
    for (std::size_t i = 0; i < batch_size; ++i) {
      for (std::size_t j = 0; j < img.cols(); ++j) img(i, j) = ds.image_features(pool[i], j);
      for (std::size_t j = 0; j < txt.cols(); ++j) txt(i, j) = ds.text_features(pool[i], j);
    }
    const EmbeddingBatch zv = encode_rows(img, student.w_image);
    const EmbeddingBatch zt = encode_rows(txt, student.w_text);
    const Matrix prob = row_softmax(gram(zv, zt), student.inv_temp());
    const NoiseStats stats = noise_stats(prob);
    acc.paired_mean += stats.paired_mean;
    acc.unpaired_mean += stats.unpaired_mean;
    acc.unpaired_max_mean += stats.unpaired_max_mean;
    if (max_identity_residual) {
      const double residual = std::abs(
          stats.paired_mean + static_cast<double>(batch_size - 1) * stats.unpaired_mean - 1.0);
      *max_identity_residual = std::max(*max_identity_residual, residual);
    }
  }
  const auto dn = static_cast<double>(n_batches);
  acc.paired_mean /= dn;
  acc.unpaired_mean /= dn;
  acc.unpaired_max_mean /= dn;
  return acc;
}

int cmd_noise_stats(const NoiseStatsOpts& opts, const std::vector<std::string>& args) {
  ensure_dir(opts.out_dir);
  Manifest manifest;
  manifest.command = "noise-stats";
  manifest.args = args;
  manifest.seeds = {opts.seed};
  manifest.add_input("checkpoint", opts.checkpoint);
  manifest.add_input("data", opts.data);

  Scorer scorer = load_scorer(opts.checkpoint, opts.data);
  manifest.config = config_to_json(scorer.ckpt.config);

  std::vector<NoiseStats> rows;
  double max_residual = 0.0;
  Rng rng(opts.seed);
  for (std::uint64_t b : parse_u64_list(opts.batch_sizes_csv, "--batch-sizes")) {
    rows.push_back(averaged_noise_stats(scorer.ckpt.student, scorer.ds, b, opts.n_batches,
                                        rng, &max_residual));
  }

  const fs::path report_path = fs::path(opts.out_dir) / "noise_stats.tsv";
  {
    std::ofstream os(report_path);
    if (!os) throw FormatError("cannot write '" + report_path.string() + "'");
    write_noise_stats(rows, os);
  }
  manifest.add_output(report_path);
  manifest.write(fs::path(opts.out_dir) / "manifest.json");

  for (const auto& s : rows) {
    std::cerr << "noise-stats: batch=" << s.batch_size << " paired=" << s.paired_mean
              << " unpaired_avg=" << s.unpaired_mean << " unpaired_max="
              << s.unpaired_max_mean << "\n";
  }
  std::cerr << "noise-stats: max |paired + (N-1)*unpaired_avg - 1| = " << max_residual
            << "\n";
  return 0;
}

// ---- compose-bench ----

struct ComposeBenchOpts {
  std::string checkpoint;
  std::string data;
  std::string out_dir;
  std::size_t n_queries = 1000;
  std::size_t min_common = 10;
  std::size_t universe = 64;
  std::size_t attrs_per_concept = 24;
  std::uint64_t seed = 1;
};

int cmd_compose_bench(const ComposeBenchOpts& opts, const std::vector<std::string>& args) {
  ensure_dir(opts.out_dir);
  Manifest manifest;
  manifest.command = "compose-bench";
  manifest.args = args;
  manifest.seeds = {opts.seed};
  manifest.add_input("checkpoint", opts.checkpoint);
  manifest.add_input("data", opts.data);

  Scorer scorer = load_scorer(opts.checkpoint, opts.data);
  manifest.config = config_to_json(scorer.ckpt.config);
  const SynthDataset& ds = scorer.ds;
  if (ds.concept_of_image.empty() || ds.class_prototypes_text.rows() == 0) {
    throw ConfigInvalid("dataset lacks concept labels or text prototypes");
  }

  const AttributeModel model = assign_concept_attributes(ds.n_concepts, opts.universe,
                                                         opts.attrs_per_concept, opts.seed);
  const EmbeddingBatch images = encode_rows(ds.image_features, scorer.ckpt.student.w_image);
  const EmbeddingBatch classes =
      encode_rows(ds.class_prototypes_text, scorer.ckpt.student.w_text);
  const auto samples = make_attribute_samples(images, ds.concept_of_image, model);
  const Matrix protos = attribute_prototypes_from_classes(classes, model);

  const auto queries =
      compositional_queries(samples, protos, opts.min_common, opts.n_queries, opts.seed);

  auto gather = [&](const std::vector<std::size_t>& picks) {
    std::vector<AttributeSample> out;
    out.reserve(picks.size());
    for (std::size_t s : picks) out.push_back(samples[s]);
    return out;
  };

  const CompositionalityScores trained =
      compositionality_scores(queries, gather(retrieve_nearest(queries, samples)));

  // Random-retrieval baseline: a uniform pick (other than the query image).
  Rng rng(opts.seed + 1);
  std::vector<std::size_t> random_picks;
  random_picks.reserve(queries.size());
  for (const auto& query : queries) {
    std::size_t pick = rng.bounded(samples.size() - 1);
    if (pick >= query.source_i) ++pick;
    random_picks.push_back(pick);
  }
  const CompositionalityScores baseline =
      compositionality_scores(queries, gather(random_picks));

  const fs::path report_path = fs::path(opts.out_dir) / "compose_bench.tsv";
  {
    std::ofstream os(report_path);
    if (!os) throw FormatError("cannot write '" + report_path.string() + "'");
    os << "# compose-bench v1\n";
    os << "row\tor\tior\ttor\ttor_excluded\tn_queries\n";
    char buf[256];
    const auto emit = [&](const char* name, const CompositionalityScores& s) {
      std::snprintf(buf, sizeof buf, "%s\t%.17g\t%.17g\t%.17g\t%zu\t%zu\n", name,
                    s.overlap_rate, s.image_overlap_rate, s.text_overlap_rate,
                    s.text_excluded, queries.size());
      os << buf;
    };
    emit("trained", trained);
    emit("random", baseline);
  }
  manifest.add_output(report_path);
  manifest.write(fs::path(opts.out_dir) / "manifest.json");

  std::cerr << "compose-bench: trained OR=" << trained.overlap_rate
            << " IOR=" << trained.image_overlap_rate << " TOR=" << trained.text_overlap_rate
            << " | random OR=" << baseline.overlap_rate << "\n";
  return 0;
}

// ---- sweep ----

struct SweepOpts {
  TrainOpts base;
  std::string eval_data;
  std::string sweep_file;
  std::string seeds_csv = "1";
};

int cmd_sweep(const SweepOpts& opts, const std::vector<std::string>& args) {
  ensure_dir(opts.base.out_dir);
  Manifest manifest;
  manifest.command = "sweep";
  manifest.args = args;
  manifest.add_input("data", opts.base.data);
  manifest.add_input("sweep_file", opts.sweep_file);
  const std::string eval_path = opts.eval_data.empty() ? opts.base.data : opts.eval_data;
  if (!opts.eval_data.empty()) manifest.add_input("eval_data", opts.eval_data);

  std::ifstream sf(opts.sweep_file);
  if (!sf) throw ConfigInvalid("cannot open sweep file '" + opts.sweep_file + "'");
  json entries;
  try {
    sf >> entries;
  } catch (const json::exception& e) {
    throw ConfigInvalid("sweep file is not valid JSON: " + std::string(e.what()));
  }
  if (!entries.is_array() || entries.empty()) {
    throw ConfigInvalid("sweep file must hold a non-empty JSON array of config objects");
  }

  const std::vector<std::uint64_t> seeds = parse_u64_list(opts.seeds_csv, "--seeds");
  manifest.seeds = seeds;

  // Dedup on the seed-independent fingerprint.
  std::vector<TrainConfig> configs;
  std::set<std::string> seen;
  for (const auto& entry : entries) {
    TrainConfig cfg = resolve_train_config(opts.base);
    apply_json_overrides(cfg, entry);
    TrainConfig keyed = cfg;
    keyed.seed = 0;
    const std::string key = config_fingerprint(keyed);
    if (!seen.insert(key).second) {
      std::cerr << "sweep: duplicate config " << entry.dump() << " skipped\n";
      continue;
    }
    configs.push_back(cfg);
  }

  const SynthDataset train_ds = load_dataset(opts.base.data);
  const SynthDataset eval_ds = load_dataset(eval_path);

  const fs::path table_path = fs::path(opts.base.out_dir) / "sweep.tsv";
  std::ofstream os(table_path);
  if (!os) throw FormatError("cannot write '" + table_path.string() + "'");
  os << "config\tmethod\talpha\tgamma_v\tgamma_t\tlambda\titers\tema\tbatch\tepochs\tlr\t"
        "d_emb\tstatus\tmean_fh1\tper_seed_fh1\n";

  for (const TrainConfig& base_cfg : configs) {
    TrainConfig keyed = base_cfg;
    keyed.seed = 0;
    std::vector<double> fh1s;
    std::string status = "ok";
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base_cfg;
      cfg.seed = seed;
      try {
        const auto batches = make_batches(train_ds, cfg.batch_size, cfg.seed);
        auto [student, log] = train(cfg, batches);
        const EvalReport report = zero_shot_eval(student, eval_ds, {1});
        fh1s.push_back(report.flat_hit_at.at(1));
      } catch (const Error& e) {
        status = std::string("error: ") + e.what();
        std::cerr << "sweep: config " << config_fingerprint(keyed) << " seed " << seed
                  << " failed: " << e.what() << "\n";
        break;
      }
    }
    const double mean =
        fh1s.empty() ? 0.0
                     : std::accumulate(fh1s.begin(), fh1s.end(), 0.0) /
                           static_cast<double>(fh1s.size());
    char buf[128];
    os << config_fingerprint(keyed) << '\t' << to_string(base_cfg.method) << '\t'
       << base_cfg.alpha << '\t' << base_cfg.gamma_v << '\t' << base_cfg.gamma_t << '\t'
       << base_cfg.lambda << '\t' << base_cfg.sinkhorn_iters << '\t'
       << (base_cfg.use_ema_teacher ? 1 : 0) << '\t' << base_cfg.batch_size << '\t'
       << base_cfg.epochs << '\t' << base_cfg.lr << '\t' << base_cfg.d_emb << '\t' << status
       << '\t';
    std::snprintf(buf, sizeof buf, "%.17g", mean);
    os << buf << '\t';
    for (std::size_t i = 0; i < fh1s.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", fh1s[i]);
      os << (i ? "," : "") << buf;
    }
    os << '\n';
  }
  os.close();

  manifest.config = config_to_json(resolve_train_config(opts.base));
  manifest.add_output(table_path);
  manifest.write(fs::path(opts.base.out_dir) / "manifest.json");
  std::cerr << "sweep: " << configs.size() << " configs x " << seeds.size() << " seeds -> "
            << table_path.string() << "\n";
  return 0;
}

// ---- sinkhorn ----

struct SinkhornOpts {
  std::string matrix_file;
  std::string out;
  double lambda = 0.15;
  std::size_t iters = 5;
  std::optional<double> tol;  // converged mode when set
  std::size_t max_iter = 10000;
};

int cmd_sinkhorn(const SinkhornOpts& opts, const std::vector<std::string>& args) {
  Manifest manifest;
  manifest.command = "sinkhorn";
  manifest.args = args;
  manifest.add_input("matrix", opts.matrix_file);
  manifest.config = {{"lambda", opts.lambda},
                     {"n_iter", opts.iters},
                     {"tol", opts.tol ? json(*opts.tol) : json()},
                     {"max_iter", opts.max_iter}};

  const Matrix s = load_matrix_text(opts.matrix_file);
  const TransportPlan plan =
      opts.tol ? sinkhorn_converged(s, opts.lambda, *opts.tol, opts.max_iter)
               : sinkhorn(s, SinkhornConfig{opts.lambda, opts.iters, 1e-9});

  save_matrix_text(plan.matrix, opts.out);
  manifest.add_output(opts.out);
  manifest.write(opts.out + ".manifest.json");

  std::cerr << "sinkhorn: iterations=" << plan.iterations
            << " row_marginal_error=" << plan.row_marginal_error
            << " col_marginal_error=" << plan.col_marginal_error
            << (plan.converged ? "" : " (did not converge)") << "\n";
  return 0;
}

void add_train_flags(CLI::App* sub, TrainOpts& opts) {
  sub->add_option("--method", [&opts](const std::vector<std::string>& vals) {
        opts.cfg.method = method_from_string(vals.front());
        return true;
      }, "Training method: infonce, ls, kd, otter")
      ->required()
      ->check(CLI::IsMember({"infonce", "ls", "kd", "otter"}));
  sub->add_option("--alpha", [&opts](const std::vector<std::string>& vals) {
        opts.alpha = std::stod(vals.front());
        return true;
      }, "Pair-confidence mixing coefficient (default 0.5; 0.9 for ls)")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--gamma-v", opts.cfg.gamma_v, "Query-side self-similarity weight")
      ->capture_default_str();
  sub->add_option("--gamma-t", opts.cfg.gamma_t, "Other-side self-similarity weight")
      ->capture_default_str();
  sub->add_option("--eta", opts.cfg.eta, "Diagonal suppression constant")
      ->capture_default_str();
  sub->add_option("--lambda", opts.cfg.lambda, "Entropic regularization strength")
      ->capture_default_str();
  sub->add_option("--iters", opts.cfg.sinkhorn_iters, "Sinkhorn sweeps")
      ->capture_default_str();
  sub->add_flag("--ema,!--no-ema", opts.cfg.use_ema_teacher,
                "Use the EMA teacher (default on; --no-ema scores with the student itself)");
  sub->add_option("--ema-momentum", opts.cfg.ema_momentum, "EMA decay")
      ->capture_default_str();
  sub->add_option("--batch", opts.cfg.batch_size, "Batch size")->capture_default_str();
  sub->add_option("--epochs", opts.cfg.epochs, "Training epochs")->capture_default_str();
  sub->add_option("--lr", opts.cfg.lr, "Initial learning rate")->capture_default_str();
  sub->add_option("--sgd-momentum", opts.cfg.sgd_momentum, "SGD momentum")
      ->capture_default_str();
  sub->add_option("--weight-decay", opts.cfg.weight_decay, "Weight decay")
      ->capture_default_str();
  sub->add_option("--seed", opts.cfg.seed, "Run seed")->capture_default_str();
  sub->add_option("--d-emb", opts.cfg.d_emb, "Embedding dimension")->capture_default_str();
  sub->add_option("--init-inv-temp", opts.cfg.init_inv_temp,
                  "Initial inverse temperature")
      ->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Contrastive image-text training with optimal-transport soft targets"};
  app.require_subcommand(1);

  GenDataOpts gen_opts;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic paired dataset");
  gen->add_option("--concepts", gen_opts.cfg.n_concepts, "Number of latent concepts")
      ->capture_default_str();
  gen->add_option("--per-concept", gen_opts.cfg.samples_per_concept, "Samples per concept")
      ->capture_default_str();
  gen->add_option("--d-img", gen_opts.cfg.d_img_in, "Image feature dimension")
      ->capture_default_str();
  gen->add_option("--d-txt", gen_opts.cfg.d_txt_in, "Text feature dimension")
      ->capture_default_str();
  gen->add_option("--sigma", gen_opts.cfg.feature_noise_sigma, "Feature noise sigma")
      ->capture_default_str();
  gen->add_option("--swap", gen_opts.cfg.caption_swap_prob,
                  "Caption swap probability (label-noise rate)")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--seed", gen_opts.cfg.seed, "Generator seed")->capture_default_str();
  gen->add_option("--out", gen_opts.out, "Output file path")->required();
  gen->add_flag("--text", gen_opts.text_format, "Write the text variant of the format");

  TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "Train encoders on a paired dataset");
  add_train_flags(train_cmd, train_opts);
  train_cmd->add_option("--data", train_opts.data, "Dataset file")->required();
  train_cmd->add_option("--out", train_opts.out_dir, "Output directory")->required();

  EvalOpts eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "Zero-shot flat-hit evaluation");
  eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_opts.data, "Dataset file")->required();
  eval_cmd->add_option("--out", eval_opts.out_dir, "Output directory")->required();
  auto* k_opt = eval_cmd->add_option("--k", eval_opts.ks_csv,
                                     "Comma-separated hit cutoffs");
  k_opt->capture_default_str();

  NoiseStatsOpts noise_opts;
  auto* noise_cmd =
      app.add_subcommand("noise-stats", "Matching-probability statistics over batches");
  noise_cmd->add_option("--checkpoint", noise_opts.checkpoint, "Checkpoint file")
      ->required();
  noise_cmd->add_option("--data", noise_opts.data, "Dataset file")->required();
  noise_cmd->add_option("--out", noise_opts.out_dir, "Output directory")->required();
  noise_cmd->add_option("--batch-sizes", noise_opts.batch_sizes_csv,
                        "Comma-separated batch sizes")
      ->capture_default_str();
  noise_cmd->add_option("--n-batches", noise_opts.n_batches, "Sampled batches per size")
      ->capture_default_str();
  noise_cmd->add_option("--seed", noise_opts.seed, "Sampling seed")->capture_default_str();

  ComposeBenchOpts compose_opts;
  auto* compose_cmd =
      app.add_subcommand("compose-bench", "Image+text compositional retrieval benchmark");
  compose_cmd->add_option("--checkpoint", compose_opts.checkpoint, "Checkpoint file")
      ->required();
  compose_cmd->add_option("--data", compose_opts.data, "Dataset file")->required();
  compose_cmd->add_option("--out", compose_opts.out_dir, "Output directory")->required();
  compose_cmd->add_option("--n-queries", compose_opts.n_queries, "Number of queries")
      ->capture_default_str();
  compose_cmd->add_option("--min-common", compose_opts.min_common,
                          "Minimum shared attributes per pair")
      ->capture_default_str();
  compose_cmd->add_option("--universe", compose_opts.universe, "Attribute universe size")
      ->capture_default_str();
  compose_cmd->add_option("--attrs-per-concept", compose_opts.attrs_per_concept,
                          "Attributes per concept")
      ->capture_default_str();
  compose_cmd->add_option("--seed", compose_opts.seed, "Benchmark seed")
      ->capture_default_str();

  SweepOpts sweep_opts;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a grid of training configs");
  add_train_flags(sweep_cmd, sweep_opts.base);
  sweep_cmd->get_option("--method")->required(false);
  sweep_cmd->add_option("--data", sweep_opts.base.data, "Training dataset file")
      ->required();
  sweep_cmd->add_option("--eval-data", sweep_opts.eval_data,
                        "Held-out dataset (defaults to --data)");
  sweep_cmd->add_option("--sweep-file", sweep_opts.sweep_file,
                        "JSON array of config overrides")
      ->required();
  sweep_cmd->add_option("--seeds", sweep_opts.seeds_csv, "Comma-separated seeds")
      ->capture_default_str();
  sweep_cmd->add_option("--out", sweep_opts.base.out_dir, "Output directory")->required();

  SinkhornOpts sk_opts;
  auto* sk_cmd = app.add_subcommand("sinkhorn", "Standalone transport-plan solver");
  sk_cmd->add_option("--matrix", sk_opts.matrix_file, "Similarity matrix text file")
      ->required();
  sk_cmd->add_option("--out", sk_opts.out, "Plan output file")->required();
  sk_cmd->add_option("--lambda", sk_opts.lambda, "Entropic regularization strength")
      ->capture_default_str();
  sk_cmd->add_option("--iters", sk_opts.iters, "Normalization sweeps")
      ->capture_default_str();
  sk_cmd->add_option("--tol", [&sk_opts](const std::vector<std::string>& vals) {
    sk_opts.tol = std::stod(vals.front());
    return true;
  }, "Run to convergence with this marginal tolerance");
  sk_cmd->add_option("--max-iter", sk_opts.max_iter, "Sweep cap in convergence mode")
      ->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_opts, args);
    if (train_cmd->parsed()) return cmd_train(train_opts, args);
    if (eval_cmd->parsed()) {
      eval_opts.ks_explicit = k_opt->count() > 0;
      return cmd_eval(eval_opts, args);
    }
    if (noise_cmd->parsed()) return cmd_noise_stats(noise_opts, args);
    if (compose_cmd->parsed()) return cmd_compose_bench(compose_opts, args);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_opts, args);
    if (sk_cmd->parsed()) return cmd_sinkhorn(sk_opts, args);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace otdistill::cli
