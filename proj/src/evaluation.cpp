#include "otdistill/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <string>

#include "otdistill/errors.hpp"
#include "otdistill/rng.hpp"

namespace otdistill {

std::vector<std::vector<std::int64_t>> knn_predict(const EmbeddingBatch& image_embeddings,
                                                   const ClassIndex& index, std::size_t k) {
  const std::size_t n_classes = index.class_embeddings.n();
  if (k > n_classes) {
    throw KTooLarge("k=" + std::to_string(k) + " exceeds class count " +
                    std::to_string(n_classes));
  }
  if (image_embeddings.dim() != index.class_embeddings.dim()) {
    throw DimensionMismatch("knn_predict: embedding dims differ");
  }

  const Matrix sims = gram(image_embeddings, index.class_embeddings);
  std::vector<std::vector<std::int64_t>> out(image_embeddings.n());
  std::vector<std::size_t> order(n_classes);
  for (std::size_t i = 0; i < image_embeddings.n(); ++i) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (sims(i, a) != sims(i, b)) return sims(i, a) > sims(i, b);
                        return index.class_ids[a] < index.class_ids[b];
                      });
    out[i].reserve(k);
    for (std::size_t r = 0; r < k; ++r) out[i].push_back(index.class_ids[order[r]]);
  }
  return out;
}

double flat_hit_at_k(const std::vector<std::vector<std::int64_t>>& predictions,
                     const std::vector<std::vector<std::int64_t>>& true_labels,
                     std::size_t k) {
  if (predictions.size() != true_labels.size()) {
    throw ShapeMismatch("flat_hit_at_k: prediction/label counts differ");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (true_labels[i].empty()) throw EmptyLabelSet(i);
    const std::set<std::int64_t> labels(true_labels[i].begin(), true_labels[i].end());
    const std::size_t top = std::min(k, predictions[i].size());
    for (std::size_t r = 0; r < top; ++r) {
      if (labels.count(predictions[i][r])) {
        ++hits;
        break;
      }
    }
  }
  return predictions.empty() ? 0.0
                             : static_cast<double>(hits) / static_cast<double>(predictions.size());
}

NoiseStats noise_stats(const Matrix& prob, MatchDirection side) {
  if (!prob.is_square()) throw NotSquare("noise_stats requires a square matrix");
  const Matrix p = side == MatchDirection::image_to_text ? prob : prob.transposed();
  const std::size_t n = p.rows();

  double diag_sum = 0.0, off_sum = 0.0, max_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_max = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) {
        diag_sum += p(i, j);
      } else {
        off_sum += p(i, j);
        row_max = std::max(row_max, p(i, j));
      }
    }
    max_sum += row_max;
  }

  NoiseStats stats;
  stats.batch_size = n;
  stats.paired_mean = diag_sum / static_cast<double>(n);
  stats.unpaired_mean = n > 1 ? off_sum / static_cast<double>(n * (n - 1)) : 0.0;
  stats.unpaired_max_mean = max_sum / static_cast<double>(n);
  return stats;
}

EvalReport zero_shot_eval(const EncoderState& student, const SynthDataset& ds,
                          const std::vector<std::size_t>& ks) {
  if (ds.class_prototypes_text.rows() == 0 || ds.concept_of_image.empty()) {
    throw ConfigInvalid("dataset lacks concept labels or text prototypes");
  }
  ClassIndex index;
  index.class_embeddings = encode_rows(ds.class_prototypes_text, student.w_text);
  index.class_ids.resize(ds.n_concepts);
  std::iota(index.class_ids.begin(), index.class_ids.end(), std::int64_t{0});

  const EmbeddingBatch images = encode_rows(ds.image_features, student.w_image);
  std::size_t k_max = 0;
  for (std::size_t k : ks) k_max = std::max(k_max, k);
  const auto predictions = knn_predict(images, index, k_max);

  std::vector<std::vector<std::int64_t>> labels(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) labels[i] = {ds.concept_of_image[i]};

  EvalReport report;
  report.n_images = ds.size();
  for (std::size_t k : ks) report.flat_hit_at[k] = flat_hit_at_k(predictions, labels, k);
  return report;
}

namespace {

std::size_t intersection_size(const std::vector<std::int32_t>& a,
                              const std::vector<std::int32_t>& b) {
  std::size_t count = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++count;
      ++ia;
      ++ib;
    }
  }
  return count;
}

}  // namespace

std::vector<CompositionalQuery> compositional_queries(
    const std::vector<AttributeSample>& samples, const Matrix& attribute_prototypes,
    std::size_t min_common, std::size_t n_queries, std::uint64_t seed) {
  if (samples.size() < 2) throw NoEligiblePairs("need at least 2 samples");
  const std::size_t dim = samples.front().embedding.size();
  if (attribute_prototypes.cols() != dim) {
    throw DimensionMismatch("attribute prototype dim differs from sample embedding dim");
  }

  // Ordered pairs: (i, j) and (j, i) yield different text queries.
  std::vector<std::pair<std::size_t, std::size_t>> eligible;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = 0; j < samples.size(); ++j) {
      if (i == j) continue;
      if (intersection_size(samples[i].attributes, samples[j].attributes) >= min_common) {
        eligible.emplace_back(i, j);
      }
    }
  }
  if (eligible.empty()) {
    throw NoEligiblePairs("no sample pair shares " + std::to_string(min_common) +
                          " attributes");
  }

  Rng rng(seed);
  std::vector<CompositionalQuery> queries;
  queries.reserve(n_queries);
  for (std::size_t q = 0; q < n_queries; ++q) {
    const auto [i, j] = eligible[rng.bounded(eligible.size())];
    CompositionalQuery query;
    query.source_i = i;
    query.source_j = j;
    query.q_image = samples[i].attributes;
    std::set_difference(samples[j].attributes.begin(), samples[j].attributes.end(),
                        samples[i].attributes.begin(), samples[i].attributes.end(),
                        std::back_inserter(query.q_text));
    std::set_union(query.q_image.begin(), query.q_image.end(), query.q_text.begin(),
                   query.q_text.end(), std::back_inserter(query.q_combined));

    // image embedding + normalized sum of the text-side attribute prototypes
    query.embedding = samples[i].embedding;
    if (!query.q_text.empty()) {
      std::vector<double> text_vec(dim, 0.0);
      for (std::int32_t a : query.q_text) {
        for (std::size_t d = 0; d < dim; ++d) {
          text_vec[d] += attribute_prototypes(static_cast<std::size_t>(a), d);
        }
      }
      double sq = 0.0;
      for (double v : text_vec) sq += v * v;
      const double norm = std::sqrt(sq);
      if (norm > 1e-30) {
        for (std::size_t d = 0; d < dim; ++d) query.embedding[d] += text_vec[d] / norm;
      }
    }
    queries.push_back(std::move(query));
  }
  return queries;
}

CompositionalityScores compositionality_scores(
    const std::vector<CompositionalQuery>& queries,
    const std::vector<AttributeSample>& retrieved) {
  if (queries.size() != retrieved.size()) {
    throw ShapeMismatch("compositionality_scores: query/retrieval counts differ");
  }
  CompositionalityScores scores;
  double or_sum = 0.0, ior_sum = 0.0, tor_sum = 0.0;
  std::size_t ior_n = 0, tor_n = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& query = queries[q];
    const auto& r = retrieved[q].attributes;
    if (query.q_combined.empty()) throw EmptyQuery(q);
    or_sum += static_cast<double>(intersection_size(query.q_combined, r)) /
              static_cast<double>(query.q_combined.size());
    if (!query.q_image.empty()) {
      ior_sum += static_cast<double>(intersection_size(query.q_image, r)) /
                 static_cast<double>(query.q_image.size());
      ++ior_n;
    } else {
      ++scores.image_excluded;
    }
    if (!query.q_text.empty()) {
      tor_sum += static_cast<double>(intersection_size(query.q_text, r)) /
                 static_cast<double>(query.q_text.size());
      ++tor_n;
    } else {
      ++scores.text_excluded;
    }
  }
  const auto n = static_cast<double>(queries.size());
  scores.overlap_rate = queries.empty() ? 0.0 : or_sum / n;
  scores.image_overlap_rate = ior_n > 0 ? ior_sum / static_cast<double>(ior_n) : 0.0;
  scores.text_overlap_rate = tor_n > 0 ? tor_sum / static_cast<double>(tor_n) : 0.0;
  return scores;
}

AttributeModel assign_concept_attributes(std::size_t n_concepts, std::size_t universe_size,
                                         std::size_t per_concept, std::uint64_t seed) {
  if (per_concept > universe_size) {
    throw ConfigInvalid("per-concept attribute count exceeds the universe size");
  }
  Rng rng(seed);
  AttributeModel model;
  model.universe_size = universe_size;
  model.concept_attributes.resize(n_concepts);
  std::vector<std::int32_t> pool(universe_size);
  std::iota(pool.begin(), pool.end(), 0);
  for (auto& attrs : model.concept_attributes) {
    // Partial Fisher-Yates: the first per_concept entries form the sample.
    for (std::size_t i = 0; i < per_concept; ++i) {
      std::swap(pool[i], pool[i + rng.bounded(universe_size - i)]);
    }
    attrs.assign(pool.begin(), pool.begin() + per_concept);
    std::sort(attrs.begin(), attrs.end());
  }
  return model;
}

std::vector<AttributeSample> make_attribute_samples(const EmbeddingBatch& image_embeddings,
                                                    const std::vector<std::int64_t>& concepts,
                                                    const AttributeModel& model) {
  if (image_embeddings.n() != concepts.size()) {
    throw ShapeMismatch("make_attribute_samples: embedding/concept counts differ");
  }
  std::vector<AttributeSample> samples(concepts.size());
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    const auto row = image_embeddings.matrix.row(i);
    samples[i].embedding.assign(row.begin(), row.end());
    samples[i].attributes =
        model.concept_attributes.at(static_cast<std::size_t>(concepts[i]));
  }
  return samples;
}

Matrix attribute_prototypes_from_classes(const EmbeddingBatch& class_embeddings,
                                         const AttributeModel& model) {
  const std::size_t dim = class_embeddings.dim();
  Matrix protos(model.universe_size, dim);
  for (std::size_t c = 0; c < model.concept_attributes.size(); ++c) {
    for (std::int32_t a : model.concept_attributes[c]) {
      for (std::size_t d = 0; d < dim; ++d) {
        protos(static_cast<std::size_t>(a), d) += class_embeddings.matrix(c, d);
      }
    }
  }
  for (std::size_t a = 0; a < protos.rows(); ++a) {
    double sq = 0.0;
    for (double v : protos.row(a)) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > 1e-30) {
      for (double& v : protos.row(a)) v /= norm;
    }
  }
  return protos;
}

std::vector<std::size_t> retrieve_nearest(const std::vector<CompositionalQuery>& queries,
                                          const std::vector<AttributeSample>& samples) {
  std::vector<std::size_t> out;
  out.reserve(queries.size());
  for (const auto& query : queries) {
    double qnorm = 0.0;
    for (double v : query.embedding) qnorm += v * v;
    qnorm = std::sqrt(qnorm);

    std::size_t best = 0;
    double best_sim = -HUGE_VAL;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      if (s == query.source_i) continue;
      double dot = 0.0;
      for (std::size_t d = 0; d < query.embedding.size(); ++d) {
        dot += query.embedding[d] * samples[s].embedding[d];
      }
      const double sim = qnorm > 0.0 ? dot / qnorm : dot;
      if (sim > best_sim) {
        best_sim = sim;
        best = s;
      }
    }
    out.push_back(best);
  }
  return out;
}

void write_eval_report(const EvalReport& report, std::ostream& os) {
  os << "# eval-report v1\n";
  os << "n_images\t" << report.n_images << "\n";
  os << "config\t" << report.config_fingerprint << "\n";
  os << std::setprecision(17);
  for (const auto& [k, rate] : report.flat_hit_at) {
    os << "fh@" << k << "\t" << rate << "\n";
  }
}

void write_noise_stats(const std::vector<NoiseStats>& per_batch_size, std::ostream& os) {
  os << "# noise-stats v1\n";
  os << "batch_size\tn_batches\tpaired\tunpaired_avg\tunpaired_max\n";
  os << std::setprecision(17);
  for (const auto& s : per_batch_size) {
    os << s.batch_size << "\t" << s.n_batches << "\t" << s.paired_mean << "\t"
       << s.unpaired_mean << "\t" << s.unpaired_max_mean << "\n";
  }
}

}  // namespace otdistill
