#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "otdistill/matrix.hpp"
#include "otdistill/model.hpp"
#include "otdistill/synthdata.hpp"

namespace otdistill {

// Class prototype embeddings used for zero-shot nearest-neighbor prediction.
struct ClassIndex {
  EmbeddingBatch class_embeddings;  // C x d_emb, normalized
  std::vector<std::int64_t> class_ids;
};

struct EvalReport {
  std::map<std::size_t, double> flat_hit_at;
  std::size_t n_images = 0;
  std::string config_fingerprint;
};

// Batch matching-probability statistics of a row-stochastic matrix:
// mean diagonal, mean off-diagonal, and the per-row off-diagonal maximum
// averaged over rows.
struct NoiseStats {
  double paired_mean = 0.0;
  double unpaired_mean = 0.0;
  double unpaired_max_mean = 0.0;
  std::size_t batch_size = 0;
  std::size_t n_batches = 1;
};

enum class MatchDirection { image_to_text, text_to_image };

struct AttributeSample {
  std::vector<double> embedding;           // unit vector
  std::vector<std::int32_t> attributes;    // sorted, unique
};

struct CompositionalQuery {
  std::size_t source_i = 0;                // image query sample
  std::size_t source_j = 0;                // pair partner providing the text query
  std::vector<std::int32_t> q_image;       // attributes of sample i
  std::vector<std::int32_t> q_text;        // attributes of j not in i
  std::vector<std::int32_t> q_combined;    // union
  std::vector<double> embedding;           // image embedding + attribute-set text embedding
};

struct CompositionalityScores {
  double overlap_rate = 0.0;        // |Q  cap R| / |Q|,   averaged
  double image_overlap_rate = 0.0;  // |Qv cap R| / |Qv|,  averaged
  double text_overlap_rate = 0.0;   // |Qt cap R| / |Qt|,  averaged where Qt nonempty
  std::size_t text_excluded = 0;    // queries with empty Qt, skipped in the text rate
  std::size_t image_excluded = 0;   // queries with empty Qv, skipped in the image rate
};

// Top-k class ids per image by cosine similarity, ties broken toward the
// lower class id.
std::vector<std::vector<std::int64_t>> knn_predict(const EmbeddingBatch& image_embeddings,
                                                   const ClassIndex& index, std::size_t k);

// Fraction of images whose top-k prediction list intersects its true-label
// set.
double flat_hit_at_k(const std::vector<std::vector<std::int64_t>>& predictions,
                     const std::vector<std::vector<std::int64_t>>& true_labels,
                     std::size_t k);

NoiseStats noise_stats(const Matrix& prob,
                       MatchDirection side = MatchDirection::image_to_text);

// Zero-shot pipeline: encode the dataset's class text prototypes with the
// student text encoder to build the index, encode the images, and report
// flat hit rates at the requested cutoffs (true label = latent image
// concept).
EvalReport zero_shot_eval(const EncoderState& student, const SynthDataset& ds,
                          const std::vector<std::size_t>& ks);

// Seeded queries over sample pairs sharing at least min_common attributes.
// The text-side embedding of an attribute set is the normalized sum of the
// per-attribute prototype rows; an empty set contributes the zero vector.
std::vector<CompositionalQuery> compositional_queries(
    const std::vector<AttributeSample>& samples, const Matrix& attribute_prototypes,
    std::size_t min_common, std::size_t n_queries, std::uint64_t seed);

CompositionalityScores compositionality_scores(
    const std::vector<CompositionalQuery>& queries,
    const std::vector<AttributeSample>& retrieved);

// --- synthetic attribute machinery for the retrieval benchmark ---

struct AttributeModel {
  std::vector<std::vector<std::int32_t>> concept_attributes;  // per concept, sorted
  std::size_t universe_size = 0;
};

// Each concept gets a seeded random subset of the attribute universe.
AttributeModel assign_concept_attributes(std::size_t n_concepts, std::size_t universe_size,
                                         std::size_t per_concept, std::uint64_t seed);

// Samples inherit their concept's attribute set; embeddings come from the
// provided (already encoded, normalized) batch.
std::vector<AttributeSample> make_attribute_samples(const EmbeddingBatch& image_embeddings,
                                                    const std::vector<std::int64_t>& concepts,
                                                    const AttributeModel& model);

// Prototype vector per attribute: normalized sum of the class embeddings of
// the concepts carrying that attribute (zero row if no concept does).
Matrix attribute_prototypes_from_classes(const EmbeddingBatch& class_embeddings,
                                         const AttributeModel& model);

// Cosine nearest neighbor of each query embedding among the samples,
// excluding the query's own source image; ties go to the lower index.
std::vector<std::size_t> retrieve_nearest(const std::vector<CompositionalQuery>& queries,
                                          const std::vector<AttributeSample>& samples);

// --- structured text reports ---

void write_eval_report(const EvalReport& report, std::ostream& os);
void write_noise_stats(const std::vector<NoiseStats>& per_batch_size, std::ostream& os);

}  // namespace otdistill
