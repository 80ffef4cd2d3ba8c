#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "otdistill/model.hpp"

namespace otdistill {

struct SynthConfig {
  std::size_t n_concepts = 8;
  std::size_t samples_per_concept = 128;
  std::size_t d_img_in = 32;
  std::size_t d_txt_in = 32;
  double feature_noise_sigma = 0.1;
  double caption_swap_prob = 0.0;
  std::uint64_t seed = 1;
};

// Paired image/text feature vectors with known latent concepts. Each sample's
// image feature is its concept's unit prototype plus isotropic Gaussian
// noise; the caption feature comes from the caption's concept, which is
// resampled among the *other* concepts with probability caption_swap_prob
// (so the swap probability is exactly the label-noise rate).
struct SynthDataset {
  Matrix image_features;                       // M x d_img_in
  Matrix text_features;                        // M x d_txt_in
  std::vector<std::int64_t> concept_of_image;  // M
  std::vector<std::int64_t> concept_of_caption;
  Matrix class_prototypes_text;  // n_concepts x d_txt_in
  std::size_t n_concepts = 0;

  std::size_t size() const { return image_features.rows(); }
};

SynthDataset generate(const SynthConfig& cfg);

// Splits per concept: the first train_per_concept samples of every concept
// go to the first dataset, the rest to the second.
std::pair<SynthDataset, SynthDataset> split_per_concept(const SynthDataset& ds,
                                                        std::size_t train_per_concept);

// Seeded shuffle, then fixed-size chunks; a trailing partial batch is
// dropped. Latent image concepts ride along as labels.
std::vector<PairBatch> make_batches(const SynthDataset& ds, std::size_t batch_size,
                                    std::uint64_t seed);

// On-disk embedding format, binary by default, with a delimiter-separated
// text variant (both round-trip doubles exactly; see docs/formats.md).
void save_dataset(const SynthDataset& ds, const std::filesystem::path& path,
                  bool text_format = false);
SynthDataset load_dataset(const std::filesystem::path& path);

}  // namespace otdistill
