#include "otdistill/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "binio.hpp"
#include "otdistill/errors.hpp"
#include "otdistill/rng.hpp"

namespace otdistill {

namespace {

constexpr char kBinaryMagic[9] = "OTDEMB01";
constexpr char kTextMagic[] = "otdemb";

Matrix random_unit_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = rng.normal();
      m(i, j) = v;
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    for (std::size_t j = 0; j < cols; ++j) m(i, j) /= norm;
  }
  return m;
}

void validate(const SynthConfig& cfg) {
  if (cfg.n_concepts < 2) throw ConfigInvalid("need at least 2 concepts");
  if (cfg.d_img_in < 2 || cfg.d_txt_in < 2) throw ConfigInvalid("feature dims must be >= 2");
  if (cfg.samples_per_concept < 1) throw ConfigInvalid("need at least 1 sample per concept");
  if (cfg.feature_noise_sigma < 0.0) throw ConfigInvalid("noise sigma must be >= 0");
  if (cfg.caption_swap_prob < 0.0 || cfg.caption_swap_prob > 1.0) {
    throw ConfigInvalid("caption swap probability must lie in [0, 1]");
  }
}

}  // namespace

SynthDataset generate(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);

  const Matrix proto_img = random_unit_rows(cfg.n_concepts, cfg.d_img_in, rng);
  const Matrix proto_txt = random_unit_rows(cfg.n_concepts, cfg.d_txt_in, rng);

  const std::size_t m = cfg.n_concepts * cfg.samples_per_concept;
  SynthDataset ds;
  ds.image_features = Matrix(m, cfg.d_img_in);
  ds.text_features = Matrix(m, cfg.d_txt_in);
  ds.concept_of_image.resize(m);
  ds.concept_of_caption.resize(m);
  ds.class_prototypes_text = proto_txt;
  ds.n_concepts = cfg.n_concepts;

  std::size_t row = 0;
  for (std::size_t c = 0; c < cfg.n_concepts; ++c) {
    for (std::size_t s = 0; s < cfg.samples_per_concept; ++s, ++row) {
      ds.concept_of_image[row] = static_cast<std::int64_t>(c);
      for (std::size_t j = 0; j < cfg.d_img_in; ++j) {
        ds.image_features(row, j) = proto_img(c, j) + cfg.feature_noise_sigma * rng.normal();
      }

      // Swap always resamples among the *other* concepts, so swap_prob is the
      // exact off-concept rate.
      std::size_t cap = c;
      if (rng.uniform() < cfg.caption_swap_prob) {
        const std::uint64_t pick = rng.bounded(cfg.n_concepts - 1);
        cap = pick >= c ? pick + 1 : pick;
      }
      ds.concept_of_caption[row] = static_cast<std::int64_t>(cap);
      for (std::size_t j = 0; j < cfg.d_txt_in; ++j) {
        ds.text_features(row, j) = proto_txt(cap, j) + cfg.feature_noise_sigma * rng.normal();
      }
    }
  }
  return ds;
}

std::pair<SynthDataset, SynthDataset> split_per_concept(const SynthDataset& ds,
                                                        std::size_t train_per_concept) {
  std::vector<std::size_t> seen(ds.n_concepts, 0);
  std::vector<std::size_t> train_rows, held_rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto c = static_cast<std::size_t>(ds.concept_of_image[i]);
    if (seen[c]++ < train_per_concept)
      train_rows.push_back(i);
    else
      held_rows.push_back(i);
  }

  auto take = [&](const std::vector<std::size_t>& rows) {
    SynthDataset out;
    out.image_features = Matrix(rows.size(), ds.image_features.cols());
    out.text_features = Matrix(rows.size(), ds.text_features.cols());
    out.concept_of_image.resize(rows.size());
    out.concept_of_caption.resize(rows.size());
    out.class_prototypes_text = ds.class_prototypes_text;
    out.n_concepts = ds.n_concepts;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t r = rows[i];
      for (std::size_t j = 0; j < ds.image_features.cols(); ++j)
        out.image_features(i, j) = ds.image_features(r, j);
      for (std::size_t j = 0; j < ds.text_features.cols(); ++j)
        out.text_features(i, j) = ds.text_features(r, j);
      out.concept_of_image[i] = ds.concept_of_image[r];
      out.concept_of_caption[i] = ds.concept_of_caption[r];
    }
    return out;
  };
  return {take(train_rows), take(held_rows)};
}

std::vector<PairBatch> make_batches(const SynthDataset& ds, std::size_t batch_size,
                                    std::uint64_t seed) {
  if (batch_size < 1) throw ConfigInvalid("batch size must be >= 1");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.bounded(i)]);
  }

  std::vector<PairBatch> batches;
  const std::size_t n_full = ds.size() / batch_size;
  batches.reserve(n_full);
  for (std::size_t b = 0; b < n_full; ++b) {
    PairBatch batch;
    batch.image_features = Matrix(batch_size, ds.image_features.cols());
    batch.text_features = Matrix(batch_size, ds.text_features.cols());
    batch.latent_labels.resize(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
      const std::size_t r = order[b * batch_size + i];
      for (std::size_t j = 0; j < ds.image_features.cols(); ++j)
        batch.image_features(i, j) = ds.image_features(r, j);
      for (std::size_t j = 0; j < ds.text_features.cols(); ++j)
        batch.text_features(i, j) = ds.text_features(r, j);
      batch.latent_labels[i] = ds.concept_of_image[r];
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

namespace {

void save_binary(const SynthDataset& ds, std::ostream& os) {
  os.write(kBinaryMagic, 8);
  const bool has_labels = !ds.concept_of_image.empty();
  const bool has_protos = ds.class_prototypes_text.rows() > 0;
  binio::write_u32(os, (has_labels ? 1u : 0u) | (has_protos ? 2u : 0u));
  binio::write_u64(os, ds.size());
  binio::write_u64(os, ds.image_features.cols());
  binio::write_u64(os, ds.text_features.cols());
  binio::write_u64(os, has_protos ? ds.n_concepts : 0);
  for (double v : ds.image_features.data()) binio::write_f64(os, v);
  for (double v : ds.text_features.data()) binio::write_f64(os, v);
  if (has_labels) {
    for (std::int64_t v : ds.concept_of_image) binio::write_i64(os, v);
    for (std::int64_t v : ds.concept_of_caption) binio::write_i64(os, v);
  }
  if (has_protos) {
    for (double v : ds.class_prototypes_text.data()) binio::write_f64(os, v);
  }
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void save_text(const SynthDataset& ds, std::ostream& os) {
  const bool has_labels = !ds.concept_of_image.empty();
  const std::size_t n_protos = ds.class_prototypes_text.rows() > 0 ? ds.n_concepts : 0;
  os << kTextMagic << " 1 " << ds.size() << ' ' << ds.image_features.cols() << ' '
     << ds.text_features.cols() << ' ' << (has_labels ? 1 : 0) << ' ' << n_protos << '\n';
  auto write_rows = [&](const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) {
        if (j) os << '\t';
        os << fmt_double(m(i, j));
      }
      os << '\n';
    }
  };
  write_rows(ds.image_features);
  write_rows(ds.text_features);
  if (has_labels) {
    for (std::size_t i = 0; i < ds.size(); ++i)
      os << ds.concept_of_image[i] << '\t' << ds.concept_of_caption[i] << '\n';
  }
  if (n_protos > 0) write_rows(ds.class_prototypes_text);
}

// Reads `count` doubles into dst, tracking the flat index across all numeric
// blocks so NonFiniteValue can point at the offending entry.
void read_f64_block(std::istream& is, std::span<double> dst, const char* block,
                    std::size_t& flat) {
  for (double& v : dst) {
    v = binio::read_f64(is, std::string(block) + " block");
    if (!std::isfinite(v)) throw NonFiniteValue(flat);
    ++flat;
  }
}

SynthDataset load_binary(std::istream& is) {
  const std::uint32_t flags = binio::read_u32(is, "header flags");
  const std::uint64_t n = binio::read_u64(is, "header sample count");
  const std::uint64_t d_img = binio::read_u64(is, "header image dim");
  const std::uint64_t d_txt = binio::read_u64(is, "header text dim");
  const std::uint64_t n_concepts = binio::read_u64(is, "header concept count");

  SynthDataset ds;
  ds.image_features = Matrix(n, d_img);
  ds.text_features = Matrix(n, d_txt);
  std::size_t flat = 0;
  read_f64_block(is, ds.image_features.data(), "image", flat);
  read_f64_block(is, ds.text_features.data(), "text", flat);
  if (flags & 1u) {
    ds.concept_of_image.resize(n);
    ds.concept_of_caption.resize(n);
    for (auto& v : ds.concept_of_image) v = binio::read_i64(is, "label block");
    for (auto& v : ds.concept_of_caption) v = binio::read_i64(is, "label block");
  }
  if (flags & 2u) {
    ds.class_prototypes_text = Matrix(n_concepts, d_txt);
    ds.n_concepts = n_concepts;
    read_f64_block(is, ds.class_prototypes_text.data(), "prototype", flat);
  } else if (!ds.concept_of_image.empty()) {
    std::int64_t max_c = 0;
    for (auto c : ds.concept_of_image) max_c = std::max(max_c, c);
    ds.n_concepts = static_cast<std::size_t>(max_c) + 1;
  }
  return ds;
}

double parse_double(const std::string& token, std::size_t& flat) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(token, &pos);
  } catch (const std::exception&) {
    throw FormatError("cannot parse '" + token + "' as a number");
  }
  if (pos != token.size()) throw FormatError("trailing junk in number '" + token + "'");
  if (!std::isfinite(v)) throw NonFiniteValue(flat);
  ++flat;
  return v;
}

void load_text_rows(std::istream& is, Matrix& m, const char* block, std::size_t& flat) {
  std::string line;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (!std::getline(is, line)) {
      throw FormatError(std::string("unexpected end of file in ") + block + " block");
    }
    std::istringstream ss(line);
    std::string token;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (!(ss >> token)) {
        throw FormatError(std::string("short row in ") + block + " block");
      }
      m(i, j) = parse_double(token, flat);
    }
  }
}

SynthDataset load_text(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw FormatError("missing header line");
  std::istringstream hs(header);
  std::string magic;
  int version = 0, has_labels = 0;
  std::uint64_t n = 0, d_img = 0, d_txt = 0, n_concepts = 0;
  if (!(hs >> magic >> version >> n >> d_img >> d_txt >> has_labels >> n_concepts) ||
      magic != kTextMagic || version != 1) {
    throw FormatError("bad text header: '" + header + "'");
  }

  SynthDataset ds;
  ds.image_features = Matrix(n, d_img);
  ds.text_features = Matrix(n, d_txt);
  std::size_t flat = 0;
  load_text_rows(is, ds.image_features, "image", flat);
  load_text_rows(is, ds.text_features, "text", flat);
  if (has_labels) {
    ds.concept_of_image.resize(n);
    ds.concept_of_caption.resize(n);
    std::string line;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::getline(is, line)) throw FormatError("unexpected end of file in label block");
      std::istringstream ss(line);
      if (!(ss >> ds.concept_of_image[i] >> ds.concept_of_caption[i])) {
        throw FormatError("bad label line: '" + line + "'");
      }
    }
  }
  if (n_concepts > 0) {
    ds.class_prototypes_text = Matrix(n_concepts, d_txt);
    ds.n_concepts = n_concepts;
    load_text_rows(is, ds.class_prototypes_text, "prototype", flat);
  } else if (has_labels) {
    std::int64_t max_c = 0;
    for (auto c : ds.concept_of_image) max_c = std::max(max_c, c);
    ds.n_concepts = static_cast<std::size_t>(max_c) + 1;
  }
  return ds;
}

}  // namespace

void save_dataset(const SynthDataset& ds, const std::filesystem::path& path,
                  bool text_format) {
  std::ofstream os(path, text_format ? std::ios::out : std::ios::out | std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  if (text_format)
    save_text(ds, os);
  else
    save_binary(ds, os);
  if (!os) throw FormatError("write failed for '" + path.string() + "'");
}

SynthDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::in | std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  char magic[8] = {};
  is.read(magic, 8);
  const auto got = static_cast<std::size_t>(is.gcount());
  if (got == 8 && std::string(magic, 8) == kBinaryMagic) {
    return load_binary(is);
  }
  if (got >= 6 && std::string(magic, 6) == kTextMagic) {
    is.clear();
    is.seekg(0);
    return load_text(is);
  }
  throw FormatError("'" + path.string() + "' is neither a binary nor a text embedding file");
}

}  // namespace otdistill
