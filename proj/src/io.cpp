#include "otdistill/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "binio.hpp"
#include "otdistill/errors.hpp"

namespace otdistill {

namespace {

constexpr char kMagic[9] = "OTDCKP01";

void write_matrix(std::ostream& os, const Matrix& m) {
  binio::write_u64(os, m.rows());
  binio::write_u64(os, m.cols());
  for (double v : m.data()) binio::write_f64(os, v);
}

Matrix read_matrix(std::istream& is, const std::string& what) {
  const std::uint64_t rows = binio::read_u64(is, what + " rows");
  const std::uint64_t cols = binio::read_u64(is, what + " cols");
  Matrix m(rows, cols);
  for (double& v : m.data()) v = binio::read_f64(is, what + " data");
  return m;
}

void write_config(std::ostream& os, const TrainConfig& cfg) {
  binio::write_u32(os, static_cast<std::uint32_t>(cfg.method));
  binio::write_f64(os, cfg.alpha);
  binio::write_f64(os, cfg.gamma_v);
  binio::write_f64(os, cfg.gamma_t);
  binio::write_f64(os, cfg.eta);
  binio::write_f64(os, cfg.lambda);
  binio::write_u64(os, cfg.sinkhorn_iters);
  binio::write_u32(os, cfg.use_ema_teacher ? 1u : 0u);
  binio::write_f64(os, cfg.ema_momentum);
  binio::write_u64(os, cfg.batch_size);
  binio::write_u64(os, cfg.epochs);
  binio::write_f64(os, cfg.lr);
  binio::write_f64(os, cfg.sgd_momentum);
  binio::write_f64(os, cfg.weight_decay);
  binio::write_u64(os, cfg.seed);
  binio::write_u64(os, cfg.d_emb);
  binio::write_f64(os, cfg.init_inv_temp);
}

TrainConfig read_config(std::istream& is) {
  TrainConfig cfg;
  const std::uint32_t method = binio::read_u32(is, "config method");
  if (method > 3) throw FormatError("config method enum out of range");
  cfg.method = static_cast<Method>(method);
  cfg.alpha = binio::read_f64(is, "config alpha");
  cfg.gamma_v = binio::read_f64(is, "config gamma_v");
  cfg.gamma_t = binio::read_f64(is, "config gamma_t");
  cfg.eta = binio::read_f64(is, "config eta");
  cfg.lambda = binio::read_f64(is, "config lambda");
  cfg.sinkhorn_iters = binio::read_u64(is, "config sinkhorn_iters");
  cfg.use_ema_teacher = binio::read_u32(is, "config use_ema_teacher") != 0;
  cfg.ema_momentum = binio::read_f64(is, "config ema_momentum");
  cfg.batch_size = binio::read_u64(is, "config batch_size");
  cfg.epochs = binio::read_u64(is, "config epochs");
  cfg.lr = binio::read_f64(is, "config lr");
  cfg.sgd_momentum = binio::read_f64(is, "config sgd_momentum");
  cfg.weight_decay = binio::read_f64(is, "config weight_decay");
  cfg.seed = binio::read_u64(is, "config seed");
  cfg.d_emb = binio::read_u64(is, "config d_emb");
  cfg.init_inv_temp = binio::read_f64(is, "config init_inv_temp");
  return cfg;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::out | std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os.write(kMagic, 8);
  write_matrix(os, ckpt.student.w_image);
  write_matrix(os, ckpt.student.w_text);
  binio::write_f64(os, ckpt.student.log_inv_temp);
  write_matrix(os, ckpt.teacher.state.w_image);
  write_matrix(os, ckpt.teacher.state.w_text);
  binio::write_f64(os, ckpt.teacher.state.log_inv_temp);
  binio::write_f64(os, ckpt.teacher.momentum);
  write_config(os, ckpt.config);
  binio::write_u64(os, ckpt.step);
  if (!os) throw FormatError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::in | std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  char magic[8] = {};
  is.read(magic, 8);
  if (is.gcount() != 8 || std::string(magic, 8) != kMagic) {
    throw FormatError("'" + path.string() + "' is not a checkpoint file");
  }
  Checkpoint ckpt;
  ckpt.student.w_image = read_matrix(is, "student image weights");
  ckpt.student.w_text = read_matrix(is, "student text weights");
  ckpt.student.log_inv_temp = binio::read_f64(is, "student log_inv_temp");
  ckpt.teacher.state.w_image = read_matrix(is, "teacher image weights");
  ckpt.teacher.state.w_text = read_matrix(is, "teacher text weights");
  ckpt.teacher.state.log_inv_temp = binio::read_f64(is, "teacher log_inv_temp");
  ckpt.teacher.momentum = binio::read_f64(is, "teacher momentum");
  ckpt.config = read_config(is);
  ckpt.step = binio::read_u64(is, "step counter");
  return ckpt;
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::in | std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path.string() + "' for checksumming");
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    const auto got = static_cast<std::size_t>(is.gcount());
    for (std::size_t i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ULL;
    }
  }
  char out[32];
  std::snprintf(out, sizeof out, "fnv1a64:%016llx", static_cast<unsigned long long>(hash));
  return out;
}

std::string config_fingerprint(const TrainConfig& cfg) {
  std::ostringstream ss;
  write_config(ss, cfg);
  const std::string bytes = ss.str();
  const std::uint64_t hash = fnv1a64(bytes.data(), bytes.size());
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(hash));
  return out;
}

void save_matrix_text(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os << m.rows() << ' ' << m.cols() << '\n';
  char buf[40];
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      if (j) os << '\t';
      os << buf;
    }
    os << '\n';
  }
  if (!os) throw FormatError("write failed for '" + path.string() + "'");
}

Matrix load_matrix_text(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  std::size_t rows = 0, cols = 0;
  if (!(is >> rows >> cols)) throw FormatError("missing 'rows cols' header line");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (!(is >> m(i, j))) {
        throw FormatError("matrix file ends early at row " + std::to_string(i));
      }
    }
  }
  return m;
}

}  // namespace otdistill
