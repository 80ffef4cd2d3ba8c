#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "otdistill/model.hpp"

namespace otdistill {

// Everything needed to resume or score: student, teacher, config, and the
// number of optimizer steps taken. The binary layout round-trips bit-exactly
// (see docs/formats.md).
struct Checkpoint {
  EncoderState student;
  TeacherState teacher;
  TrainConfig config;
  std::uint64_t step = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a over a byte stream; used for artifact checksums and config
// fingerprints (reproducibility bookkeeping, not security).
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string file_checksum(const std::filesystem::path& path);
std::string config_fingerprint(const TrainConfig& cfg);

// Plain text matrix files for the standalone solver command: a "rows cols"
// header line, then one whitespace-separated row per line. Doubles are
// written with 17 significant digits and round-trip exactly.
void save_matrix_text(const Matrix& m, const std::filesystem::path& path);
Matrix load_matrix_text(const std::filesystem::path& path);

}  // namespace otdistill
