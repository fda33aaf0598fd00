#pragma once

#include "spectra/matrix_core.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace spectra {

/// Single-file state container: magic "SPCK", version, a JSON metadata
/// block (step counter, optimizer kind, RNG stream states, config echo),
/// then named SPCM matrix blocks. Round-trips bit-exactly.
struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Matrix>> matrices;

  const Matrix& matrix(const std::string& name) const;
  bool has_matrix(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws std::runtime_error on magic/version mismatch or truncation (the
/// message carries the byte offset reached).
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace spectra
