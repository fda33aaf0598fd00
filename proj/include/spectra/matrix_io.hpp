#pragma once

#include "spectra/matrix_core.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace spectra {

/// Binary matrix container: header {magic "SPCM", version u32, rows u64,
/// cols u64} followed by row-major little-endian 64-bit reals.
inline constexpr std::uint32_t kSpcmVersion = 1;

void write_spcm(std::ostream& out, const Eigen::Ref<const Matrix>& A);
void write_spcm_file(const std::filesystem::path& path, const Eigen::Ref<const Matrix>& A);

/// Throws std::runtime_error on magic/version mismatch and on truncation
/// (the message carries the byte offset where the stream ended short).
Matrix read_spcm(std::istream& in);
Matrix read_spcm_file(const std::filesystem::path& path);

/// Text form for small fixtures: one row per line, comma-separated,
/// round-trip-exact via %.17g formatting.
void write_csv_matrix(const std::filesystem::path& path, const Eigen::Ref<const Matrix>& A);
Matrix read_csv_matrix(const std::filesystem::path& path);

/// Shortest decimal form that round-trips a double exactly.
std::string format_double(double x);

}  // namespace spectra
