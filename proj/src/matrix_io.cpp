#include "spectra/matrix_io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace spectra {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'C', 'M'};

void write_bytes(std::ostream& out, const void* data, std::size_t size) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw std::runtime_error("spcm write failed");
}

void read_bytes(std::istream& in, void* data, std::size_t size, std::uint64_t& offset) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
  const auto got = static_cast<std::uint64_t>(in.gcount());
  if (got != size) {
    std::ostringstream msg;
    msg << "spcm: truncated stream at byte offset " << (offset + got) << ", expected "
        << size << " more bytes";
    throw std::runtime_error(msg.str());
  }
  offset += got;
}

}  // namespace

void write_spcm(std::ostream& out, const Eigen::Ref<const Matrix>& A) {
  write_bytes(out, kMagic, 4);
  const std::uint32_t version = kSpcmVersion;
  const std::uint64_t rows = static_cast<std::uint64_t>(A.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(A.cols());
  write_bytes(out, &version, sizeof(version));
  write_bytes(out, &rows, sizeof(rows));
  write_bytes(out, &cols, sizeof(cols));
  std::vector<double> row(A.cols());
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) row[static_cast<std::size_t>(j)] = A(i, j);
    write_bytes(out, row.data(), row.size() * sizeof(double));
  }
}

void write_spcm_file(const std::filesystem::path& path, const Eigen::Ref<const Matrix>& A) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("spcm: cannot open for writing: " + path.string());
  write_spcm(out, A);
}

Matrix read_spcm(std::istream& in) {
  std::uint64_t offset = 0;
  char magic[4];
  read_bytes(in, magic, 4, offset);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("spcm: bad magic, not an SPCM matrix stream");
  }
  std::uint32_t version = 0;
  read_bytes(in, &version, sizeof(version), offset);
  if (version != kSpcmVersion) {
    std::ostringstream msg;
    msg << "spcm: unsupported version " << version << ", expected " << kSpcmVersion;
    throw std::runtime_error(msg.str());
  }
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  read_bytes(in, &rows, sizeof(rows), offset);
  read_bytes(in, &cols, sizeof(cols), offset);
  if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20)) {
    throw std::runtime_error("spcm: implausible dimensions in header");
  }
  Matrix A(static_cast<Index>(rows), static_cast<Index>(cols));
  std::vector<double> row(cols);
  for (std::uint64_t i = 0; i < rows; ++i) {
    read_bytes(in, row.data(), row.size() * sizeof(double), offset);
    for (std::uint64_t j = 0; j < cols; ++j) {
      A(static_cast<Index>(i), static_cast<Index>(j)) = row[j];
    }
  }
  require_finite(A, "spcm read");
  return A;
}

Matrix read_spcm_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("spcm: cannot open for reading: " + path.string());
  return read_spcm(in);
}

std::string format_double(double x) {
  char buf[64];
  // Shortest representation that parses back to the same bits.
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, x);
    double parsed = 0.0;
    std::from_chars(buf, buf + std::strlen(buf), parsed);
    if (parsed == x) break;
  }
  return buf;
}

void write_csv_matrix(const std::filesystem::path& path, const Eigen::Ref<const Matrix>& A) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("csv: cannot open for writing: " + path.string());
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(A(i, j));
    }
    out << '\n';
  }
}

Matrix read_csv_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open for reading: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      double value = 0.0;
      const auto res = std::from_chars(line.data() + pos, line.data() + comma, value);
      if (res.ec != std::errc()) {
        throw std::runtime_error("csv: malformed number in " + path.string());
      }
      row.push_back(value);
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error("csv: ragged rows in " + path.string());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("csv: empty matrix file " + path.string());
  Matrix A(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) {
      A(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return A;
}

}  // namespace spectra
