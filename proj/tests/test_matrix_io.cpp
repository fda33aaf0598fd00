#include "spectra/matrix_io.hpp"

#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace spectra;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("spectra_io_" + name);
}

}  // namespace

TEST_CASE("spcm round-trip is bit exact") {
  const Matrix A = random_gaussian(7, 5, 123);
  std::stringstream buf;
  write_spcm(buf, A);
  const Matrix B = read_spcm(buf);
  REQUIRE(B.rows() == 7);
  REQUIRE(B.cols() == 5);
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) {
      CHECK(A(i, j) == B(i, j));
    }
  }
}

TEST_CASE("spcm payload is row-major little-endian doubles after a 24-byte header") {
  Matrix A(2, 2);
  A << 1.0, 2.0, 3.0, 4.0;
  std::stringstream buf;
  write_spcm(buf, A);
  const std::string bytes = buf.str();
  REQUIRE(bytes.size() == 24 + 4 * sizeof(double));
  CHECK(bytes.substr(0, 4) == "SPCM");
  double payload[4];
  std::memcpy(payload, bytes.data() + 24, sizeof(payload));
  CHECK(payload[0] == 1.0);
  CHECK(payload[1] == 2.0);  // row-major: (0,1) comes second
  CHECK(payload[2] == 3.0);
  CHECK(payload[3] == 4.0);
}

TEST_CASE("spcm rejects bad magic") {
  std::stringstream buf;
  write_spcm(buf, Matrix::Identity(2, 2));
  std::string bytes = buf.str();
  bytes[0] = 'X';
  std::stringstream corrupted(bytes);
  CHECK_THROWS_WITH_AS(read_spcm(corrupted), doctest::Contains("magic"), std::runtime_error);
}

TEST_CASE("spcm reports the truncation offset") {
  std::stringstream buf;
  write_spcm(buf, random_gaussian(4, 4, 9));
  std::string bytes = buf.str();
  bytes.resize(bytes.size() - 10);
  std::stringstream truncated(bytes);
  CHECK_THROWS_WITH_AS(read_spcm(truncated), doctest::Contains("offset"), std::runtime_error);
}

TEST_CASE("spcm file round-trip") {
  const fs::path path = temp_file("roundtrip.spcm");
  const Matrix A = random_gaussian(3, 9, 5);
  write_spcm_file(path, A);
  const Matrix B = read_spcm_file(path);
  CHECK((A - B).norm() == 0.0);
  fs::remove(path);
}

TEST_CASE("csv matrix round-trip is exact via shortest formatting") {
  const fs::path path = temp_file("roundtrip.csv");
  Matrix A = random_gaussian(4, 3, 17);
  A(0, 0) = 1.0 / 3.0;
  A(1, 2) = -2.5e-17;
  write_csv_matrix(path, A);
  const Matrix B = read_csv_matrix(path);
  REQUIRE(B.rows() == A.rows());
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) CHECK(A(i, j) == B(i, j));
  }
  fs::remove(path);
}

TEST_CASE("csv reader rejects ragged rows") {
  const fs::path path = temp_file("ragged.csv");
  {
    std::ofstream out(path);
    out << "1,2\n3\n";
  }
  CHECK_THROWS_AS(read_csv_matrix(path), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("format_double shortest round-trip forms") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-3.0) == "-3");
  double x = 0.1 + 0.2;
  double parsed = std::stod(format_double(x));
  CHECK(parsed == x);
}
