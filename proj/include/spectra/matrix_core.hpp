#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>

namespace spectra {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Accumulates floating-point operation counts across kernel calls.
/// One counter per call context; never global. Dense products add 2*m*n*p.
struct FlopCounter {
  std::uint64_t count = 0;

  void add(std::uint64_t flops) { count += flops; }
  void reset() { count = 0; }
};

/// Rank-k factorization A ~= U * diag(s) * V^T with U (m x k), V (n x k).
/// Singular values are sorted descending and nonnegative. `degenerate` is set
/// when a zero/rank-deficient direction had to be replaced by a substitute.
struct SvdFactors {
  Matrix U;
  Vector s;
  Matrix V;
  bool degenerate = false;

  Index rank() const { return s.size(); }
  Matrix reconstruct() const { return U * s.asDiagonal() * V.transpose(); }
};

struct ThinQrResult {
  Matrix Q;  // m x k, orthonormal columns
  Matrix R;  // k x k, upper triangular, nonnegative diagonal
  bool rank_deficient = false;
};

/// Throws std::invalid_argument if any entry of A is NaN or infinite.
void require_finite(const Eigen::Ref<const Matrix>& A, const std::string& what);

/// Dense product op(A) * op(B) where op optionally transposes.
/// Adds 2*m*n*p to `flops` when a counter is supplied.
Matrix matmul(const Eigen::Ref<const Matrix>& A, const Eigen::Ref<const Matrix>& B,
              bool transpose_a = false, bool transpose_b = false,
              FlopCounter* flops = nullptr);

/// Thin QR of an m x k matrix (m >= k) via modified Gram-Schmidt with one
/// reorthogonalization pass. Columns whose residual norm falls below
/// 1e-14 * ||A||_F are replaced by a deterministic direction orthogonal to
/// the columns already produced (R gets a zero diagonal there) and the
/// result is flagged rank_deficient.
ThinQrResult thin_qr(const Eigen::Ref<const Matrix>& A, FlopCounter* flops = nullptr);

/// Full SVD oracle for desk-scale matrices (max(m,n) <= 4096), rank min(m,n).
/// Sign convention: the largest-magnitude entry of each left vector is
/// positive. Throws if the factorization fails to reconstruct A within
/// 1e-8 * ||A||_F (message carries the residual).
SvdFactors exact_svd(const Eigen::Ref<const Matrix>& A);

/// I.i.d. standard normal matrix; identical seeds give bit-identical output.
Matrix random_gaussian(Index rows, Index cols, std::uint64_t seed);

/// Deterministic stream of standard normals (Box-Muller over mt19937_64).
/// Used everywhere randomness is needed so results do not depend on the
/// standard library's distribution implementations.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : engine_(seed) {}

  double next();
  double uniform();  // in [0, 1)
  void fill(Eigen::Ref<Matrix> out);

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives a named sub-stream seed from a root seed (splitmix64 of root
/// xor FNV-1a of the name).
std::uint64_t derive_seed(std::uint64_t root, const std::string& stream_name);

std::uint64_t fnv1a64(const void* data, std::size_t size);

}  // namespace spectra
