#include "spectra/matrix_core.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace spectra {

void require_finite(const Eigen::Ref<const Matrix>& A, const std::string& what) {
  if (!A.allFinite()) {
    throw std::invalid_argument(what + ": contains NaN or infinite entries");
  }
}

Matrix matmul(const Eigen::Ref<const Matrix>& A, const Eigen::Ref<const Matrix>& B,
              bool transpose_a, bool transpose_b, FlopCounter* flops) {
  const Index m = transpose_a ? A.cols() : A.rows();
  const Index n = transpose_a ? A.rows() : A.cols();
  const Index n2 = transpose_b ? B.cols() : B.rows();
  const Index p = transpose_b ? B.rows() : B.cols();
  if (n != n2) {
    std::ostringstream msg;
    msg << "matmul: inner dimensions disagree: op(A) is " << m << "x" << n
        << ", op(B) is " << n2 << "x" << p;
    throw std::invalid_argument(msg.str());
  }
  if (flops != nullptr) {
    flops->add(2ull * static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(n) *
               static_cast<std::uint64_t>(p));
  }
  if (!transpose_a && !transpose_b) return A * B;
  if (transpose_a && !transpose_b) return A.transpose() * B;
  if (!transpose_a && transpose_b) return A * B.transpose();
  return A.transpose() * B.transpose();
}

namespace {

// First canonical basis vector that keeps a usable residual after projecting
// out the columns of Q[0..cols). Gives thin_qr and the subspace trackers a
// reproducible replacement for dead directions.
Vector deterministic_complement(const Matrix& Q, Index cols, FlopCounter* flops) {
  const Index m = Q.rows();
  for (Index attempt = 0; attempt < m; ++attempt) {
    Vector v = Vector::Zero(m);
    v(attempt) = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (Index j = 0; j < cols; ++j) {
        v.noalias() -= Q.col(j).dot(v) * Q.col(j);
      }
    }
    if (flops != nullptr) flops->add(static_cast<std::uint64_t>(8 * m * cols + 2 * m));
    const double nrm = v.norm();
    if (nrm > 0.5) {  // canonical vectors mostly outside span keep ~unit norm
      return v / nrm;
    }
  }
  throw std::runtime_error("thin_qr: no orthogonal complement direction found");
}

}  // namespace

ThinQrResult thin_qr(const Eigen::Ref<const Matrix>& A, FlopCounter* flops) {
  const Index m = A.rows();
  const Index k = A.cols();
  if (m < k) {
    std::ostringstream msg;
    msg << "thin_qr: requires rows >= cols, got " << m << "x" << k;
    throw std::invalid_argument(msg.str());
  }
  require_finite(A, "thin_qr");

  const double scale = A.norm();
  const double dead_tol = 1e-14 * scale;

  ThinQrResult out;
  out.Q = A;
  out.R = Matrix::Zero(k, k);

  // Modified Gram-Schmidt with a second orthogonalization pass.
  for (Index j = 0; j < k; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Index i = 0; i < j; ++i) {
        const double proj = out.Q.col(i).dot(out.Q.col(j));
        out.Q.col(j).noalias() -= proj * out.Q.col(i);
        out.R(i, j) += proj;
      }
    }
    if (flops != nullptr) flops->add(static_cast<std::uint64_t>(8 * m * j + 3 * m));
    const double nrm = out.Q.col(j).norm();
    if (nrm <= dead_tol || scale == 0.0) {
      out.Q.col(j) = deterministic_complement(out.Q, j, flops);
      out.R(j, j) = 0.0;
      out.rank_deficient = true;
    } else {
      out.Q.col(j) /= nrm;
      out.R(j, j) = nrm;
    }
  }
  return out;
}

SvdFactors exact_svd(const Eigen::Ref<const Matrix>& A) {
  const Index m = A.rows();
  const Index n = A.cols();
  if (std::max(m, n) > 4096) {
    std::ostringstream msg;
    msg << "exact_svd: " << m << "x" << n << " exceeds the 4096 desk-scale cap";
    throw std::invalid_argument(msg.str());
  }
  require_finite(A, "exact_svd");

  Eigen::BDCSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);

  SvdFactors out;
  out.U = svd.matrixU();
  out.s = svd.singularValues();
  out.V = svd.matrixV();

  // Deterministic sign convention: largest-magnitude entry of each left
  // vector is positive. Ties break toward the lowest row index.
  for (Index j = 0; j < out.U.cols(); ++j) {
    Index arg = 0;
    double best = std::abs(out.U(0, j));
    for (Index i = 1; i < out.U.rows(); ++i) {
      const double mag = std::abs(out.U(i, j));
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    if (out.U(arg, j) < 0.0) {
      out.U.col(j) = -out.U.col(j);
      out.V.col(j) = -out.V.col(j);
    }
  }

  const double residual = (A - out.reconstruct()).norm();
  const double tol = 1e-8 * A.norm();
  if (A.norm() > 0.0 && residual > tol) {
    std::ostringstream msg;
    msg << "exact_svd: factorization did not converge, reconstruction residual "
        << residual << " exceeds " << tol;
    throw std::runtime_error(msg.str());
  }
  return out;
}

double NormalSampler::next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on explicit 53-bit uniforms, independent of libstdc++'s
  // std::normal_distribution so seeds reproduce bit-identically everywhere.
  const double u1 = 1.0 - static_cast<double>(engine_() >> 11) * 0x1.0p-53;  // (0,1]
  const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;        // [0,1)
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double NormalSampler::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

void NormalSampler::fill(Eigen::Ref<Matrix> out) {
  for (Index i = 0; i < out.rows(); ++i) {
    for (Index j = 0; j < out.cols(); ++j) {
      out(i, j) = next();
    }
  }
}

std::string NormalSampler::state() const {
  std::ostringstream ss;
  ss << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
  ss.precision(17);
  ss << spare_;
  return ss.str();
}

void NormalSampler::set_state(const std::string& s) {
  std::istringstream ss(s);
  int spare_flag = 0;
  ss >> engine_ >> spare_flag >> spare_;
  if (ss.fail()) {
    throw std::runtime_error("NormalSampler::set_state: malformed state string");
  }
  has_spare_ = spare_flag != 0;
}

Matrix random_gaussian(Index rows, Index cols, std::uint64_t seed) {
  if (rows <= 0 || cols <= 0) {
    throw std::invalid_argument("random_gaussian: dimensions must be positive");
  }
  Matrix out(rows, cols);
  NormalSampler sampler(seed);
  sampler.fill(out);
  return out;
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t root, const std::string& stream_name) {
  std::uint64_t z = root ^ fnv1a64(stream_name.data(), stream_name.size());
  // splitmix64 finalizer
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace spectra
