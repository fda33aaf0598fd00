#include "spectra/matrix_core.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace spectra;

TEST_CASE("matmul identity") {
  const Matrix A = random_gaussian(3, 5, 7);
  const Matrix I = Matrix::Identity(3, 3);
  CHECK((matmul(I, A) - A).norm() == doctest::Approx(0.0));
}

TEST_CASE("matmul against hand product") {
  Matrix A(2, 3);
  A << 1, 2, 3, 4, 5, 6;
  Matrix B(3, 2);
  B << 1, 0, 0, 1, 1, 1;
  Matrix expected(2, 2);
  expected << 4, 5, 10, 11;
  FlopCounter flops;
  const Matrix C = matmul(A, B, false, false, &flops);
  CHECK((C - expected).norm() == doctest::Approx(0.0));
  CHECK(flops.count == 2 * 2 * 3 * 2);
}

TEST_CASE("matmul transpose flags agree with Eigen") {
  const Matrix A = random_gaussian(4, 6, 1);
  const Matrix B = random_gaussian(4, 5, 2);
  CHECK((matmul(A, B, true, false) - A.transpose() * B).norm() < 1e-14);
  const Matrix C = random_gaussian(5, 6, 3);
  CHECK((matmul(A, C, false, true) - A * C.transpose()).norm() < 1e-14);
}

TEST_CASE("matmul dimension mismatch names both shapes") {
  const Matrix A = random_gaussian(2, 3, 1);
  const Matrix B = random_gaussian(4, 2, 2);
  CHECK_THROWS_WITH_AS(matmul(A, B), doctest::Contains("2x3"), std::invalid_argument);
}

TEST_CASE("flop counter is additive and resets to zero") {
  FlopCounter flops;
  const Matrix A = random_gaussian(3, 4, 1);
  const Matrix B = random_gaussian(4, 2, 2);
  matmul(A, B, false, false, &flops);
  const std::uint64_t once = flops.count;
  matmul(A, B, false, false, &flops);
  CHECK(flops.count == 2 * once);
  flops.reset();
  CHECK(flops.count == 0);
}

TEST_CASE("thin_qr of a single column normalizes it") {
  Matrix A(2, 1);
  A << 3, 4;
  const ThinQrResult qr = thin_qr(A);
  CHECK(qr.Q(0, 0) == doctest::Approx(0.6));
  CHECK(qr.Q(1, 0) == doctest::Approx(0.8));
  CHECK(qr.R(0, 0) == doctest::Approx(5.0));
  CHECK_FALSE(qr.rank_deficient);
}

TEST_CASE("thin_qr of an orthonormal matrix is the identity factorization") {
  const ThinQrResult base = thin_qr(random_gaussian(8, 3, 5));
  const ThinQrResult qr = thin_qr(base.Q);
  CHECK((qr.Q - base.Q).norm() < 1e-12);
  CHECK((qr.R - Matrix::Identity(3, 3)).norm() < 1e-12);
}

TEST_CASE("thin_qr orthogonality and reconstruction on random input") {
  const Matrix A = random_gaussian(16, 4, 11);
  const ThinQrResult qr = thin_qr(A);
  CHECK((qr.Q.transpose() * qr.Q - Matrix::Identity(4, 4)).norm() < 1e-10);
  CHECK((qr.Q * qr.R - A).norm() < 1e-10 * A.norm());
  for (Index j = 0; j < 4; ++j) {
    CHECK(qr.R(j, j) >= 0.0);
    for (Index i = j + 1; i < 4; ++i) CHECK(qr.R(i, j) == 0.0);
  }
}

TEST_CASE("thin_qr round-trips a planted Q R factorization") {
  const Matrix Q0 = thin_qr(random_gaussian(12, 5, 21)).Q;
  Matrix R0 = Matrix::Zero(5, 5);
  NormalSampler rng(22);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = i; j < 5; ++j) R0(i, j) = rng.next();
    R0(i, i) = std::abs(R0(i, i)) + 0.5;
  }
  const ThinQrResult qr = thin_qr(Q0 * R0);
  CHECK((qr.Q - Q0).norm() < 1e-10);
  CHECK((qr.R - R0).norm() < 1e-10 * R0.norm());
}

TEST_CASE("thin_qr replaces a dependent column and flags it") {
  Matrix A(4, 3);
  A.col(0) = random_gaussian(4, 1, 31);
  A.col(1) = 2.0 * A.col(0);  // exactly dependent
  A.col(2) = random_gaussian(4, 1, 32);
  const ThinQrResult qr = thin_qr(A);
  CHECK(qr.rank_deficient);
  CHECK(qr.R(1, 1) == 0.0);
  CHECK((qr.Q.transpose() * qr.Q - Matrix::Identity(3, 3)).norm() < 1e-10);
  CHECK((qr.Q * qr.R - A).norm() < 1e-10 * A.norm());
}

TEST_CASE("thin_qr rejects wide input") {
  CHECK_THROWS_AS(thin_qr(random_gaussian(2, 3, 1)), std::invalid_argument);
}

TEST_CASE("exact_svd of a diagonal matrix") {
  Matrix A = Matrix::Zero(3, 3);
  A(0, 0) = 3;
  A(1, 1) = 2;
  A(2, 2) = 1;
  const SvdFactors f = exact_svd(A);
  CHECK(f.s(0) == doctest::Approx(3.0));
  CHECK(f.s(1) == doctest::Approx(2.0));
  CHECK(f.s(2) == doctest::Approx(1.0));
  CHECK((f.U.cwiseAbs() - Matrix::Identity(3, 3)).norm() < 1e-12);
  CHECK((f.V.cwiseAbs() - Matrix::Identity(3, 3)).norm() < 1e-12);
}

TEST_CASE("exact_svd of a rank-1 matrix") {
  Vector u = random_gaussian(6, 1, 41);
  Vector v = random_gaussian(4, 1, 42);
  u.normalize();
  v.normalize();
  const Matrix A = 7.0 * u * v.transpose();
  const SvdFactors f = exact_svd(A);
  CHECK(f.s(0) == doctest::Approx(7.0));
  for (Index i = 1; i < f.s.size(); ++i) CHECK(f.s(i) < 1e-12);
  CHECK(std::abs(f.U.col(0).dot(u)) == doctest::Approx(1.0));
}

TEST_CASE("exact_svd reconstruction and orthogonality on random input") {
  const Matrix A = random_gaussian(8, 6, 51);
  const SvdFactors f = exact_svd(A);
  CHECK((A - f.reconstruct()).norm() <= 1e-8 * A.norm());
  CHECK((f.U.transpose() * f.U - Matrix::Identity(6, 6)).norm() < 1e-8);
  CHECK((f.V.transpose() * f.V - Matrix::Identity(6, 6)).norm() < 1e-8);
  for (Index i = 0; i + 1 < f.s.size(); ++i) CHECK(f.s(i) >= f.s(i + 1));
}

TEST_CASE("exact_svd singular values match eigenvalues of the Gram matrix") {
  const Matrix A = random_gaussian(10, 7, 61);
  const SvdFactors f = exact_svd(A);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(A.transpose() * A);
  Vector expected = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  std::sort(expected.data(), expected.data() + expected.size(), std::greater<double>());
  for (Index i = 0; i < f.s.size(); ++i) {
    CHECK(f.s(i) == doctest::Approx(expected(i)).epsilon(1e-6));
  }
}

TEST_CASE("exact_svd sign convention is deterministic") {
  const Matrix A = random_gaussian(5, 5, 71);
  const SvdFactors f1 = exact_svd(A);
  const SvdFactors f2 = exact_svd(A);
  CHECK((f1.U - f2.U).norm() == 0.0);
  for (Index j = 0; j < f1.U.cols(); ++j) {
    Index arg = 0;
    f1.U.col(j).cwiseAbs().maxCoeff(&arg);
    CHECK(f1.U(arg, j) > 0.0);
  }
}

TEST_CASE("exact_svd rejects oversized and non-finite input") {
  CHECK_THROWS_AS(exact_svd(Matrix::Zero(1, 5000)), std::invalid_argument);
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(exact_svd(bad), std::invalid_argument);
}

TEST_CASE("random_gaussian determinism and shape") {
  const Matrix A = random_gaussian(4, 4, 1);
  const Matrix B = random_gaussian(4, 4, 1);
  CHECK((A - B).norm() == 0.0);
  const Matrix C = random_gaussian(2, 3, 3);
  CHECK(C.rows() == 2);
  CHECK(C.cols() == 3);
  CHECK(C.allFinite());
}

TEST_CASE("random_gaussian sample mean obeys the law of large numbers") {
  const Matrix A = random_gaussian(1000, 1000, 2);
  CHECK(std::abs(A.mean()) < 0.01);
  // second moment sanity
  CHECK(A.array().square().mean() == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("derive_seed separates named streams") {
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
}

TEST_CASE("sampler state round-trip resumes the stream") {
  NormalSampler a(99);
  for (int i = 0; i < 7; ++i) a.next();
  const std::string state = a.state();
  NormalSampler b(0);
  b.set_state(state);
  for (int i = 0; i < 50; ++i) CHECK(a.next() == b.next());
}
