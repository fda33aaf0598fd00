#include "spectra/diagnostics.hpp"

#include <doctest.h>

#include <cmath>

using namespace spectra;

namespace {

Matrix planted(Index m, Index n, const Vector& sigma, std::uint64_t seed) {
  const Matrix U = thin_qr(random_gaussian(m, sigma.size(), derive_seed(seed, "u"))).Q;
  const Matrix V = thin_qr(random_gaussian(n, sigma.size(), derive_seed(seed, "v"))).Q;
  return (U * sigma.asDiagonal()) * V.transpose();
}

}  // namespace

TEST_CASE("spectrum_report on a known three-value spectrum") {
  Matrix A = Matrix::Zero(3, 3);
  A(0, 0) = 10.0;
  A(1, 1) = 0.1;
  A(2, 2) = 0.1;
  const SpectrumReport rep = spectrum_report(A, 0.34);  // round(0.34*3) = 1
  CHECK(rep.spike_count == 1);
  CHECK(rep.gap_ratio == doctest::Approx(100.0));
  CHECK(rep.cdf(0) == doctest::Approx(100.0 / 100.02).epsilon(1e-12));
  CHECK(rep.cdf(2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spectrum_report of a scaled identity has a linear cdf") {
  const Index n = 16;
  const SpectrumReport rep = spectrum_report(3.5 * Matrix::Identity(n, n), 0.015);
  for (Index j = 0; j < n; ++j) {
    CHECK(rep.cdf(j) ==
          doctest::Approx(static_cast<double>(j + 1) / static_cast<double>(n)).epsilon(1e-12));
  }
}

TEST_CASE("spectrum_report captures a planted 97 percent spike") {
  Vector sigma(64);
  sigma(0) = std::sqrt(97.5);
  for (Index i = 1; i < 64; ++i) sigma(i) = std::sqrt(2.5 / 63.0);
  const Matrix G = planted(64, 64, sigma, 3);
  const SpectrumReport rep = spectrum_report(G, 0.015);
  CHECK(rep.spike_count == 1);
  CHECK(rep.cdf(rep.spike_count - 1) >= 0.97);
}

TEST_CASE("spectrum cdf is nondecreasing and ends at one") {
  const Matrix G = random_gaussian(20, 14, 5);
  const SpectrumReport rep = spectrum_report(G, 0.1);
  for (Index j = 1; j < rep.cdf.size(); ++j) CHECK(rep.cdf(j) >= rep.cdf(j - 1));
  CHECK(std::abs(rep.cdf(rep.cdf.size() - 1) - 1.0) <= 1e-12);
  CHECK_THROWS_AS(spectrum_report(Matrix::Zero(3, 3), 0.1), std::invalid_argument);
}

TEST_CASE("log-gap detector finds the planted boundary") {
  Vector sigma(10);
  for (Index i = 0; i < 3; ++i) sigma(i) = 50.0 - static_cast<double>(i);
  for (Index i = 3; i < 10; ++i) sigma(i) = 1.0 - 0.05 * static_cast<double>(i);
  CHECK(detect_spike_by_log_gap(sigma) == 3);
}

TEST_CASE("spike_tail_split exactness") {
  SUBCASE("rank-1 input has empty tail") {
    Vector u = random_gaussian(6, 1, 7);
    Vector v = random_gaussian(5, 1, 8);
    const Matrix M = u * v.transpose();
    const SpikeTailSplit split = spike_tail_split(M, 1);
    CHECK(split.tail.norm() <= 1e-12 * M.norm());
  }
  SUBCASE("diagonal case") {
    Matrix M = Matrix::Zero(3, 3);
    M(0, 0) = 3;
    M(1, 1) = 2;
    M(2, 2) = 1;
    const SpikeTailSplit split = spike_tail_split(M, 1);
    Matrix spike = Matrix::Zero(3, 3);
    spike(0, 0) = 3;
    CHECK((split.spike - spike).norm() < 1e-12);
    CHECK((split.tail - (M - spike)).norm() < 1e-12);
  }
  SUBCASE("tail energy equals the trailing singular values") {
    const Matrix M = random_gaussian(12, 9, 9);
    const Index k = 3;
    const SpikeTailSplit split = spike_tail_split(M, k);
    const SvdFactors f = exact_svd(M);
    CHECK(split.tail.norm() ==
          doctest::Approx(f.s.tail(f.s.size() - k).norm()).epsilon(1e-10));
    CHECK((split.spike + split.tail - M).norm() <= 1e-12 * M.norm());
  }
  SUBCASE("k bounds are enforced") {
    CHECK_THROWS_AS(spike_tail_split(random_gaussian(4, 4, 1), 4), std::invalid_argument);
    CHECK_THROWS_AS(spike_tail_split(random_gaussian(4, 4, 1), 0), std::invalid_argument);
  }
}

TEST_CASE("tail suppression quotients") {
  const Index m = 8, n = 6;
  const Matrix M_t = random_gaussian(m, n, 11);
  SUBCASE("no spike variance means identical quotients") {
    const Matrix V_t = random_gaussian(m, n, 12).cwiseAbs();
    const TailSuppressionSamples s =
        tail_suppression_from_parts(M_t, Matrix::Zero(m, n), V_t, 1e-8);
    for (std::size_t i = 0; i < s.full_normalized.size(); ++i) {
      CHECK(s.full_normalized[i] == s.tail_only[i]);
    }
  }
  SUBCASE("spike-dominated variance contracts by about the square root") {
    const Matrix V_t = Matrix::Constant(m, n, 1.0) + random_gaussian(m, n, 13).cwiseAbs();
    const Matrix V_s = 1e4 * V_t;
    const TailSuppressionSamples s = tail_suppression_from_parts(M_t, V_s, V_t, 1e-8);
    std::vector<double> ratios;
    for (std::size_t i = 0; i < s.full_normalized.size(); ++i) {
      ratios.push_back(s.tail_only[i] / s.full_normalized[i]);
    }
    std::sort(ratios.begin(), ratios.end());
    const double median = ratios[ratios.size() / 2];
    CHECK(median >= 80.0);
    CHECK(median <= 120.0);
  }
  SUBCASE("epsilon floor dominates a vanishing second moment") {
    const double eps = 1e-8;
    const TailSuppressionSamples s = tail_suppression_from_parts(
        M_t, Matrix::Constant(m, n, 1e-30), Matrix::Constant(m, n, 1e-30), eps);
    for (std::size_t i = 0; i < s.full_normalized.size(); ++i) {
      const auto idx = static_cast<Index>(i);
      const double expected = std::abs(M_t(idx % m, idx / m)) / eps;
      CHECK(s.full_normalized[i] == doctest::Approx(expected).epsilon(1e-4));
      CHECK(s.tail_only[i] == doctest::Approx(expected).epsilon(1e-4));
    }
  }
  SUBCASE("negative reconstructions clamp and flag past the tolerance") {
    Matrix V_t = Matrix::Constant(m, n, 1.0);
    V_t(0, 0) = -1e-13;  // clamped silently, in both quotients
    TailSuppressionSamples s =
        tail_suppression_from_parts(M_t, Matrix::Zero(m, n), V_t, 1e-8);
    CHECK(s.clamped_entries == 2);
    CHECK_FALSE(s.negative_flagged);
    V_t(0, 0) = -1e-6;
    s = tail_suppression_from_parts(M_t, Matrix::Zero(m, n), V_t, 1e-8);
    CHECK(s.negative_flagged);
  }
}

TEST_CASE("tail suppression through the split pathway") {
  // second moment with a dominant planted rank-1 part plus a small residual
  const Index m = 10, n = 8;
  Vector a = random_gaussian(m, 1, 21).cwiseAbs();
  Vector b = random_gaussian(n, 1, 22).cwiseAbs();
  a.array() += 0.5;
  b.array() += 0.5;
  const Matrix V_big = 500.0 * a * b.transpose();
  const Matrix V_small = Matrix::Constant(m, n, 0.05);
  const Matrix M = random_gaussian(m, n, 23);
  const TailSuppressionSamples s = tail_suppression(M, V_big + V_small, 1, 1e-8);
  // full normalization must contract tail updates versus the tail-only baseline
  double contracted = 0;
  for (std::size_t i = 0; i < s.full_normalized.size(); ++i) {
    if (s.full_normalized[i] < s.tail_only[i]) contracted += 1;
  }
  CHECK(contracted / static_cast<double>(s.full_normalized.size()) > 0.95);
  CHECK_THROWS_AS(tail_suppression(M, -V_small, 1, 1e-8), std::invalid_argument);
}

TEST_CASE("relvar is zero for identical samples") {
  const Matrix ref = random_gaussian(8, 6, 31);
  const std::vector<Matrix> samples(5, ref);
  const RelVarReport rep = relvar(ref, samples, 4);
  for (const double rv : rep.relvar) CHECK(rv <= 1e-20);
  CHECK(rep.micro_batch_size == 4);
  CHECK(rep.sample_count == 5);
}

TEST_CASE("relvar under isotropic noise follows the inverse-square law") {
  Vector sigma(10);
  for (Index i = 0; i < 10; ++i) sigma(i) = 12.0 * std::pow(0.7, static_cast<double>(i));
  const Matrix ref = planted(24, 20, sigma, 33);
  std::vector<Matrix> samples;
  for (int i = 0; i < 400; ++i) {
    samples.push_back(ref + random_gaussian(24, 20, 1000 + static_cast<std::uint64_t>(i)));
  }
  const RelVarReport rep = relvar(ref, samples);
  std::vector<double> log_sigma, log_relvar;
  for (std::size_t i = 0; i < rep.relvar.size(); ++i) {
    // Var(a_k) should be ~1 for every direction
    CHECK(rep.var_a[i] == doctest::Approx(1.0).epsilon(0.3));
    if (rep.sigma[i] > 0.4) {  // the ten planted directions
      log_sigma.push_back(std::log(rep.sigma[i]));
      log_relvar.push_back(std::log(rep.relvar[i]));
    }
  }
  REQUIRE(log_sigma.size() == 10);
  const double slope = fitted_slope(log_sigma, log_relvar);
  CHECK(std::abs(slope + 2.0) <= 0.1);
  // strictly increasing in k across the distinct planted sigmas
  for (std::size_t i = 0; i + 1 < 10; ++i) {
    CHECK(rep.relvar[i + 1] > rep.relvar[i]);
  }
}

TEST_CASE("relvar excludes zero directions and validates input") {
  Matrix ref = Matrix::Zero(4, 4);
  ref(0, 0) = 2.0;  // rank one, three zero directions
  std::vector<Matrix> samples = {ref, 2.0 * ref, 0.5 * ref};
  const RelVarReport rep = relvar(ref, samples);
  CHECK(rep.excluded.size() == 3);
  CHECK(rep.relvar.size() == 1);
  CHECK_THROWS_AS(relvar(ref, {ref}), std::invalid_argument);
  CHECK_THROWS_AS(relvar(Matrix::Zero(4, 4), samples), std::invalid_argument);
}

TEST_CASE("ns_alignment preserves every direction of an isotropic matrix") {
  // all sigmas nearly equal but distinct; ties would make the per-vector
  // comparison ill-posed (degenerate spectra compare as subspaces only)
  Vector sigma(12);
  for (Index i = 0; i < 12; ++i) sigma(i) = 3.0 * (1.0 + 1e-3 * static_cast<double>(i));
  const Matrix G = planted(12, 12, sigma, 41);
  const AlignmentReport rep = ns_alignment(G, 5);
  for (Index i = 0; i < rep.align.size(); ++i) {
    CHECK(rep.align(i) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("ns_alignment on an exactly isotropic matrix preserves the subspace") {
  // with one fully tied cluster the vectors are free to rotate in-span; the
  // span itself must survive the iteration
  const Matrix Q = thin_qr(random_gaussian(12, 12, 41)).Q;
  const Matrix ns = newton_schulz(3.0 * Q, 5);
  const SvdFactors before = exact_svd(3.0 * Q);
  const SvdFactors after = exact_svd(ns);
  CHECK(subspace_similarity(before.V.leftCols(6), after.V) ==
        doctest::Approx(1.0).epsilon(1e-8));
  CHECK((ns * 3.0 * Q.norm() / ns.norm() - 3.0 * Q).norm() < 1e-6 * Q.norm());
}

TEST_CASE("ns_alignment separates a clean head from a degenerate tail") {
  Vector sigma(40);
  sigma(0) = 100.0;
  sigma(1) = 99.9;
  for (Index i = 2; i < 40; ++i) sigma(i) = 1.0;  // exactly tied plateau
  const Matrix G = planted(40, 40, sigma, 43);
  const AlignmentReport rep = ns_alignment(G, 5);
  CHECK(rep.align.head(2).mean() > 0.95);
  CHECK(rep.align.tail(20).mean() < rep.align.head(2).mean() - 0.3);
}

TEST_CASE("subspace similarity basics") {
  const Matrix V = thin_qr(random_gaussian(12, 3, 51)).Q;
  CHECK(subspace_similarity(V, V) == doctest::Approx(1.0));
  // orthogonal complement subspace
  Matrix W = random_gaussian(12, 3, 52);
  W -= V * (V.transpose() * W);
  const Matrix V_perp = thin_qr(W).Q;
  CHECK(subspace_similarity(V, V_perp) == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("subspace similarity is invariant to in-span rotations") {
  const Matrix V = thin_qr(random_gaussian(10, 4, 53)).Q;
  const Matrix R = exact_svd(random_gaussian(4, 4, 54)).U;  // random orthogonal
  CHECK(subspace_similarity(V, V * R) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(mean_canonical_correlation(V, V * R) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("subspace similarity rejects non-orthonormal factors") {
  const Matrix V = thin_qr(random_gaussian(10, 3, 55)).Q;
  CHECK_THROWS_AS(subspace_similarity(V, 2.0 * V), std::invalid_argument);
}

TEST_CASE("spearman and slope helpers") {
  std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> inc = {2, 4, 5, 7, 11};
  std::vector<double> dec = {9, 7, 5, 3, 1};
  CHECK(spearman_rank_correlation(x, inc) == doctest::Approx(1.0));
  CHECK(spearman_rank_correlation(x, dec) == doctest::Approx(-1.0));
  std::vector<double> y = {3, 5, 7, 9, 11};
  CHECK(fitted_slope(x, y) == doctest::Approx(2.0));
}
