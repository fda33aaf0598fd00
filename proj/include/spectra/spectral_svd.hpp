#pragma once

#include "spectra/matrix_core.hpp"

#include <optional>

namespace spectra {

/// Warm-start state for the cached subspace tracker: the right factor V
/// (n x k, near-orthonormal columns) from the previous call.
struct SubspaceCache {
  std::optional<Matrix> v_cache;
  std::int64_t bootstrap_count = 0;
  std::int64_t refresh_count = 0;
};

struct PowerIterConfig {
  Index k = 1;               // target rank
  int iters = 1;             // iteration count T (warm path)
  Index oversample = 8;      // extra sketch columns, bootstrap only
  std::uint64_t seed = 0;    // bootstrap sketch / degenerate-replacement stream
  bool orthonormalize_v = false;  // optional post-QR on V, off by default
};

/// Randomized range-finder bootstrap: Gaussian sketch, one power pass, thin
/// QR, exact SVD of the projected (k+oversample) x n block, truncated to k.
/// Deterministic under a fixed seed.
SvdFactors bootstrap_lowrank_svd(const Eigen::Ref<const Matrix>& G, Index k,
                                 Index oversample, std::uint64_t seed,
                                 FlopCounter* flops = nullptr);

/// Rank-k SVD estimate by warm-started subspace iteration.
///
/// With an empty cache this bootstraps via bootstrap_lowrank_svd and stores
/// the right factor. Otherwise it runs exactly cfg.iters rounds of
///   P <- G V;  U <- ThinQR(P);  W <- G^T U;  s <- column norms of W;
///   V <- W with unit columns
/// and, when `refresh_cache` is set, replaces the cached V. Returned factors
/// have s sorted descending; V columns are unit norm but only approximately
/// orthonormal at small iteration counts (the deviation is a measurement,
/// not an error). Columns whose norm falls below 1e-14 * ||G||_F are
/// replaced by a deterministic direction orthogonal to the others and the
/// result is flagged degenerate.
SvdFactors power_iteration_svd(const Eigen::Ref<const Matrix>& G,
                               const PowerIterConfig& cfg, SubspaceCache& cache,
                               FlopCounter* flops = nullptr, bool refresh_cache = true);

/// Diagnostic: ||V^T V - I||_F of a factor's right block.
double right_factor_orthogonality_gap(const SvdFactors& f);

struct NsCoefficients {
  double a;
  double b;
  double c;
};

/// Quintic Newton-Schulz coefficients used by the Muon-style baseline.
inline constexpr NsCoefficients kNewtonSchulzQuintic{3.4445, -4.7750, 2.0315};
inline constexpr int kNewtonSchulzDefaultSteps = 5;

/// Approximate orthogonalization by the quintic iteration
///   X <- a X + b X (X^T X) + c X (X^T X)^2
/// after prescaling X = G / ||G||_F. Internally works on the smaller Gram
/// side. Throws on an all-zero input.
Matrix newton_schulz(const Eigen::Ref<const Matrix>& G, int steps,
                     FlopCounter* flops = nullptr,
                     const NsCoefficients& coeffs = kNewtonSchulzQuintic);

}  // namespace spectra
