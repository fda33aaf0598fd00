#pragma once

#include "spectra/spectral_svd.hpp"

#include <utility>
#include <vector>

namespace spectra {

/// Full singular spectrum plus cumulative energy and the spike boundary.
/// cdf(j) = sum_{i<=j} sigma_i^2 / sum_i sigma_i^2.
struct SpectrumReport {
  Vector sigmas;       // descending
  Vector cdf;          // nondecreasing, last entry 1
  Index spike_count;   // max(1, round(spike_ratio * min(m,n)))
  double gap_ratio;    // sigma_spike / sigma_{spike+1} (+inf if boundary at rank)
};

SpectrumReport spectrum_report(const Eigen::Ref<const Matrix>& G, double spike_ratio);

/// Exploratory spike boundary: index of the largest log-gap in the spectrum.
/// Reporting uses the fixed-ratio boundary; this one is for poking around.
Index detect_spike_by_log_gap(const Vector& sigmas);

/// Best rank-k approximation and its residual, M = M_s + M_t exactly.
struct SpikeTailSplit {
  Matrix spike;  // rank-k truncated SVD reconstruction
  Matrix tail;   // M - spike
};
SpikeTailSplit spike_tail_split(const Eigen::Ref<const Matrix>& M, Index k);

/// Elementwise magnitude samples of the tail update under full second-moment
/// normalization |M_t| / (sqrt(V_s + V_t) + eps) versus the tail-only
/// baseline |M_t| / (sqrt(V_t) + eps).
struct TailSuppressionSamples {
  std::vector<double> full_normalized;
  std::vector<double> tail_only;
  std::int64_t clamped_entries = 0;   // mildly negative reconstructions clamped
  bool negative_flagged = false;      // entries below -1e-12 encountered
};
TailSuppressionSamples tail_suppression(const Eigen::Ref<const Matrix>& M,
                                        const Eigen::Ref<const Matrix>& V, Index k,
                                        double epsilon);

/// Same quotients evaluated on already-decomposed pieces (M_t, V_s, V_t);
/// mildly negative reconstructed entries are clamped at zero before the
/// square root, entries below -1e-12 additionally raise the flag.
TailSuppressionSamples tail_suppression_from_parts(const Eigen::Ref<const Matrix>& M_t,
                                                   const Eigen::Ref<const Matrix>& V_s,
                                                   const Eigen::Ref<const Matrix>& V_t,
                                                   double epsilon);

/// Per-direction relative variance of sample projections onto the fixed
/// spectral basis of a reference gradient:
///   a_{i,k} = u_k^T G_i v_k,  relvar(k) = Var(a_{.,k}) / sigma_k^2.
struct RelVarReport {
  std::vector<Index> direction;    // 1-based direction index k
  std::vector<double> sigma;       // sigma_k of the reference
  std::vector<double> var_a;       // unbiased sample variance of a_{.,k}
  std::vector<double> relvar;      // var_a / sigma_k^2
  std::vector<Index> excluded;     // directions with sigma_k = 0
  std::size_t sample_count = 0;
  Index micro_batch_size = 0;      // caller-provided metadata
};
RelVarReport relvar(const Eigen::Ref<const Matrix>& reference,
                    const std::vector<Matrix>& samples, Index micro_batch_size = 0);

/// Per-direction preservation of right singular vectors under Newton-Schulz:
/// align(i) = max_j |<v_i, v_hat_j>|, in [0, 1].
struct AlignmentReport {
  Vector align;
  Vector sigmas;  // spectrum of the input, for head/tail bucketing
};
AlignmentReport ns_alignment(const Eigen::Ref<const Matrix>& G, int ns_steps,
                             const NsCoefficients& coeffs = kNewtonSchulzQuintic);

/// Largest canonical correlation between two column subspaces: the top
/// singular value of V_a^T V_b, clipped to [0, 1]. Inputs must have
/// orthonormal columns within 1e-6.
double subspace_similarity(const Eigen::Ref<const Matrix>& V_a,
                           const Eigen::Ref<const Matrix>& V_b);

/// Mean canonical correlation, a stricter secondary similarity measure.
double mean_canonical_correlation(const Eigen::Ref<const Matrix>& V_a,
                                  const Eigen::Ref<const Matrix>& V_b);

/// Largest principal angle (radians) between two orthonormal column spans.
double principal_angle(const Eigen::Ref<const Matrix>& V_a,
                       const Eigen::Ref<const Matrix>& V_b);

/// Spearman rank correlation between paired observations.
double spearman_rank_correlation(const std::vector<double>& x, const std::vector<double>& y);

/// Least-squares slope of y against x.
double fitted_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace spectra
