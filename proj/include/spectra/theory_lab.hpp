#pragma once

#include "spectra/matrix_core.hpp"

#include <optional>

namespace spectra {

/// Quadratic stochastic-gradient model: curvature H, per-sample gradient
/// covariance Sigma (so Cov(g) = Sigma / B), mean gradient gbar, batch size
/// B, and an optional strong-convexity floor mu with H >= mu I.
struct QuadraticModel {
  Matrix H;
  Matrix Sigma;
  Vector gbar;
  int B = 1;
  std::optional<double> mu_lb;
};

/// Symmetry within 1e-12, eigenvalues >= -1e-10 (clipped to zero in place),
/// dimension cap 1e4. Throws on violations.
void validate_model(QuadraticModel& model);

/// Orthonormal spike basis S = [s_1 ... s_k] with s_i = vec(u_i v_i^T).
/// The projector Pi_k = S S^T is applied through the basis, never stored.
struct SpikeProjector {
  Matrix basis;  // d x k, orthonormal columns

  Index dim() const { return basis.rows(); }
  Index rank() const { return basis.cols(); }
  Vector apply(const Eigen::Ref<const Vector>& x) const {
    return basis * (basis.transpose() * x);
  }
};

/// Builds the spike basis from the rank-k SVD of a mean gradient,
/// s_i = vec(u_i v_i^T) in column-major vectorization. Throws if k exceeds
/// the numerical rank of the matrix; asserts orthonormality within 1e-10.
SpikeProjector spike_projector_from_gradient(const Eigen::Ref<const Matrix>& Gbar, Index k);

/// Mean-optimal learning rate of the expected second-order surrogate:
///   eta* = ||gbar||^2 / (gbar^T H gbar + tr(Sigma H) / B).
double optimal_lr(const QuadraticModel& model);

/// E[g^T H g] = gbar^T H gbar + tr(Sigma H) / B.
double expected_quadratic_form(const QuadraticModel& model);

/// Surrogate expected loss after one step of size eta (L0 = 0 convention):
///   -eta ||gbar||^2 + eta^2/2 * E[g^T H g].
double surrogate_loss(const QuadraticModel& model, double eta);

/// Upper bounds on eta* driven by the spike-restricted covariance
/// Sigma_s = Pi_k Sigma Pi_k (applied through the basis):
///   bound_mid   = ||gbar||^2 / (gbar^T H gbar + tr(Sigma_s H)/B)
///   bound_loose = B ||gbar||^2 / tr(Sigma_s H)   (+inf when the trace is 0)
///   bound_mu    = B ||gbar||^2 / (mu * sum_i s_i^T Sigma s_i)  (when mu set)
struct SpikeLrBounds {
  double bound_mid;
  double bound_loose;
  std::optional<double> bound_mu;
  double trace_sigma_s_h;  // tr(Sigma_s H) through the k x k projected blocks
  double trace_sigma_s;    // sum_i s_i^T Sigma s_i
};
SpikeLrBounds spike_lr_bounds(const QuadraticModel& model, const SpikeProjector& proj);

/// Random strongly-convex instance: H = A^T A + delta I (delta = 1e-3),
/// Sigma = C^T C, Gaussian gbar, spike basis from a random (m x n) mean
/// gradient with m*n = dim(H). Deterministic under seed.
struct RandomModelConfig {
  Index grad_rows = 6;
  Index grad_cols = 8;
  Index spike_rank = 3;
  int batch = 8;
  double delta = 1e-3;
};
struct RandomInstance {
  QuadraticModel model;
  SpikeProjector projector;
};
RandomInstance random_quadratic_instance(const RandomModelConfig& cfg, std::uint64_t seed);

/// Dense-grid argmin of the surrogate over [0, span * eta*]; used as the
/// independent check that eta* is where the surrogate bottoms out.
struct GridSearchResult {
  double eta_grid;   // argmin over the grid
  double cell;       // grid spacing
};
GridSearchResult surrogate_grid_minimum(const QuadraticModel& model, int points = 10000,
                                        double span = 2.5);

}  // namespace spectra
