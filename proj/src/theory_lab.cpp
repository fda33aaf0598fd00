#include "spectra/theory_lab.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace spectra {

namespace {

void clip_psd(Matrix& A, const char* name) {
  const double sym_gap = (A - A.transpose()).norm();
  if (sym_gap > 1e-12 * std::max(1.0, A.norm())) {
    std::ostringstream msg;
    msg << name << ": not symmetric (deviation " << sym_gap << ")";
    throw std::invalid_argument(msg.str());
  }
  A = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(A);
  const Vector& evals = eig.eigenvalues();
  if (evals.minCoeff() < -1e-10 * std::max(1.0, evals.cwiseAbs().maxCoeff())) {
    std::ostringstream msg;
    msg << name << ": negative eigenvalue " << evals.minCoeff();
    throw std::invalid_argument(msg.str());
  }
  if (evals.minCoeff() < 0.0) {
    Vector clipped = evals.cwiseMax(0.0);
    A = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  }
}

}  // namespace

void validate_model(QuadraticModel& model) {
  const Index d = model.H.rows();
  if (d <= 0 || model.H.cols() != d) {
    throw std::invalid_argument("QuadraticModel: H must be square and nonempty");
  }
  if (d > 10000) {
    throw std::invalid_argument("QuadraticModel: dimension exceeds the 1e4 cap");
  }
  if (model.Sigma.rows() != d || model.Sigma.cols() != d) {
    throw std::invalid_argument("QuadraticModel: Sigma shape disagrees with H");
  }
  if (model.gbar.size() != d) {
    throw std::invalid_argument("QuadraticModel: gbar length disagrees with H");
  }
  if (model.B < 1) {
    throw std::invalid_argument("QuadraticModel: batch size must be positive");
  }
  require_finite(model.H, "QuadraticModel H");
  require_finite(model.Sigma, "QuadraticModel Sigma");
  clip_psd(model.H, "QuadraticModel H");
  clip_psd(model.Sigma, "QuadraticModel Sigma");
  if (model.mu_lb.has_value()) {
    if (*model.mu_lb <= 0.0) {
      throw std::invalid_argument("QuadraticModel: mu_lb must be positive");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(model.H, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < *model.mu_lb - 1e-10) {
      throw std::invalid_argument("QuadraticModel: H is not bounded below by mu_lb");
    }
  }
}

SpikeProjector spike_projector_from_gradient(const Eigen::Ref<const Matrix>& Gbar, Index k) {
  const SvdFactors f = exact_svd(Gbar);
  Index numerical_rank = 0;
  const double tol = 1e-12 * std::max(1.0, f.s.size() > 0 ? f.s(0) : 0.0);
  for (Index i = 0; i < f.s.size(); ++i) {
    if (f.s(i) > tol) ++numerical_rank;
  }
  if (k < 1 || k > numerical_rank) {
    std::ostringstream msg;
    msg << "spike_projector_from_gradient: k=" << k << " exceeds numerical rank "
        << numerical_rank;
    throw std::invalid_argument(msg.str());
  }
  const Index m = Gbar.rows();
  const Index n = Gbar.cols();
  SpikeProjector proj;
  proj.basis = Matrix(m * n, k);
  for (Index i = 0; i < k; ++i) {
    // column-major vec(u_i v_i^T)
    const Matrix outer = f.U.col(i) * f.V.col(i).transpose();
    proj.basis.col(i) = Eigen::Map<const Vector>(outer.data(), m * n);
  }
  const double gram_gap =
      (proj.basis.transpose() * proj.basis - Matrix::Identity(k, k)).norm();
  if (gram_gap > 1e-10) {
    std::ostringstream msg;
    msg << "spike_projector_from_gradient: basis not orthonormal (deviation " << gram_gap
        << ")";
    throw std::runtime_error(msg.str());
  }
  return proj;
}

double expected_quadratic_form(const QuadraticModel& model) {
  const double signal = model.gbar.dot(model.H * model.gbar);
  const double noise = (model.Sigma * model.H).trace() / static_cast<double>(model.B);
  return signal + noise;
}

double optimal_lr(const QuadraticModel& model) {
  const double denom = expected_quadratic_form(model);
  if (denom <= 0.0) {
    throw std::invalid_argument(
        "optimal_lr: flat/noiseless model, surrogate denominator is zero");
  }
  return model.gbar.squaredNorm() / denom;
}

double surrogate_loss(const QuadraticModel& model, double eta) {
  if (!std::isfinite(eta)) {
    throw std::invalid_argument("surrogate_loss: eta must be finite");
  }
  return -eta * model.gbar.squaredNorm() + 0.5 * eta * eta * expected_quadratic_form(model);
}

SpikeLrBounds spike_lr_bounds(const QuadraticModel& model, const SpikeProjector& proj) {
  if (proj.dim() != model.H.rows()) {
    throw std::invalid_argument("spike_lr_bounds: projector dimension disagrees with model");
  }
  const Matrix& S = proj.basis;
  // Sigma_s = S S^T Sigma S S^T, so tr(Sigma_s H) = tr((S^T Sigma S)(S^T H S)).
  const Matrix sigma_block = S.transpose() * model.Sigma * S;  // k x k
  const Matrix h_block = S.transpose() * model.H * S;          // k x k
  SpikeLrBounds out;
  out.trace_sigma_s_h = (sigma_block * h_block).trace();
  out.trace_sigma_s = sigma_block.trace();

  const double g2 = model.gbar.squaredNorm();
  const double signal = model.gbar.dot(model.H * model.gbar);
  const double mid_denom = signal + out.trace_sigma_s_h / static_cast<double>(model.B);
  if (mid_denom <= 0.0) {
    out.bound_mid = std::numeric_limits<double>::infinity();
  } else {
    out.bound_mid = g2 / mid_denom;
  }
  if (out.trace_sigma_s_h <= 0.0) {
    out.bound_loose = std::numeric_limits<double>::infinity();
  } else {
    out.bound_loose = static_cast<double>(model.B) * g2 / out.trace_sigma_s_h;
  }
  if (model.mu_lb.has_value()) {
    const double denom = *model.mu_lb * out.trace_sigma_s;
    out.bound_mu = denom <= 0.0 ? std::numeric_limits<double>::infinity()
                                : static_cast<double>(model.B) * g2 / denom;
  }
  return out;
}

RandomInstance random_quadratic_instance(const RandomModelConfig& cfg, std::uint64_t seed) {
  const Index d = cfg.grad_rows * cfg.grad_cols;
  const Matrix A = random_gaussian(d, d, derive_seed(seed, "H"));
  const Matrix C = random_gaussian(d, d, derive_seed(seed, "Sigma"));
  Matrix gbar_mat = random_gaussian(cfg.grad_rows, cfg.grad_cols, derive_seed(seed, "gbar"));

  RandomInstance inst;
  inst.model.H = A.transpose() * A / static_cast<double>(d) +
                 cfg.delta * Matrix::Identity(d, d);
  inst.model.Sigma = C.transpose() * C / static_cast<double>(d);
  inst.model.gbar = Eigen::Map<const Vector>(gbar_mat.data(), d);
  inst.model.B = cfg.batch;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(inst.model.H, Eigen::EigenvaluesOnly);
  inst.model.mu_lb = eig.eigenvalues().minCoeff();
  validate_model(inst.model);
  inst.projector = spike_projector_from_gradient(gbar_mat, cfg.spike_rank);
  return inst;
}

GridSearchResult surrogate_grid_minimum(const QuadraticModel& model, int points, double span) {
  if (points < 2) throw std::invalid_argument("surrogate_grid_minimum: needs >= 2 points");
  const double eta_star = optimal_lr(model);
  const double hi = span * eta_star;
  const double cell = hi / static_cast<double>(points - 1);
  double best_eta = 0.0;
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i < points; ++i) {
    const double eta = cell * static_cast<double>(i);
    const double val = surrogate_loss(model, eta);
    if (val < best_val) {
      best_val = val;
      best_eta = eta;
    }
  }
  return {best_eta, cell};
}

}  // namespace spectra
