#include "spectra/synth_workloads.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace spectra {

namespace {

Matrix random_orthonormal(Index rows, Index cols, std::uint64_t seed) {
  const Matrix g = random_gaussian(rows, cols, seed);
  return thin_qr(g).Q;
}

}  // namespace

SpikedGradientStream::SpikedGradientStream(const SpikedStreamConfig& cfg)
    : cfg_(cfg), rng_(derive_seed(cfg.seed, "stream-noise")) {
  if (cfg_.m <= 0 || cfg_.n <= 0) {
    throw std::invalid_argument("SpikedGradientStream: dimensions must be positive");
  }
  const Index r = std::min(cfg_.m, cfg_.n);
  if (cfg_.spike_count < 0 || cfg_.spike_count >= r) {
    throw std::invalid_argument("SpikedGradientStream: spike_count must lie in [0, min(m,n))");
  }
  if (cfg_.spike_scale < cfg_.tail_scale || cfg_.tail_scale <= 0.0) {
    throw std::invalid_argument(
        "SpikedGradientStream: requires spike_scale >= tail_scale > 0");
  }
  if (cfg_.tail_sparsity < 0.0 || cfg_.tail_sparsity > 1.0) {
    throw std::invalid_argument("SpikedGradientStream: tail_sparsity must lie in [0, 1]");
  }
  if (cfg_.tail_decay <= 0.0 || cfg_.tail_decay > 1.0) {
    throw std::invalid_argument("SpikedGradientStream: tail_decay must lie in (0, 1]");
  }
  if (cfg_.drift_rate < 0.0) {
    throw std::invalid_argument("SpikedGradientStream: drift_rate must be nonnegative");
  }
  U_ = random_orthonormal(cfg_.m, r, derive_seed(cfg_.seed, "stream-left"));
  V_ = random_orthonormal(cfg_.n, r, derive_seed(cfg_.seed, "stream-right"));

  // Sparsity and scale both decay geometrically across the tail: deeper
  // directions fire on fewer samples (down to tail_sparsity) and carry a
  // smaller expected scale (down to tail_decay * tail_scale).
  activation_ = Vector::Ones(r);
  tail_mean_scale_ = Vector::Constant(r, cfg_.tail_scale);
  const Index tail = r - cfg_.spike_count;
  for (Index i = 0; i < tail; ++i) {
    const double frac = static_cast<double>(i + 1) / static_cast<double>(tail);
    activation_(cfg_.spike_count + i) = std::pow(cfg_.tail_sparsity, frac);
    tail_mean_scale_(cfg_.spike_count + i) =
        cfg_.tail_scale * std::pow(cfg_.tail_decay, frac);
  }
}

Matrix SpikedGradientStream::next_gradient() {
  const Index r = std::min(cfg_.m, cfg_.n);
  Vector amps = Vector::Zero(r);
  for (Index i = 0; i < cfg_.spike_count; ++i) {
    amps(i) = cfg_.spike_scale * (1.0 + 0.1 * rng_.next());
  }
  for (Index i = cfg_.spike_count; i < r; ++i) {
    const double p = activation_(i);
    const bool active = p > 0.0 && rng_.uniform() < p;
    if (active) {
      amps(i) = (tail_mean_scale_(i) / p) * (1.0 + 0.1 * rng_.next());
    }
  }
  Matrix G = (U_ * amps.asDiagonal()) * V_.transpose();

  if (cfg_.drift_rate > 0.0 && cfg_.spike_count > 0) {
    const double c = std::cos(cfg_.drift_rate);
    const double s = std::sin(cfg_.drift_rate);
    for (Index i = 0; i < cfg_.spike_count; ++i) {
      const Index partner = r - 1 - i;
      if (partner <= i) break;
      const Vector u_i = U_.col(i), u_p = U_.col(partner);
      U_.col(i) = c * u_i + s * u_p;
      U_.col(partner) = -s * u_i + c * u_p;
      const Vector v_i = V_.col(i), v_p = V_.col(partner);
      V_.col(i) = c * v_i + s * v_p;
      V_.col(partner) = -s * v_i + c * v_p;
    }
  }
  return G;
}

Matrix SpikedGradientStream::mean_gradient() const {
  const Index r = std::min(cfg_.m, cfg_.n);
  Vector amps(r);
  for (Index i = 0; i < r; ++i) {
    amps(i) = i < cfg_.spike_count ? cfg_.spike_scale
                                   : (activation_(i) > 0.0 ? tail_mean_scale_(i) : 0.0);
  }
  return (U_ * amps.asDiagonal()) * V_.transpose();
}

SpikedQuadraticTask::SpikedQuadraticTask(const SpikedQuadraticConfig& cfg)
    : cfg_(cfg), rng_(derive_seed(cfg.seed, "quadratic-noise")) {
  if (cfg_.m <= 0 || cfg_.n <= 0 || cfg_.spike_count < 1 || cfg_.tail_count < 1) {
    throw std::invalid_argument("SpikedQuadraticTask: bad dimensions");
  }
  if (cfg_.spike_count > std::min(cfg_.m, cfg_.n)) {
    throw std::invalid_argument("SpikedQuadraticTask: spike_count exceeds min(m,n)");
  }
  if (cfg_.curvature_head < cfg_.curvature_tail || cfg_.curvature_tail <= 0.0) {
    throw std::invalid_argument(
        "SpikedQuadraticTask: requires curvature_head >= curvature_tail > 0");
  }
  const Index nb = cfg_.spike_count + cfg_.tail_count;
  if (nb > cfg_.m * cfg_.n) {
    throw std::invalid_argument("SpikedQuadraticTask: basis larger than the matrix space");
  }

  // Spike elements: separable rank-one directions x_i y_i^T; orthonormal
  // under the trace inner product because the x's and y's are orthonormal.
  const Matrix X = random_orthonormal(cfg_.m, cfg_.spike_count, derive_seed(cfg_.seed, "qx"));
  const Matrix Y = random_orthonormal(cfg_.n, cfg_.spike_count, derive_seed(cfg_.seed, "qy"));
  basis_.reserve(static_cast<std::size_t>(nb));
  for (Index i = 0; i < cfg_.spike_count; ++i) {
    basis_.push_back(X.col(i) * Y.col(i).transpose());
  }
  // Tail elements: dense Gaussians, Gram-Schmidt under the trace product.
  NormalSampler basis_rng(derive_seed(cfg_.seed, "qtail"));
  for (Index i = 0; i < cfg_.tail_count; ++i) {
    Matrix D(cfg_.m, cfg_.n);
    for (int attempt = 0; attempt < 16; ++attempt) {
      basis_rng.fill(D);
      for (int pass = 0; pass < 2; ++pass) {
        for (const Matrix& E : basis_) {
          D.noalias() -= E.cwiseProduct(D).sum() * E;
        }
      }
      if (D.norm() > 1e-8) break;
    }
    basis_.push_back(D / D.norm());
  }

  curvature_ = Vector(nb);
  noise_ = Vector(nb);
  for (Index i = 0; i < nb; ++i) {
    const bool spike = i < cfg_.spike_count;
    curvature_(i) = spike ? cfg_.curvature_head : cfg_.curvature_tail;
    noise_(i) = spike ? cfg_.noise_spike : cfg_.noise_tail;
  }

  NormalSampler target_rng(derive_seed(cfg_.seed, "qtarget"));
  w_star_ = Matrix::Zero(cfg_.m, cfg_.n);
  for (Index i = 0; i < nb; ++i) {
    w_star_ += cfg_.target_scale * target_rng.next() * basis_[static_cast<std::size_t>(i)];
  }
}

Vector SpikedQuadraticTask::basis_coefficients(const Eigen::Ref<const Matrix>& W) const {
  const Index nb = basis_size();
  Vector c(nb);
  for (Index i = 0; i < nb; ++i) {
    c(i) = basis_[static_cast<std::size_t>(i)].cwiseProduct(W - w_star_).sum();
  }
  return c;
}

Matrix SpikedQuadraticTask::exact_gradient(const Eigen::Ref<const Matrix>& W) const {
  const Vector c = basis_coefficients(W);
  Matrix G = Matrix::Zero(cfg_.m, cfg_.n);
  for (Index i = 0; i < basis_size(); ++i) {
    G += curvature_(i) * c(i) * basis_[static_cast<std::size_t>(i)];
  }
  return G;
}

Matrix SpikedQuadraticTask::gradient(const Eigen::Ref<const Matrix>& W) {
  const Vector c = basis_coefficients(W);
  Matrix G = Matrix::Zero(cfg_.m, cfg_.n);
  for (Index i = 0; i < basis_size(); ++i) {
    const double coeff = curvature_(i) * c(i) + noise_(i) * rng_.next();
    G += coeff * basis_[static_cast<std::size_t>(i)];
  }
  return G;
}

double SpikedQuadraticTask::loss(const Eigen::Ref<const Matrix>& W) const {
  const Vector c = basis_coefficients(W);
  return 0.5 * c.cwiseProduct(c).dot(curvature_);
}

double SpikedQuadraticTask::tail_error(const Eigen::Ref<const Matrix>& W) const {
  const Vector c = basis_coefficients(W);
  return c.tail(cfg_.tail_count).norm();
}

double SpikedQuadraticTask::spike_error(const Eigen::Ref<const Matrix>& W) const {
  const Vector c = basis_coefficients(W);
  return c.head(cfg_.spike_count).norm();
}

ZipfSoftmaxTask::ZipfSoftmaxTask(const ZipfTaskConfig& cfg)
    : cfg_(cfg), rng_(derive_seed(cfg.seed, "zipf-noise")) {
  if (cfg_.vocab < 10) throw std::invalid_argument("ZipfSoftmaxTask: vocab must be >= 10");
  if (cfg_.dim < 2) throw std::invalid_argument("ZipfSoftmaxTask: dim must be >= 2");
  if (cfg_.zipf_exponent <= 0.0) {
    throw std::invalid_argument("ZipfSoftmaxTask: zipf_exponent must be positive");
  }
  if (cfg_.samples_per_batch < 1) {
    throw std::invalid_argument("ZipfSoftmaxTask: samples_per_batch must be positive");
  }

  pmf_ = Vector(cfg_.vocab);
  for (Index c = 0; c < cfg_.vocab; ++c) {
    pmf_(c) = std::pow(static_cast<double>(c + 1), -cfg_.zipf_exponent);
  }
  pmf_ /= pmf_.sum();
  cdf_ = Vector(cfg_.vocab);
  double acc = 0.0;
  for (Index c = 0; c < cfg_.vocab; ++c) {
    acc += pmf_(c);
    cdf_(c) = acc;
  }
  cdf_(cfg_.vocab - 1) = 1.0;

  // Empirical corpus frequencies with add-one smoothing so rare labels keep
  // a finite weight under the inverse-frequency reweighting.
  NormalSampler corpus_rng(derive_seed(cfg_.seed, "zipf-corpus"));
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(cfg_.vocab);
  for (Index i = 0; i < cfg_.corpus_samples; ++i) {
    const double u = corpus_rng.uniform();
    Index lo = 0, hi = cfg_.vocab - 1;
    while (lo < hi) {
      const Index mid = (lo + hi) / 2;
      if (u <= cdf_(mid)) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    counts(lo) += 1;
  }
  empirical_freq_ = Vector(cfg_.vocab);
  for (Index c = 0; c < cfg_.vocab; ++c) {
    empirical_freq_(c) = (static_cast<double>(counts(c)) + 1.0) /
                         (static_cast<double>(cfg_.corpus_samples) +
                          static_cast<double>(cfg_.vocab));
  }

  // Class means: a shared component h (the structure every sample carries)
  // plus a per-class direction.
  NormalSampler mean_rng(derive_seed(cfg_.seed, "zipf-means"));
  Vector h(cfg_.dim);
  for (Index j = 0; j < cfg_.dim; ++j) h(j) = mean_rng.next();
  h.normalize();
  class_means_ = Matrix(cfg_.vocab, cfg_.dim);
  for (Index c = 0; c < cfg_.vocab; ++c) {
    Vector r(cfg_.dim);
    for (Index j = 0; j < cfg_.dim; ++j) r(j) = mean_rng.next();
    r.normalize();
    class_means_.row(c) = cfg_.common_strength * h.transpose() +
                          cfg_.class_scale * r.transpose();
  }
}

Index ZipfSoftmaxTask::sample_label() {
  const double u = rng_.uniform();
  Index lo = 0, hi = cfg_.vocab - 1;
  while (lo < hi) {
    const Index mid = (lo + hi) / 2;
    if (u <= cdf_(mid)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

ZipfSoftmaxTask::Batch ZipfSoftmaxTask::next_batch(const Eigen::Ref<const Matrix>& W) {
  if (W.rows() != cfg_.vocab || W.cols() != cfg_.dim) {
    std::ostringstream msg;
    msg << "ZipfSoftmaxTask: weights must be " << cfg_.vocab << "x" << cfg_.dim << ", got "
        << W.rows() << "x" << W.cols();
    throw std::invalid_argument(msg.str());
  }
  Matrix G = Matrix::Zero(cfg_.vocab, cfg_.dim);
  double loss = 0.0;
  double weight_total = 0.0;
  Vector x(cfg_.dim);
  for (Index s = 0; s < cfg_.samples_per_batch; ++s) {
    const Index label = sample_label();
    for (Index j = 0; j < cfg_.dim; ++j) {
      x(j) = class_means_(label, j) + cfg_.feature_noise * rng_.next();
    }
    Vector logits = W * x;
    const double zmax = logits.maxCoeff();
    Vector p = (logits.array() - zmax).exp();
    const double z = p.sum();
    p /= z;
    const double w = cfg_.freq_normalize ? 1.0 / empirical_freq_(label) : 1.0;
    loss += w * (std::log(z) + zmax - logits(label));
    p(label) -= 1.0;
    G.noalias() += w * p * x.transpose();
    weight_total += w;
  }
  return {G / weight_total, loss / weight_total};
}

Matrix spiked_profile_matrix(const SpikedProfileConfig& cfg) {
  if (cfg.n < 8 || cfg.spike_count < 1 || cfg.spike_count >= cfg.n) {
    throw std::invalid_argument("spiked_profile_matrix: bad dimensions");
  }
  if (cfg.tail_max <= cfg.tail_min || cfg.tail_min <= 0.0 || cfg.tail_clusters < 1) {
    throw std::invalid_argument("spiked_profile_matrix: bad tail profile");
  }
  Vector sigma(cfg.n);
  for (Index i = 0; i < cfg.spike_count; ++i) {
    sigma(i) = cfg.spike_scale *
               std::pow(cfg.spike_spacing, static_cast<double>(cfg.spike_count - 1 - i));
  }
  // Tail: tied plateaus under a geometrically decaying envelope. The exact
  // ties are the point: they make the tail directions numerically
  // interchangeable, like the quasi-continuous bulk of a real spectrum.
  const Index tail = cfg.n - cfg.spike_count;
  for (Index i = 0; i < tail; ++i) {
    const Index cluster = i * cfg.tail_clusters / tail;
    const double frac = cfg.tail_clusters > 1
                            ? static_cast<double>(cluster) /
                                  static_cast<double>(cfg.tail_clusters - 1)
                            : 0.0;
    sigma(cfg.spike_count + i) =
        cfg.tail_max * std::pow(cfg.tail_min / cfg.tail_max, frac);
  }
  const Matrix U = random_orthonormal(cfg.n, cfg.n, derive_seed(cfg.seed, "profile-left"));
  const Matrix V = random_orthonormal(cfg.n, cfg.n, derive_seed(cfg.seed, "profile-right"));
  return (U * sigma.asDiagonal()) * V.transpose();
}

}  // namespace spectra
