#pragma once

#include "spectra/matrix_core.hpp"

#include <string>
#include <vector>

namespace spectra {

/// Stochastic gradient stream with a planted low-rank spike and a sparse,
/// intermittent tail. Spike directions carry amplitude spike_scale * N(1,
/// 0.1^2); each tail direction fires per step with a probability that decays
/// geometrically from ~1 near the spike boundary down to tail_sparsity at
/// the deepest direction, with amplitude scaled so its mean is tail_scale.
/// drift_rate rotates each spike direction into a fixed tail partner by that
/// angle per step.
struct SpikedStreamConfig {
  Index m = 64;
  Index n = 48;
  Index spike_count = 4;
  double spike_scale = 30.0;
  double tail_scale = 1.0;     // expected scale at the top of the tail
  double tail_sparsity = 1.0;  // activation probability at the deepest tail direction
  double tail_decay = 1.0;     // deepest tail scale as a fraction of tail_scale
  double drift_rate = 0.0;     // radians per step
  std::uint64_t seed = 0;
};

class SpikedGradientStream {
 public:
  explicit SpikedGradientStream(const SpikedStreamConfig& cfg);

  Matrix next_gradient();

  /// Closed-form E[G] under the current bases.
  Matrix mean_gradient() const;

  Matrix spike_right_subspace() const { return V_.leftCols(cfg_.spike_count); }
  Matrix spike_left_subspace() const { return U_.leftCols(cfg_.spike_count); }
  const SpikedStreamConfig& config() const { return cfg_; }

  std::string rng_state() const { return rng_.state(); }
  void set_rng_state(const std::string& s) { rng_.set_state(s); }

 private:
  SpikedStreamConfig cfg_;
  Matrix U_;  // m x r orthonormal
  Matrix V_;  // n x r orthonormal
  Vector activation_;       // per-direction firing probability (1 on the spike)
  Vector tail_mean_scale_;  // per-direction expected amplitude
  NormalSampler rng_;
};

/// Quadratic objective over an orthonormal matrix basis {D_i} (trace inner
/// product): L(W) = 1/2 sum_i lambda_i <W - W*, D_i>^2. The first
/// spike_count elements are separable rank-one directions x_i y_i^T (the
/// planted spike); the remaining tail_count are dense. Stochastic gradients
/// add per-direction noise nu_i * xi. The minimizer and both subspace
/// projections are exactly known.
struct SpikedQuadraticConfig {
  Index m = 64;
  Index n = 48;
  Index spike_count = 3;
  Index tail_count = 12;
  double curvature_head = 1.0;
  double curvature_tail = 0.25;
  double noise_spike = 2.0;
  double noise_tail = 0.02;
  double target_scale = 1.0;  // scale of the W* coefficients
  std::uint64_t seed = 0;
};

class SpikedQuadraticTask {
 public:
  explicit SpikedQuadraticTask(const SpikedQuadraticConfig& cfg);

  Index rows() const { return cfg_.m; }
  Index cols() const { return cfg_.n; }
  Index basis_size() const { return static_cast<Index>(basis_.size()); }
  const SpikedQuadraticConfig& config() const { return cfg_; }

  Matrix initial_weights() const { return Matrix::Zero(cfg_.m, cfg_.n); }

  /// Stochastic gradient at W (advances the noise stream).
  Matrix gradient(const Eigen::Ref<const Matrix>& W);
  /// Exact gradient at W, no noise.
  Matrix exact_gradient(const Eigen::Ref<const Matrix>& W) const;

  /// Noise-free objective value.
  double loss(const Eigen::Ref<const Matrix>& W) const;
  /// || projection of W - W* onto the tail basis ||_F.
  double tail_error(const Eigen::Ref<const Matrix>& W) const;
  double spike_error(const Eigen::Ref<const Matrix>& W) const;

  const std::vector<Matrix>& basis() const { return basis_; }
  const Matrix& minimizer() const { return w_star_; }

  std::string rng_state() const { return rng_.state(); }
  void set_rng_state(const std::string& s) { rng_.set_state(s); }

 private:
  Vector basis_coefficients(const Eigen::Ref<const Matrix>& W) const;

  SpikedQuadraticConfig cfg_;
  std::vector<Matrix> basis_;
  Vector curvature_;
  Vector noise_;
  Matrix w_star_;
  NormalSampler rng_;
};

/// Zipf-label softmax regression whose gradients develop a frequency-driven
/// spike: every sample's features carry a shared component h scaled by
/// common_strength, plus a per-class mean and isotropic noise. With
/// freq_normalize set, per-sample losses are weighted by the inverse
/// empirical corpus frequency of their label (weighted mean), which
/// equalizes class contributions and deflates the spike.
struct ZipfTaskConfig {
  Index vocab = 100;
  Index dim = 32;
  double zipf_exponent = 1.0;
  Index samples_per_batch = 1024;
  bool freq_normalize = false;
  std::uint64_t seed = 0;
  double common_strength = 3.0;
  double class_scale = 1.0;
  double feature_noise = 0.3;
  Index corpus_samples = 100000;  // draws used to estimate empirical frequencies
};

class ZipfSoftmaxTask {
 public:
  explicit ZipfSoftmaxTask(const ZipfTaskConfig& cfg);

  struct Batch {
    Matrix G;     // vocab x dim gradient of the (weighted) mean loss
    double loss;  // (weighted) mean cross-entropy
  };

  Batch next_batch(const Eigen::Ref<const Matrix>& W);

  Matrix initial_weights() const { return Matrix::Zero(cfg_.vocab, cfg_.dim); }
  const Vector& true_frequencies() const { return pmf_; }
  const Vector& empirical_frequencies() const { return empirical_freq_; }
  const ZipfTaskConfig& config() const { return cfg_; }

  std::string rng_state() const { return rng_.state(); }
  void set_rng_state(const std::string& s) { rng_.set_state(s); }

 private:
  Index sample_label();

  ZipfTaskConfig cfg_;
  Vector pmf_;
  Vector cdf_;
  Vector empirical_freq_;
  Matrix class_means_;  // vocab x dim
  NormalSampler rng_;
};

/// Square test matrix with a separated spike and a tail made of exactly tied
/// plateaus whose envelope decays smoothly: the construction that exposes
/// how iterative orthogonalization scrambles (numerically) degenerate tail
/// directions while preserving the well-separated head.
struct SpikedProfileConfig {
  Index n = 256;
  Index spike_count = 4;
  double spike_scale = 100.0;
  double spike_spacing = 1.3;  // ratio between consecutive spike values
  double tail_max = 1.0;
  double tail_min = 0.2;
  Index tail_clusters = 5;
  std::uint64_t seed = 0;
};

Matrix spiked_profile_matrix(const SpikedProfileConfig& cfg);

}  // namespace spectra
