#pragma once

#include "spectra/spectral_svd.hpp"

#include <cstdint>
#include <string>

namespace spectra {

struct SpectraConfig {
  double lr = 1e-3;
  double momentum = 0.95;
  double rank_ratio = 0.015;
  int power_iters = 1;
  double epsilon = 1e-8;
  double rms_scale = 0.2;
  Index oversample = 8;
  int refresh_interval = 1;       // subspace cache refresh cadence, in steps
  bool orthonormalize_v = false;  // optional post-QR on the tracked factor
  std::uint64_t seed = 0;         // bootstrap sketch sub-stream
};

struct SpectraState {
  Matrix M;             // momentum, same shape as the weights
  SubspaceCache cache;  // tracked right subspace of the momentum
  Index k = 1;          // spike rank, fixed at creation
  std::int64_t t = 0;   // completed steps
};

/// k = max(1, round(rank_ratio * min(m, n))), round-half-to-even.
/// Throws when k reaches min(m, n): the tail scale would divide by zero and
/// a smaller rank_ratio is required.
SpectraState make_spectra_state(Index rows, Index cols, const SpectraConfig& cfg);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  Matrix M;            // first moment
  Matrix V;            // elementwise second moment, nonnegative
  std::int64_t t = 0;  // completed steps (bias correction)
};

AdamWState make_adamw_state(Index rows, Index cols);

struct MuonConfig {
  double lr = 1e-3;
  double momentum = 0.95;
  double epsilon = 1e-8;
  double rms_scale = 0.2;
  int ns_steps = kNewtonSchulzDefaultSteps;
  bool raw_scale = false;  // step = -lr * NS(M) instead of the RMS-matched step
};

struct MuonState {
  Matrix M;
  std::int64_t t = 0;
};

MuonState make_muon_state(Index rows, Index cols);

/// Spike shaping applied to a momentum matrix given rank-k factors:
/// the rank-k reconstruction is removed, the residual's RMS singular scale
///   sigma_tail = sqrt(||M_tail||_F^2 / (min(m,n) - k))
/// is computed, and the spike is re-inserted with all singular values set to
/// sigma_tail. Exposed separately so the shaping can be driven with exactly
/// constructed factors.
struct ShapedUpdate {
  Matrix O;           // shaped update M_tail + U * sigma_tail * V^T
  double sigma_tail;  // RMS singular scale of the residual
};
ShapedUpdate shape_spike(const Eigen::Ref<const Matrix>& M, const SvdFactors& factors,
                         FlopCounter* flops = nullptr);

struct SpectraStepInfo {
  double rms = 0.0;        // ||O||_F / sqrt(mn)
  double eta_eff = 0.0;    // rms_scale * lr / (rms + eps)
  double sigma_tail = 0.0;
  double update_norm = 0.0;
  bool degenerate = false;  // bootstrap/tracking hit a zero direction
};

/// One optimizer step: M <- mu M + G, rank-k factors from the cached tracker,
/// spike shaping, RMS-matched weight update. W and state are updated in place.
SpectraStepInfo spectra_step(Matrix& W, const Eigen::Ref<const Matrix>& G,
                             SpectraState& state, const SpectraConfig& cfg,
                             FlopCounter* flops = nullptr);

/// Bias-corrected AdamW with decoupled weight decay applied as
/// W <- W * (1 - lr * wd) before the moment step.
void adamw_step(Matrix& W, const Eigen::Ref<const Matrix>& G, AdamWState& state,
                const AdamWConfig& cfg, FlopCounter* flops = nullptr);

struct MuonStepInfo {
  double rms = 0.0;
  double eta_eff = 0.0;
  double update_norm = 0.0;
};

/// M <- mu M + G, then a Newton-Schulz orthogonalized step with the same
/// RMS-matched rescale as spectra_step (or raw -lr * NS(M) when configured).
/// Zero momentum and zero gradient is a no-op.
MuonStepInfo muon_step(Matrix& W, const Eigen::Ref<const Matrix>& G, MuonState& state,
                       const MuonConfig& cfg, FlopCounter* flops = nullptr);

enum class OptimizerKind { kAdamW, kMuon, kSpectra };

OptimizerKind optimizer_kind_from_string(const std::string& name);
std::string to_string(OptimizerKind kind);

/// Optimizer-state scalar budget for an m x n weight matrix:
/// AdamW 2mn, Muon mn, Spectra mn + nk.
std::uint64_t state_memory_scalars(OptimizerKind kind, Index m, Index n, Index k);

/// Actual allocated f64 state scalars (moment buffers plus, for Spectra,
/// the cached subspace factor once the tracker has bootstrapped).
std::uint64_t introspect_state_scalars(const SpectraState& state);
std::uint64_t introspect_state_scalars(const AdamWState& state);
std::uint64_t introspect_state_scalars(const MuonState& state);

}  // namespace spectra
