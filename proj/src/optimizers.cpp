#include "spectra/optimizers.hpp"

#include <cfenv>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace spectra {

namespace {

Index spike_rank(Index rows, Index cols, double rank_ratio) {
  if (rank_ratio <= 0.0 || rank_ratio > 1.0) {
    throw std::invalid_argument("rank_ratio must lie in (0, 1]");
  }
  const Index r = std::min(rows, cols);
  // nearbyint under the default rounding mode = round half to even
  const auto rounded = static_cast<Index>(std::nearbyint(rank_ratio * static_cast<double>(r)));
  return std::max<Index>(1, rounded);
}

}  // namespace

SpectraState make_spectra_state(Index rows, Index cols, const SpectraConfig& cfg) {
  if (rows <= 0 || cols <= 0) {
    throw std::invalid_argument("make_spectra_state: dimensions must be positive");
  }
  const Index k = spike_rank(rows, cols, cfg.rank_ratio);
  if (k >= std::min(rows, cols)) {
    std::ostringstream msg;
    msg << "spectra: rank_ratio " << cfg.rank_ratio << " gives k = " << k
        << " = min(m,n); the tail scale divides by min(m,n)-k, use a smaller rank_ratio";
    throw std::invalid_argument(msg.str());
  }
  SpectraState st;
  st.M = Matrix::Zero(rows, cols);
  st.k = k;
  return st;
}

AdamWState make_adamw_state(Index rows, Index cols) {
  if (rows <= 0 || cols <= 0) {
    throw std::invalid_argument("make_adamw_state: dimensions must be positive");
  }
  AdamWState st;
  st.M = Matrix::Zero(rows, cols);
  st.V = Matrix::Zero(rows, cols);
  return st;
}

MuonState make_muon_state(Index rows, Index cols) {
  if (rows <= 0 || cols <= 0) {
    throw std::invalid_argument("make_muon_state: dimensions must be positive");
  }
  MuonState st;
  st.M = Matrix::Zero(rows, cols);
  return st;
}

ShapedUpdate shape_spike(const Eigen::Ref<const Matrix>& M, const SvdFactors& factors,
                         FlopCounter* flops) {
  const Index r = std::min(M.rows(), M.cols());
  const Index k = factors.rank();
  if (k >= r) {
    throw std::invalid_argument("shape_spike: k must be below min(m,n)");
  }
  const Matrix spike = matmul(factors.U * factors.s.asDiagonal(), factors.V, false, true, flops);
  ShapedUpdate out;
  Matrix tail = M - spike;
  out.sigma_tail =
      std::sqrt(tail.squaredNorm() / static_cast<double>(r - k));
  out.O = std::move(tail);
  out.O.noalias() += factors.U * (out.sigma_tail * factors.V.transpose());
  if (flops != nullptr) {
    const auto mn = static_cast<std::uint64_t>(M.rows()) * static_cast<std::uint64_t>(M.cols());
    flops->add(4 * mn + 2ull * static_cast<std::uint64_t>(M.rows()) *
                            static_cast<std::uint64_t>(M.cols()) * static_cast<std::uint64_t>(k));
  }
  return out;
}

SpectraStepInfo spectra_step(Matrix& W, const Eigen::Ref<const Matrix>& G,
                             SpectraState& state, const SpectraConfig& cfg,
                             FlopCounter* flops) {
  if (W.rows() != G.rows() || W.cols() != G.cols() || W.rows() != state.M.rows() ||
      W.cols() != state.M.cols()) {
    std::ostringstream msg;
    msg << "spectra_step: shape mismatch, W " << W.rows() << "x" << W.cols() << ", G "
        << G.rows() << "x" << G.cols() << ", M " << state.M.rows() << "x" << state.M.cols();
    throw std::invalid_argument(msg.str());
  }
  require_finite(G, "spectra_step gradient");
  if (state.k >= std::min(W.rows(), W.cols())) {
    throw std::invalid_argument(
        "spectra_step: k = min(m,n) makes the tail scale undefined; use a smaller rank_ratio");
  }

  state.M = cfg.momentum * state.M + G;

  PowerIterConfig pi;
  pi.k = state.k;
  pi.iters = cfg.power_iters;
  pi.oversample = std::min<Index>(cfg.oversample, std::min(W.rows(), W.cols()) - state.k);
  pi.seed = derive_seed(cfg.seed, "spectra-bootstrap");
  pi.orthonormalize_v = cfg.orthonormalize_v;
  const bool refresh =
      cfg.refresh_interval <= 1 || (state.t % cfg.refresh_interval == 0);

  SpectraStepInfo info;
  const double mnorm = state.M.norm();
  if (mnorm == 0.0 && !state.cache.v_cache.has_value()) {
    // All-zero bootstrap gradient: nothing to track yet, the update is zero.
    info.degenerate = true;
    state.t += 1;
    return info;
  }

  SvdFactors factors = power_iteration_svd(state.M, pi, state.cache, flops, refresh);
  ShapedUpdate shaped = shape_spike(state.M, factors, flops);

  const auto mn = static_cast<double>(W.rows()) * static_cast<double>(W.cols());
  info.rms = shaped.O.norm() / std::sqrt(mn);
  info.eta_eff = cfg.rms_scale * cfg.lr / (info.rms + cfg.epsilon);
  info.sigma_tail = shaped.sigma_tail;
  info.degenerate = factors.degenerate;
  W.noalias() -= info.eta_eff * shaped.O;
  info.update_norm = info.eta_eff * shaped.O.norm();
  if (flops != nullptr) {
    flops->add(static_cast<std::uint64_t>(4.0 * mn));
  }
  state.t += 1;
  return info;
}

void adamw_step(Matrix& W, const Eigen::Ref<const Matrix>& G, AdamWState& state,
                const AdamWConfig& cfg, FlopCounter* flops) {
  if (W.rows() != G.rows() || W.cols() != G.cols() || W.rows() != state.M.rows() ||
      W.cols() != state.M.cols()) {
    std::ostringstream msg;
    msg << "adamw_step: shape mismatch, W " << W.rows() << "x" << W.cols() << ", G "
        << G.rows() << "x" << G.cols();
    throw std::invalid_argument(msg.str());
  }
  require_finite(G, "adamw_step gradient");

  if (cfg.weight_decay != 0.0) {
    W *= (1.0 - cfg.lr * cfg.weight_decay);
  }
  state.t += 1;
  state.M = cfg.beta1 * state.M + (1.0 - cfg.beta1) * G;
  state.V = cfg.beta2 * state.V + (1.0 - cfg.beta2) * G.cwiseProduct(G);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  W.array() -= cfg.lr * (state.M.array() / bc1) /
               ((state.V.array() / bc2).sqrt() + cfg.epsilon);
  if (flops != nullptr) {
    flops->add(12ull * static_cast<std::uint64_t>(W.rows()) *
               static_cast<std::uint64_t>(W.cols()));
  }
}

MuonStepInfo muon_step(Matrix& W, const Eigen::Ref<const Matrix>& G, MuonState& state,
                       const MuonConfig& cfg, FlopCounter* flops) {
  if (W.rows() != G.rows() || W.cols() != G.cols() || W.rows() != state.M.rows() ||
      W.cols() != state.M.cols()) {
    std::ostringstream msg;
    msg << "muon_step: shape mismatch, W " << W.rows() << "x" << W.cols() << ", G "
        << G.rows() << "x" << G.cols();
    throw std::invalid_argument(msg.str());
  }
  require_finite(G, "muon_step gradient");

  state.M = cfg.momentum * state.M + G;
  state.t += 1;
  MuonStepInfo info;
  if (state.M.norm() == 0.0) {
    return info;  // nothing to orthogonalize, no-op
  }
  const Matrix O = newton_schulz(state.M, cfg.ns_steps, flops);
  const auto mn = static_cast<double>(W.rows()) * static_cast<double>(W.cols());
  info.rms = O.norm() / std::sqrt(mn);
  info.eta_eff = cfg.raw_scale ? cfg.lr : cfg.rms_scale * cfg.lr / (info.rms + cfg.epsilon);
  W.noalias() -= info.eta_eff * O;
  info.update_norm = info.eta_eff * O.norm();
  if (flops != nullptr) {
    flops->add(static_cast<std::uint64_t>(4.0 * mn));
  }
  return info;
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "adamw") return OptimizerKind::kAdamW;
  if (name == "muon") return OptimizerKind::kMuon;
  if (name == "spectra") return OptimizerKind::kSpectra;
  throw std::invalid_argument("unknown optimizer kind: " + name);
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kAdamW: return "adamw";
    case OptimizerKind::kMuon: return "muon";
    case OptimizerKind::kSpectra: return "spectra";
  }
  throw std::logic_error("unreachable optimizer kind");
}

std::uint64_t state_memory_scalars(OptimizerKind kind, Index m, Index n, Index k) {
  if (m <= 0 || n <= 0) throw std::invalid_argument("state_memory_scalars: bad dimensions");
  const auto mn = static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(n);
  switch (kind) {
    case OptimizerKind::kAdamW: return 2 * mn;
    case OptimizerKind::kMuon: return mn;
    case OptimizerKind::kSpectra:
      if (k <= 0) throw std::invalid_argument("state_memory_scalars: bad rank");
      return mn + static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(k);
  }
  throw std::logic_error("unreachable optimizer kind");
}

std::uint64_t introspect_state_scalars(const SpectraState& state) {
  std::uint64_t total = static_cast<std::uint64_t>(state.M.size());
  if (state.cache.v_cache.has_value()) {
    total += static_cast<std::uint64_t>(state.cache.v_cache->size());
  }
  return total;
}

std::uint64_t introspect_state_scalars(const AdamWState& state) {
  return static_cast<std::uint64_t>(state.M.size()) + static_cast<std::uint64_t>(state.V.size());
}

std::uint64_t introspect_state_scalars(const MuonState& state) {
  return static_cast<std::uint64_t>(state.M.size());
}

}  // namespace spectra
