#include "spectra/spectral_svd.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace spectra {

namespace {

void check_rank(const Eigen::Ref<const Matrix>& G, Index k, Index oversample) {
  const Index r = std::min(G.rows(), G.cols());
  if (k < 1 || k > r) {
    std::ostringstream msg;
    msg << "rank k=" << k << " out of range for " << G.rows() << "x" << G.cols()
        << " (min dim " << r << ")";
    throw std::invalid_argument(msg.str());
  }
  if (k + oversample > r) {
    std::ostringstream msg;
    msg << "k + oversample = " << (k + oversample) << " exceeds min dim " << r;
    throw std::invalid_argument(msg.str());
  }
}

// Sorts factor columns by singular value, descending; stable for ties.
void sort_descending(SvdFactors& f) {
  const Index k = f.s.size();
  std::vector<Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return f.s(a) > f.s(b); });
  bool sorted = true;
  for (Index i = 0; i < k; ++i) {
    if (order[static_cast<std::size_t>(i)] != i) sorted = false;
  }
  if (sorted) return;
  Matrix U(f.U.rows(), k);
  Matrix V(f.V.rows(), k);
  Vector s(k);
  for (Index i = 0; i < k; ++i) {
    const Index src = order[static_cast<std::size_t>(i)];
    U.col(i) = f.U.col(src);
    V.col(i) = f.V.col(src);
    s(i) = f.s(src);
  }
  f.U = std::move(U);
  f.V = std::move(V);
  f.s = std::move(s);
}

}  // namespace

SvdFactors bootstrap_lowrank_svd(const Eigen::Ref<const Matrix>& G, Index k,
                                 Index oversample, std::uint64_t seed,
                                 FlopCounter* flops) {
  check_rank(G, k, oversample);
  require_finite(G, "bootstrap_lowrank_svd");
  const Index p = k + oversample;

  const Matrix omega = random_gaussian(G.cols(), p, seed);
  Matrix Y = matmul(G, omega, false, false, flops);
  // one power pass: Y <- G (G^T Y)
  Matrix Z = matmul(G, Y, true, false, flops);
  Y = matmul(G, Z, false, false, flops);

  ThinQrResult qr = thin_qr(Y, flops);
  const Matrix B = matmul(qr.Q, G, true, false, flops);  // p x n
  SvdFactors small = exact_svd(B);

  SvdFactors out;
  out.U = matmul(qr.Q, small.U.leftCols(k), false, false, flops);
  out.s = small.s.head(k);
  out.V = small.V.leftCols(k);
  out.degenerate = qr.rank_deficient || out.s(k - 1) <= 1e-14 * G.norm();
  return out;
}

SvdFactors power_iteration_svd(const Eigen::Ref<const Matrix>& G,
                               const PowerIterConfig& cfg, SubspaceCache& cache,
                               FlopCounter* flops, bool refresh_cache) {
  check_rank(G, cfg.k, 0);
  require_finite(G, "power_iteration_svd");
  if (cfg.iters < 1) throw std::invalid_argument("power_iteration_svd: iters must be >= 1");

  if (!cache.v_cache.has_value()) {
    SvdFactors boot = bootstrap_lowrank_svd(G, cfg.k, cfg.oversample, cfg.seed, flops);
    cache.v_cache = boot.V;
    cache.bootstrap_count += 1;
    return boot;
  }
  if (cache.v_cache->rows() != G.cols() || cache.v_cache->cols() != cfg.k) {
    std::ostringstream msg;
    msg << "power_iteration_svd: cache is " << cache.v_cache->rows() << "x"
        << cache.v_cache->cols() << " but expected " << G.cols() << "x" << cfg.k;
    throw std::invalid_argument(msg.str());
  }

  const double scale = G.norm();
  const double dead_tol = 1e-14 * scale;

  Matrix V = *cache.v_cache;
  Matrix U;
  Vector s(cfg.k);
  bool degenerate = false;
  std::uint64_t replacement_counter = 0;

  for (int it = 0; it < cfg.iters; ++it) {
    const Matrix P = matmul(G, V, false, false, flops);
    ThinQrResult qr = thin_qr(P, flops);
    degenerate = degenerate || qr.rank_deficient;
    U = std::move(qr.Q);
    Matrix W = matmul(G, U, true, false, flops);
    std::vector<Index> dead;
    for (Index j = 0; j < cfg.k; ++j) {
      const double nrm = W.col(j).norm();
      if (nrm <= dead_tol) {
        dead.push_back(j);
        s(j) = 0.0;
      } else {
        W.col(j) /= nrm;
        s(j) = nrm;
      }
    }
    // Dead directions: substitute fresh ones, re-orthogonalized against the
    // surviving unit columns, and flag the result.
    for (const Index j : dead) {
      Vector fresh = random_gaussian(
          G.cols(), 1, derive_seed(cfg.seed, "pi-replacement") + replacement_counter++);
      for (int pass = 0; pass < 2; ++pass) {
        for (Index i = 0; i < cfg.k; ++i) {
          if (i != j && s(i) == 0.0 && i > j) continue;  // not yet replaced
          if (i == j) continue;
          fresh.noalias() -= W.col(i).dot(fresh) * W.col(i);
        }
      }
      W.col(j) = fresh.normalized();
      degenerate = true;
    }
    if (flops != nullptr) {
      flops->add(static_cast<std::uint64_t>(3 * G.cols() * cfg.k));
    }
    V = std::move(W);
  }

  if (cfg.orthonormalize_v) {
    ThinQrResult qr = thin_qr(V, flops);
    V = std::move(qr.Q);
  }

  SvdFactors out;
  out.U = std::move(U);
  out.s = std::move(s);
  out.V = std::move(V);
  out.degenerate = degenerate;
  sort_descending(out);

  if (refresh_cache) {
    cache.v_cache = out.V;
    cache.refresh_count += 1;
  }
  return out;
}

double right_factor_orthogonality_gap(const SvdFactors& f) {
  const Index k = f.V.cols();
  return (f.V.transpose() * f.V - Matrix::Identity(k, k)).norm();
}

Matrix newton_schulz(const Eigen::Ref<const Matrix>& G, int steps,
                     FlopCounter* flops, const NsCoefficients& coeffs) {
  require_finite(G, "newton_schulz");
  if (steps < 1) throw std::invalid_argument("newton_schulz: steps must be >= 1");
  const double nrm = G.norm();
  if (nrm == 0.0) {
    throw std::invalid_argument("newton_schulz: zero matrix has no orthogonalization");
  }

  // The guarded prescale keeps the iteration from resurrecting vanishing
  // inputs to unit scale.
  const double scale = nrm + 1e-8;
  // Work with rows <= cols so the Gram matrix is on the smaller side.
  const bool transposed = G.rows() > G.cols();
  Matrix X = transposed ? Matrix(G.transpose() / scale) : Matrix(G / scale);
  const Index m = X.rows();
  const Index n = X.cols();
  if (flops != nullptr) flops->add(static_cast<std::uint64_t>(3 * m * n));

  for (int step = 0; step < steps; ++step) {
    const Matrix A = matmul(X, X, false, true, flops);   // X X^T, m x m
    const Matrix B = matmul(A, X, false, false, flops);  // (X X^T) X
    const Matrix C = matmul(A, B, false, false, flops);  // (X X^T)^2 X
    X = coeffs.a * X + coeffs.b * B + coeffs.c * C;
    if (flops != nullptr) flops->add(static_cast<std::uint64_t>(5 * m * n));
  }
  return transposed ? Matrix(X.transpose()) : X;
}

}  // namespace spectra
