#include "spectra/optimizers.hpp"

#include <doctest.h>

#include <cmath>

using namespace spectra;

namespace {

Matrix orthogonal_complement_noise(const Vector& u, const Vector& v, std::uint64_t seed) {
  const Matrix R = random_gaussian(u.size(), v.size(), seed);
  const Matrix Pu = Matrix::Identity(u.size(), u.size()) - u * u.transpose();
  const Matrix Pv = Matrix::Identity(v.size(), v.size()) - v * v.transpose();
  return Pu * R * Pv;
}

}  // namespace

TEST_CASE("spike rank uses round-half-to-even and rejects full rank") {
  SpectraConfig cfg;
  cfg.rank_ratio = 0.015;
  CHECK(make_spectra_state(4096, 14336, cfg).k == 61);  // 61.44 rounds down
  cfg.rank_ratio = 0.5;
  CHECK(make_spectra_state(16, 10, cfg).k == 5);
  cfg.rank_ratio = 1.0;
  CHECK_THROWS_WITH_AS(make_spectra_state(8, 8, cfg), doctest::Contains("rank_ratio"),
                       std::invalid_argument);
}

TEST_CASE("spectra zero gradient on a fresh state is a fixed point") {
  SpectraConfig cfg;
  cfg.rank_ratio = 0.1;
  SpectraState st = make_spectra_state(10, 10, cfg);
  Matrix W = random_gaussian(10, 10, 3);
  const Matrix W0 = W;
  const SpectraStepInfo info = spectra_step(W, Matrix::Zero(10, 10), st, cfg);
  CHECK((W - W0).norm() == 0.0);
  CHECK(st.M.norm() == 0.0);
  CHECK(info.degenerate);
}

TEST_CASE("spectra shaping with exact rank-1 factors") {
  const Index m = 12, n = 10;
  Vector u = random_gaussian(m, 1, 5);
  Vector v = random_gaussian(n, 1, 6);
  u.normalize();
  v.normalize();
  const Matrix tail = orthogonal_complement_noise(u, v, 7);
  const Matrix G = 7.0 * u * v.transpose() + tail;

  SpectraConfig cfg;
  cfg.momentum = 0.0;
  cfg.rank_ratio = 0.05;  // k = max(1, round(0.5)) = 1
  cfg.power_iters = 1;
  SpectraState st = make_spectra_state(m, n, cfg);
  REQUIRE(st.k == 1);
  st.cache.v_cache = v;  // exact warm start makes the tracked factors exact

  Matrix W = Matrix::Zero(m, n);
  const SpectraStepInfo info = spectra_step(W, G, st, cfg);

  const double expected_sigma_tail = tail.norm() / std::sqrt(static_cast<double>(n - 1));
  CHECK(info.sigma_tail == doctest::Approx(expected_sigma_tail).epsilon(1e-10));

  // O = tail + sigma_tail u v^T, so W = -eta_eff * O and O - tail is rank one
  const Matrix O = -W / info.eta_eff;
  const SvdFactors f = exact_svd(O - tail);
  CHECK(f.s(0) == doctest::Approx(expected_sigma_tail).epsilon(1e-8));
  CHECK(f.s(1) <= 1e-8 * O.norm());
}

TEST_CASE("spectra applied step norm is RMS-calibrated") {
  SpectraConfig cfg;
  cfg.lr = 0.01;
  cfg.rank_ratio = 0.1;
  cfg.seed = 3;
  const Index m = 24, n = 18;
  SpectraState st = make_spectra_state(m, n, cfg);
  Matrix W = Matrix::Zero(m, n);
  NormalSampler rng(11);
  for (int step = 0; step < 5; ++step) {
    Matrix G(m, n);
    rng.fill(G);
    const Matrix before = W;
    const SpectraStepInfo info = spectra_step(W, G, st, cfg);
    const double mn = static_cast<double>(m * n);
    const double expected =
        cfg.rms_scale * cfg.lr * std::sqrt(mn) * info.rms / (info.rms + cfg.epsilon);
    CHECK((W - before).norm() == doctest::Approx(expected).epsilon(1e-12));
    // ratio to the nominal step stays inside [1 - eps/(rms+eps), 1]
    const double ratio = (W - before).norm() / (cfg.rms_scale * cfg.lr * std::sqrt(mn));
    CHECK(ratio <= 1.0 + 1e-12);
    CHECK(ratio >= 1.0 - cfg.epsilon / (info.rms + cfg.epsilon) - 1e-12);
  }
}

TEST_CASE("spectra shaped update flattens the spike to the tail scale") {
  // planted factors fed through the shaping path directly
  const Index m = 20, n = 16, k = 3;
  const Matrix U = thin_qr(random_gaussian(m, k, 21)).Q;
  const Matrix V = thin_qr(random_gaussian(n, k, 22)).Q;
  Vector s(k);
  s << 50.0, 30.0, 20.0;
  Matrix tail = random_gaussian(m, n, 23);
  tail = (Matrix::Identity(m, m) - U * U.transpose()) * tail *
         (Matrix::Identity(n, n) - V * V.transpose());
  const Matrix M = U * s.asDiagonal() * V.transpose() + tail;

  SvdFactors factors;
  factors.U = U;
  factors.s = s;
  factors.V = V;
  const ShapedUpdate shaped = shape_spike(M, factors);

  CHECK(shaped.sigma_tail ==
        doctest::Approx(tail.norm() / std::sqrt(static_cast<double>(n - k))).epsilon(1e-12));
  const SvdFactors low = exact_svd(shaped.O - tail);
  for (Index i = 0; i < k; ++i) {
    CHECK(low.s(i) == doctest::Approx(shaped.sigma_tail).epsilon(1e-6));
  }
  CHECK(low.s(k) <= 1e-8 * shaped.O.norm());
}

TEST_CASE("spectra refresh interval freezes the cache between refreshes") {
  SpectraConfig cfg;
  cfg.rank_ratio = 0.1;
  cfg.refresh_interval = 3;
  cfg.seed = 9;
  SpectraState st = make_spectra_state(16, 12, cfg);
  Matrix W = Matrix::Zero(16, 12);
  NormalSampler rng(13);
  Matrix G(16, 12);
  rng.fill(G);
  spectra_step(W, G, st, cfg);  // t=0: bootstrap
  CHECK(st.cache.bootstrap_count == 1);
  rng.fill(G);
  spectra_step(W, G, st, cfg);  // t=1: no refresh
  rng.fill(G);
  spectra_step(W, G, st, cfg);  // t=2: no refresh
  CHECK(st.cache.refresh_count == 0);
  rng.fill(G);
  spectra_step(W, G, st, cfg);  // t=3: refresh
  CHECK(st.cache.refresh_count == 1);
}

TEST_CASE("adamw zero gradient step is exactly the decay shrink") {
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  AdamWState st = make_adamw_state(4, 4);
  Matrix W = random_gaussian(4, 4, 17);
  const Matrix W0 = W;
  adamw_step(W, Matrix::Zero(4, 4), st, cfg);
  CHECK((W - W0 * (1.0 - cfg.lr * cfg.weight_decay)).norm() == 0.0);
}

TEST_CASE("adamw with zero betas approaches the sign step") {
  AdamWConfig cfg;
  cfg.lr = 0.05;
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.0;
  cfg.epsilon = 1e-8;
  AdamWState st = make_adamw_state(3, 3);
  Matrix W = Matrix::Zero(3, 3);
  Matrix G(3, 3);
  G << 2, -3, 4, -5, 6, -7, 8, -9, 10;  // |g| >> eps
  adamw_step(W, G, st, cfg);
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 3; ++j) {
      CHECK(W(i, j) == doctest::Approx(-cfg.lr * (G(i, j) > 0 ? 1.0 : -1.0)).epsilon(1e-7));
    }
  }
}

TEST_CASE("adamw matches the scalar recurrence for three steps") {
  AdamWConfig cfg;
  cfg.lr = 0.01;
  cfg.beta1 = 0.9;
  cfg.beta2 = 0.999;
  cfg.epsilon = 1e-8;
  cfg.weight_decay = 0.02;
  AdamWState st = make_adamw_state(1, 1);
  Matrix W = Matrix::Constant(1, 1, 0.7);
  const double grads[3] = {0.3, -0.5, 0.2};

  // independent scalar oracle
  double w = 0.7, mo = 0.0, vo = 0.0;
  for (int t = 1; t <= 3; ++t) {
    const double g = grads[t - 1];
    w *= (1.0 - cfg.lr * cfg.weight_decay);
    mo = cfg.beta1 * mo + (1.0 - cfg.beta1) * g;
    vo = cfg.beta2 * vo + (1.0 - cfg.beta2) * g * g;
    const double mh = mo / (1.0 - std::pow(cfg.beta1, t));
    const double vh = vo / (1.0 - std::pow(cfg.beta2, t));
    w -= cfg.lr * mh / (std::sqrt(vh) + cfg.epsilon);

    adamw_step(W, Matrix::Constant(1, 1, g), st, cfg);
    CHECK(W(0, 0) == doctest::Approx(w).epsilon(1e-12));
  }
}

TEST_CASE("adamw rejects non-finite gradients") {
  AdamWConfig cfg;
  AdamWState st = make_adamw_state(2, 2);
  Matrix W = Matrix::Zero(2, 2);
  Matrix G = Matrix::Zero(2, 2);
  G(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(adamw_step(W, G, st, cfg), std::invalid_argument);
}

TEST_CASE("muon step is orthogonalized and RMS-matched") {
  MuonConfig cfg;
  cfg.lr = 0.02;
  cfg.momentum = 0.0;
  const Index m = 16, n = 12;
  MuonState st = make_muon_state(m, n);
  Matrix W = Matrix::Zero(m, n);
  const Matrix G = random_gaussian(m, n, 31);
  const MuonStepInfo info = muon_step(W, G, st, cfg);
  const Matrix step_dir = -W / info.eta_eff;
  const SvdFactors f = exact_svd(step_dir);
  for (Index i = 0; i < f.s.size(); ++i) CHECK(std::abs(f.s(i) - 1.0) < 0.35);
  const double mn = static_cast<double>(m * n);
  CHECK(info.eta_eff ==
        doctest::Approx(cfg.rms_scale * cfg.lr / (info.rms + cfg.epsilon)).epsilon(1e-12));
  CHECK((W.norm()) == doctest::Approx(info.eta_eff * step_dir.norm()).epsilon(1e-10));
  CHECK(info.rms == doctest::Approx(step_dir.norm() / std::sqrt(mn)).epsilon(1e-10));
}

TEST_CASE("muon equalizes a badly conditioned momentum") {
  const Index n = 10;
  const Matrix Ub = thin_qr(random_gaussian(n, 2, 41)).Q;
  const Matrix Vb = thin_qr(random_gaussian(n, 2, 42)).Q;
  Vector s(2);
  s << 100.0, 1.0;  // sigma1/sigma2 = 100
  const Matrix G = Ub * s.asDiagonal() * Vb.transpose();
  MuonConfig cfg;
  cfg.momentum = 0.0;
  MuonState st = make_muon_state(n, n);
  Matrix W = Matrix::Zero(n, n);
  muon_step(W, G, st, cfg);
  const SvdFactors f = exact_svd(W);
  CHECK(f.s(0) / f.s(1) <= 2.0);
}

TEST_CASE("muon zero momentum and zero gradient is a no-op") {
  MuonConfig cfg;
  MuonState st = make_muon_state(4, 4);
  Matrix W = random_gaussian(4, 4, 51);
  const Matrix W0 = W;
  const MuonStepInfo info = muon_step(W, Matrix::Zero(4, 4), st, cfg);
  CHECK((W - W0).norm() == 0.0);
  CHECK(info.update_norm == 0.0);
}

TEST_CASE("muon step norm decays once momentum falls under the scale floor") {
  MuonConfig cfg;
  cfg.lr = 0.01;
  cfg.momentum = 0.0;
  const Matrix dir = random_gaussian(6, 6, 61);
  double prev_norm = std::numeric_limits<double>::infinity();
  // scale-invariant region first, then the eps floor bites and steps shrink
  for (const double c : {1.0, 1e-12, 1e-20, 1e-24}) {
    MuonState st = make_muon_state(6, 6);
    Matrix W = Matrix::Zero(6, 6);
    muon_step(W, c * dir, st, cfg);
    const double norm = W.norm();
    CHECK(norm <= prev_norm * (1.0 + 1e-9));
    prev_norm = norm;
  }
  CHECK(prev_norm < 1e-3);
}

TEST_CASE("state memory accounting matches the published budgets") {
  CHECK(state_memory_scalars(OptimizerKind::kAdamW, 4, 6, 0) == 48);
  CHECK(state_memory_scalars(OptimizerKind::kMuon, 4, 6, 0) == 24);
  CHECK(state_memory_scalars(OptimizerKind::kSpectra, 4096, 14336, 61) ==
        4096ull * 14336ull + 14336ull * 61ull);
  CHECK(state_memory_scalars(OptimizerKind::kMuon, 123, 77, 0) == 123ull * 77ull);
}

TEST_CASE("allocated state matches the accounting once the tracker is live") {
  const Index m = 24, n = 30;
  SpectraConfig cfg;
  cfg.rank_ratio = 0.1;  // k = 2 (round to even)
  SpectraState sp = make_spectra_state(m, n, cfg);
  Matrix W = Matrix::Zero(m, n);
  spectra_step(W, random_gaussian(m, n, 71), sp, cfg);
  CHECK(introspect_state_scalars(sp) ==
        state_memory_scalars(OptimizerKind::kSpectra, m, n, sp.k));

  AdamWState ad = make_adamw_state(m, n);
  CHECK(introspect_state_scalars(ad) == state_memory_scalars(OptimizerKind::kAdamW, m, n, 0));
  MuonState mu = make_muon_state(m, n);
  CHECK(introspect_state_scalars(mu) == state_memory_scalars(OptimizerKind::kMuon, m, n, 0));
}
