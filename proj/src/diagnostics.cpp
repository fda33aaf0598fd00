#include "spectra/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace spectra {

SpectrumReport spectrum_report(const Eigen::Ref<const Matrix>& G, double spike_ratio) {
  if (G.norm() == 0.0) {
    throw std::invalid_argument("spectrum_report: zero matrix has no spectrum profile");
  }
  if (spike_ratio <= 0.0 || spike_ratio > 1.0) {
    throw std::invalid_argument("spectrum_report: spike_ratio must lie in (0, 1]");
  }
  const SvdFactors f = exact_svd(G);
  const Index r = f.s.size();

  SpectrumReport rep;
  rep.sigmas = f.s;
  rep.cdf = Vector(r);
  const double total = f.s.squaredNorm();
  double acc = 0.0;
  for (Index i = 0; i < r; ++i) {
    acc += f.s(i) * f.s(i);
    rep.cdf(i) = acc / total;
  }
  rep.spike_count = std::max<Index>(
      1, static_cast<Index>(std::nearbyint(spike_ratio * static_cast<double>(r))));
  rep.spike_count = std::min(rep.spike_count, r);
  if (rep.spike_count < r && f.s(rep.spike_count) > 0.0) {
    rep.gap_ratio = f.s(rep.spike_count - 1) / f.s(rep.spike_count);
  } else {
    rep.gap_ratio = std::numeric_limits<double>::infinity();
  }
  return rep;
}

Index detect_spike_by_log_gap(const Vector& sigmas) {
  Index best = 1;
  double best_gap = -1.0;
  for (Index i = 0; i + 1 < sigmas.size(); ++i) {
    if (sigmas(i + 1) <= 0.0) break;
    const double gap = std::log(sigmas(i)) - std::log(sigmas(i + 1));
    if (gap > best_gap) {
      best_gap = gap;
      best = i + 1;
    }
  }
  return best;
}

SpikeTailSplit spike_tail_split(const Eigen::Ref<const Matrix>& M, Index k) {
  const Index r = std::min(M.rows(), M.cols());
  if (k < 1 || k >= r) {
    std::ostringstream msg;
    msg << "spike_tail_split: k=" << k << " out of range [1, " << r << ")";
    throw std::invalid_argument(msg.str());
  }
  const SvdFactors f = exact_svd(M);
  SpikeTailSplit out;
  out.spike = f.U.leftCols(k) * f.s.head(k).asDiagonal() * f.V.leftCols(k).transpose();
  out.tail = M - out.spike;
  return out;
}

TailSuppressionSamples tail_suppression_from_parts(const Eigen::Ref<const Matrix>& M_t,
                                                   const Eigen::Ref<const Matrix>& V_s,
                                                   const Eigen::Ref<const Matrix>& V_t,
                                                   double epsilon) {
  if (M_t.rows() != V_s.rows() || M_t.cols() != V_s.cols() || M_t.rows() != V_t.rows() ||
      M_t.cols() != V_t.cols()) {
    throw std::invalid_argument("tail_suppression: piece shapes disagree");
  }
  TailSuppressionSamples out;
  out.full_normalized.reserve(static_cast<std::size_t>(M_t.size()));
  out.tail_only.reserve(static_cast<std::size_t>(M_t.size()));
  for (Index j = 0; j < M_t.cols(); ++j) {
    for (Index i = 0; i < M_t.rows(); ++i) {
      const double mt = M_t(i, j);
      double v_full = V_s(i, j) + V_t(i, j);
      double v_tail = V_t(i, j);
      for (double* v : {&v_full, &v_tail}) {
        if (*v < 0.0) {
          if (*v < -1e-12) out.negative_flagged = true;
          *v = 0.0;
          out.clamped_entries += 1;
        }
      }
      out.full_normalized.push_back(std::abs(mt) / (std::sqrt(v_full) + epsilon));
      out.tail_only.push_back(std::abs(mt) / (std::sqrt(v_tail) + epsilon));
    }
  }
  return out;
}

TailSuppressionSamples tail_suppression(const Eigen::Ref<const Matrix>& M,
                                        const Eigen::Ref<const Matrix>& V, Index k,
                                        double epsilon) {
  if (M.rows() != V.rows() || M.cols() != V.cols()) {
    throw std::invalid_argument("tail_suppression: M and V shapes disagree");
  }
  if ((V.array() < 0.0).any()) {
    throw std::invalid_argument("tail_suppression: V must be elementwise nonnegative");
  }
  const SpikeTailSplit m_split = spike_tail_split(M, k);
  const SpikeTailSplit v_split = spike_tail_split(V, k);
  return tail_suppression_from_parts(m_split.tail, v_split.spike, v_split.tail, epsilon);
}

RelVarReport relvar(const Eigen::Ref<const Matrix>& reference,
                    const std::vector<Matrix>& samples, Index micro_batch_size) {
  if (samples.size() < 2) {
    throw std::invalid_argument("relvar: needs at least 2 samples");
  }
  if (reference.norm() == 0.0) {
    throw std::invalid_argument("relvar: zero reference gradient");
  }
  for (const Matrix& g : samples) {
    if (g.rows() != reference.rows() || g.cols() != reference.cols()) {
      throw std::invalid_argument("relvar: sample shape disagrees with reference");
    }
  }
  const SvdFactors f = exact_svd(reference);
  const Index r = f.s.size();
  const auto n = static_cast<double>(samples.size());

  RelVarReport rep;
  rep.sample_count = samples.size();
  rep.micro_batch_size = micro_batch_size;
  for (Index dir = 0; dir < r; ++dir) {
    if (f.s(dir) <= 0.0) {
      rep.excluded.push_back(dir + 1);
      continue;
    }
    double mean = 0.0;
    std::vector<double> a;
    a.reserve(samples.size());
    for (const Matrix& g : samples) {
      const double proj = f.U.col(dir).dot(g * f.V.col(dir));
      a.push_back(proj);
      mean += proj;
    }
    mean /= n;
    double var = 0.0;
    for (const double v : a) var += (v - mean) * (v - mean);
    var /= (n - 1.0);

    rep.direction.push_back(dir + 1);
    rep.sigma.push_back(f.s(dir));
    rep.var_a.push_back(var);
    rep.relvar.push_back(var / (f.s(dir) * f.s(dir)));
  }
  return rep;
}

AlignmentReport ns_alignment(const Eigen::Ref<const Matrix>& G, int ns_steps,
                             const NsCoefficients& coeffs) {
  if (G.norm() == 0.0) {
    throw std::invalid_argument("ns_alignment: zero matrix");
  }
  const SvdFactors before = exact_svd(G);
  const Matrix ns = newton_schulz(G, ns_steps, nullptr, coeffs);
  const SvdFactors after = exact_svd(ns);

  const Index r = before.V.cols();
  AlignmentReport rep;
  rep.sigmas = before.s;
  rep.align = Vector(r);
  const Matrix overlaps = (before.V.transpose() * after.V).cwiseAbs();
  for (Index i = 0; i < r; ++i) {
    rep.align(i) = overlaps.row(i).maxCoeff();
  }
  return rep;
}

namespace {

void require_orthonormal(const Eigen::Ref<const Matrix>& V, const char* who) {
  const Index k = V.cols();
  const double gap = (V.transpose() * V - Matrix::Identity(k, k)).norm();
  if (gap > 1e-6) {
    std::ostringstream msg;
    msg << who << ": factor columns are not orthonormal (deviation " << gap << ")";
    throw std::invalid_argument(msg.str());
  }
}

Vector canonical_correlations(const Eigen::Ref<const Matrix>& V_a,
                              const Eigen::Ref<const Matrix>& V_b, const char* who) {
  if (V_a.rows() != V_b.rows()) {
    throw std::invalid_argument(std::string(who) + ": ambient dimensions disagree");
  }
  require_orthonormal(V_a, who);
  require_orthonormal(V_b, who);
  const Matrix overlap = V_a.transpose() * V_b;
  Eigen::BDCSVD<Matrix> svd(overlap);
  Vector c = svd.singularValues();
  for (Index i = 0; i < c.size(); ++i) c(i) = std::clamp(c(i), 0.0, 1.0);
  return c;
}

}  // namespace

double subspace_similarity(const Eigen::Ref<const Matrix>& V_a,
                           const Eigen::Ref<const Matrix>& V_b) {
  return canonical_correlations(V_a, V_b, "subspace_similarity")(0);
}

double mean_canonical_correlation(const Eigen::Ref<const Matrix>& V_a,
                                  const Eigen::Ref<const Matrix>& V_b) {
  const Vector c = canonical_correlations(V_a, V_b, "mean_canonical_correlation");
  return c.mean();
}

double principal_angle(const Eigen::Ref<const Matrix>& V_a,
                       const Eigen::Ref<const Matrix>& V_b) {
  const Vector c = canonical_correlations(V_a, V_b, "principal_angle");
  return std::acos(std::clamp(c(c.size() - 1), 0.0, 1.0));
}

namespace {

std::vector<double> ranks_of(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // mean rank for ties
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = mid;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_rank_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("spearman_rank_correlation: needs paired samples");
  }
  const std::vector<double> rx = ranks_of(x);
  const std::vector<double> ry = ranks_of(y);
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double fitted_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("fitted_slope: needs paired samples");
  }
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("fitted_slope: x has no variance");
  return sxy / sxx;
}

}  // namespace spectra
