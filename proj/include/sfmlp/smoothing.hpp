#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfmlp/curve.hpp"
#include "sfmlp/grid.hpp"
#include "sfmlp/parallel.hpp"

namespace sfmlp {

// Pooled mean, covariance surface and noise variance of one feature,
// estimated by local-linear Gaussian-kernel smoothing.
struct MomentEstimates {
  TimeGrid grid;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  double noise_var = 0.0;
  double bandwidth_mean = 0.0;
  double bandwidth_cov = 0.0;
  std::vector<std::string> warnings;

  void validate() const {
    auto g = static_cast<Eigen::Index>(grid.size());
    if (mean.size() != g || cov.rows() != g || cov.cols() != g)
      throw std::invalid_argument("MomentEstimates: dimension mismatch");
    if (!mean.allFinite())
      throw std::runtime_error("MomentEstimates: non-finite mean");
    if (!cov.allFinite())
      throw std::runtime_error("MomentEstimates: non-finite covariance");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw std::runtime_error("MomentEstimates: covariance not symmetric");
    if (noise_var < 0.0)
      throw std::runtime_error("MomentEstimates: negative noise variance");
  }
};

namespace smooth_detail {

struct Point1 {
  double t, z;
  bool operator<(const Point1& o) const {
    return t < o.t || (t == o.t && z < o.z);
  }
};

struct Point2 {
  double s, t, c;
  bool operator<(const Point2& o) const {
    if (s != o.s) return s < o.s;
    if (t != o.t) return t < o.t;
    return c < o.c;
  }
};

inline constexpr double kKernelCutoff = 8.0;  // |u| beyond this contributes ~0

// Local-linear fit of z on (t - x) at x; points sorted by t. NaN if the
// kernel window is empty. Regressors are scaled by h, which leaves the
// intercept unchanged but keeps the normal equations well-conditioned.
inline double loclin1(const std::vector<Point1>& pts, double x, double h) {
  double lo = x - kKernelCutoff * h, hi = x + kKernelCutoff * h;
  auto first = std::lower_bound(pts.begin(), pts.end(), lo,
                                [](const Point1& p, double v) { return p.t < v; });
  double s0 = 0, s1 = 0, s2 = 0, q0 = 0, q1 = 0;
  for (auto it = first; it != pts.end() && it->t <= hi; ++it) {
    double u = (it->t - x) / h;
    double w = std::exp(-0.5 * u * u);
    s0 += w;
    s1 += w * u;
    s2 += w * u * u;
    q0 += w * it->z;
    q1 += w * u * it->z;
  }
  if (s0 <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  double denom = s0 * s2 - s1 * s1;
  if (denom <= 1e-10 * s0 * s2) return q0 / s0;  // degenerate: kernel average
  return (s2 * q0 - s1 * q1) / denom;
}

// Local-linear plane fit of c on (s - x, t - y) at (x, y); points sorted by s.
inline double loclin2(const std::vector<Point2>& pts, double x, double y,
                      double h) {
  double lo = x - kKernelCutoff * h, hi = x + kKernelCutoff * h;
  auto first = std::lower_bound(pts.begin(), pts.end(), lo,
                                [](const Point2& p, double v) { return p.s < v; });
  double s00 = 0, s10 = 0, s01 = 0, s20 = 0, s11 = 0, s02 = 0;
  double q0 = 0, q1 = 0, q2 = 0;
  for (auto it = first; it != pts.end() && it->s <= hi; ++it) {
    double ut = (it->t - y) / h;
    if (ut > kKernelCutoff || ut < -kKernelCutoff) continue;
    double us = (it->s - x) / h;
    double w = std::exp(-0.5 * (us * us + ut * ut));
    s00 += w;
    s10 += w * us;
    s01 += w * ut;
    s20 += w * us * us;
    s11 += w * us * ut;
    s02 += w * ut * ut;
    q0 += w * it->c;
    q1 += w * us * it->c;
    q2 += w * ut * it->c;
  }
  if (s00 <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  double det = s00 * (s20 * s02 - s11 * s11) - s10 * (s10 * s02 - s11 * s01) +
               s01 * (s10 * s11 - s20 * s01);
  if (det <= 1e-12 * s00 * s00 * s00) return q0 / s00;
  double det_a = q0 * (s20 * s02 - s11 * s11) - s10 * (q1 * s02 - q2 * s11) +
                 s01 * (q1 * s11 - q2 * s20);
  return det_a / det;
}

inline std::vector<double> bandwidth_ladder(const TimeGrid& grid, int count = 10) {
  double lo = 2.0 * grid.spacing();
  double hi = grid.width() / 2.0;
  if (lo >= hi) return {hi};
  std::vector<double> ladder(static_cast<std::size_t>(count));
  double ratio = hi / lo;
  for (int k = 0; k < count; ++k)
    ladder[static_cast<std::size_t>(k)] =
        lo * std::pow(ratio, static_cast<double>(k) / (count - 1));
  return ladder;
}

// 5-fold CV over the pooled cloud; folds stride the sorted points so the
// choice is independent of input order.
inline double cv_bandwidth_1d(const std::vector<Point1>& sorted_pts,
                              const TimeGrid& grid) {
  constexpr int kFolds = 5;
  auto ladder = bandwidth_ladder(grid);
  std::vector<std::vector<Point1>> train(kFolds);
  std::vector<std::vector<Point1>> held(kFolds);
  for (std::size_t i = 0; i < sorted_pts.size(); ++i) {
    auto f = static_cast<int>(i % kFolds);
    held[static_cast<std::size_t>(f)].push_back(sorted_pts[i]);
    for (int g = 0; g < kFolds; ++g)
      if (g != f) train[static_cast<std::size_t>(g)].push_back(sorted_pts[i]);
  }
  std::vector<double> errors(ladder.size(), 0.0);
  parallel_for(ladder.size(), [&](std::size_t k) {
    double h = ladder[k];
    double err = 0.0;
    for (int f = 0; f < kFolds; ++f) {
      const auto& tr = train[static_cast<std::size_t>(f)];
      if (tr.empty()) continue;
      double fallback = 0.0;
      for (const auto& p : tr) fallback += p.z;
      fallback /= static_cast<double>(tr.size());
      for (const auto& p : held[static_cast<std::size_t>(f)]) {
        double fit = loclin1(tr, p.t, h);
        if (!std::isfinite(fit)) fit = fallback;
        err += (p.z - fit) * (p.z - fit);
      }
    }
    errors[k] = err;
  });
  std::size_t best = 0;
  for (std::size_t k = 1; k < ladder.size(); ++k)
    if (errors[k] < errors[best]) best = k;
  return ladder[best];
}

inline double cv_bandwidth_2d(const std::vector<Point2>& sorted_pts,
                              const TimeGrid& grid,
                              std::size_t max_points = 4000) {
  constexpr int kFolds = 5;
  auto ladder = bandwidth_ladder(grid);
  std::vector<Point2> sample;
  if (sorted_pts.size() > max_points) {
    std::size_t stride = (sorted_pts.size() + max_points - 1) / max_points;
    for (std::size_t i = 0; i < sorted_pts.size(); i += stride)
      sample.push_back(sorted_pts[i]);
  } else {
    sample = sorted_pts;
  }
  // The chosen bandwidth is rescaled below by the kernel-regression rate
  // n^(-1/6) to account for the full point cloud being denser than the
  // cross-validated subsample.
  double density_adjust =
      std::pow(static_cast<double>(sample.size()) /
                   static_cast<double>(sorted_pts.size()),
               1.0 / 6.0);
  std::vector<std::vector<Point2>> train(kFolds);
  std::vector<std::vector<Point2>> held(kFolds);
  for (std::size_t i = 0; i < sample.size(); ++i) {
    auto f = static_cast<int>(i % kFolds);
    held[static_cast<std::size_t>(f)].push_back(sample[i]);
    for (int g = 0; g < kFolds; ++g)
      if (g != f) train[static_cast<std::size_t>(g)].push_back(sample[i]);
  }
  std::vector<double> errors(ladder.size(), 0.0);
  parallel_for(ladder.size(), [&](std::size_t k) {
    double h = ladder[k];
    double err = 0.0;
    for (int f = 0; f < kFolds; ++f) {
      const auto& tr = train[static_cast<std::size_t>(f)];
      if (tr.empty()) continue;
      double fallback = 0.0;
      for (const auto& p : tr) fallback += p.c;
      fallback /= static_cast<double>(tr.size());
      for (const auto& p : held[static_cast<std::size_t>(f)]) {
        double fit = loclin2(tr, p.s, p.t, h);
        if (!std::isfinite(fit)) fit = fallback;
        err += (p.c - fit) * (p.c - fit);
      }
    }
    errors[k] = err;
  });
  std::size_t best = 0;
  for (std::size_t k = 1; k < ladder.size(); ++k)
    if (errors[k] < errors[best]) best = k;
  return std::max(ladder.front(), ladder[best] * density_adjust);
}

inline std::vector<Point1> pool_points(
    const std::vector<const SparseCurve*>& curves) {
  std::vector<Point1> pts;
  for (const SparseCurve* c : curves)
    for (std::size_t j = 0; j < c->size(); ++j)
      pts.push_back({c->times[j], c->values[j]});
  std::sort(pts.begin(), pts.end());
  return pts;
}

// Off-diagonal raw residual products (both orderings), sorted.
inline std::vector<Point2> residual_pairs(
    const std::vector<const SparseCurve*>& curves, const Eigen::VectorXd& mean,
    const TimeGrid& grid) {
  std::span<const double> mean_span(mean.data(),
                                    static_cast<std::size_t>(mean.size()));
  std::vector<Point2> pairs;
  for (const SparseCurve* c : curves) {
    std::size_t m = c->size();
    if (m < 2) continue;
    std::vector<double> resid(m);
    for (std::size_t j = 0; j < m; ++j)
      resid[j] = c->values[j] - grid.interpolate(mean_span, c->times[j]);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t l = 0; l < m; ++l)
        if (j != l)
          pairs.push_back({c->times[j], c->times[l], resid[j] * resid[l]});
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

// Covariance diagonal by a rotated local fit: linear along the diagonal,
// quadratic across it, evaluated on the diagonal. Matching the curvature
// across the diagonal keeps the smoothing bias of this estimate aligned with
// the bias of the 1-D diagonal smoother, which is what makes the noise
// variance (their difference) nearly bias-free.
inline double loclin_diag(const std::vector<Point2>& pts, double t, double h) {
  double lo = t - kKernelCutoff * h, hi = t + kKernelCutoff * h;
  auto first = std::lower_bound(pts.begin(), pts.end(), lo,
                                [](const Point2& p, double v) { return p.s < v; });
  double s00 = 0, s1 = 0, s2 = 0, s11 = 0, s12 = 0, s22 = 0;
  double q0 = 0, q1 = 0, q2 = 0;
  for (auto it = first; it != pts.end() && it->s <= hi; ++it) {
    double ut = (it->t - t) / h;
    if (ut > kKernelCutoff || ut < -kKernelCutoff) continue;
    double us = (it->s - t) / h;
    double w = std::exp(-0.5 * (us * us + ut * ut));
    double x1 = 0.5 * (us + ut);      // along-diagonal offset
    double x2 = (us - ut) * (us - ut);  // squared cross-diagonal offset
    s00 += w;
    s1 += w * x1;
    s2 += w * x2;
    s11 += w * x1 * x1;
    s12 += w * x1 * x2;
    s22 += w * x2 * x2;
    q0 += w * it->c;
    q1 += w * x1 * it->c;
    q2 += w * x2 * it->c;
  }
  if (s00 <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  double det = s00 * (s11 * s22 - s12 * s12) - s1 * (s1 * s22 - s12 * s2) +
               s2 * (s1 * s12 - s11 * s2);
  if (det <= 1e-12 * s00 * s00 * s00) {
    double denom = s00 * s11 - s1 * s1;
    if (denom <= 1e-10 * s00 * s11) return q0 / s00;
    return (s11 * q0 - s1 * q1) / denom;  // drop the quadratic term
  }
  double det_a = q0 * (s11 * s22 - s12 * s12) - s1 * (q1 * s22 - q2 * s12) +
                 s2 * (q1 * s12 - q2 * s11);
  return det_a / det;
}

}  // namespace smooth_detail

inline std::vector<double> bandwidth_ladder(const TimeGrid& grid,
                                            int count = 10) {
  return smooth_detail::bandwidth_ladder(grid, count);
}

struct MeanFit {
  Eigen::VectorXd values;
  double bandwidth = 0.0;
  std::vector<std::string> warnings;
};

// Local-linear mean estimate on the grid from the pooled observations of one
// feature. bandwidth <= 0 selects by 5-fold cross-validation; the chosen
// bandwidth is doubled (up to the domain width) while any grid point sees
// fewer than 3 points within 2 bandwidths.
inline MeanFit estimate_mean(const std::vector<const SparseCurve*>& curves,
                             const TimeGrid& grid, double bandwidth = 0.0) {
  using namespace smooth_detail;
  auto pts = pool_points(curves);
  if (pts.size() < 5)
    throw std::invalid_argument("estimate_mean: need at least 5 pooled points");
  MeanFit fit;
  double h = bandwidth;
  if (h <= 0.0) {
    if (bandwidth < 0.0)
      throw std::invalid_argument("estimate_mean: bandwidth must be positive");
    h = cv_bandwidth_1d(pts, grid);
  }

  const auto& gp = grid.points();
  auto local_count = [&](double x, double hh) {
    auto lo = std::lower_bound(pts.begin(), pts.end(), x - 2.0 * hh,
                               [](const Point1& p, double v) { return p.t < v; });
    std::size_t n = 0;
    for (auto it = lo; it != pts.end() && it->t <= x + 2.0 * hh; ++it) ++n;
    return n;
  };
  for (;;) {
    std::size_t min_count = pts.size();
    for (double x : gp) min_count = std::min(min_count, local_count(x, h));
    if (min_count >= 3 || h >= grid.width()) break;
    h = std::min(2.0 * h, grid.width());
    fit.warnings.push_back("estimate_mean: bandwidth doubled to " +
                           std::to_string(h) +
                           " (thin kernel mass at some grid point)");
  }

  fit.bandwidth = h;
  fit.values.resize(static_cast<Eigen::Index>(grid.size()));
  parallel_for(grid.size(), [&](std::size_t g) {
    double v = loclin1(pts, gp[g], h);
    if (!std::isfinite(v)) v = loclin1(pts, gp[g], grid.width());
    fit.values[static_cast<Eigen::Index>(g)] = v;
  });
  if (!fit.values.allFinite())
    throw std::runtime_error("estimate_mean: non-finite fit");
  return fit;
}

struct CovFit {
  Eigen::MatrixXd surface;
  double bandwidth = 0.0;
};

// Covariance surface from off-diagonal raw residual products, smoothed by a
// 2-D local-linear fit with a product Gaussian kernel and symmetrized. The
// diagonal raw products are excluded: they carry the noise variance.
inline CovFit estimate_covariance(const std::vector<const SparseCurve*>& curves,
                                  const Eigen::VectorXd& mean,
                                  const TimeGrid& grid, double bandwidth = 0.0) {
  using namespace smooth_detail;
  auto pairs = residual_pairs(curves, mean, grid);
  if (pairs.empty())
    throw std::runtime_error(
        "estimate_covariance: no off-diagonal pairs (need a curve with >= 2 "
        "points)");

  double h = bandwidth;
  if (h <= 0.0) {
    if (bandwidth < 0.0)
      throw std::invalid_argument(
          "estimate_covariance: bandwidth must be positive");
    h = cv_bandwidth_2d(pairs, grid);
  }

  std::size_t g = grid.size();
  const auto& gp = grid.points();
  Eigen::MatrixXd a(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(g));
  // Upper triangle suffices: swapping the two pair coordinates maps the pair
  // set onto itself, so the smoothed surface is symmetric up to summation
  // order.
  parallel_for(g, [&](std::size_t r) {
    for (std::size_t q = r; q < g; ++q) {
      double v = loclin2(pairs, gp[r], gp[q], h);
      if (!std::isfinite(v)) v = loclin2(pairs, gp[r], gp[q], grid.width());
      a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) = v;
      a(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(r)) = v;
    }
  });
  if (!a.allFinite())
    throw std::runtime_error("estimate_covariance: non-finite fit");
  Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  return {std::move(sym), h};
}

// Noise variance: smooth the diagonal raw squared residuals to V(t), subtract
// a rotated local-quadratic fit of the covariance diagonal at the same
// bandwidth, and average over the middle half of the domain. Floored at
// 1e-8 * max(V) so the result stays positive. The surface in `cov` is the
// smoothed covariance the caller estimated; its diagonal is re-fit here with
// the rotated smoother because the plain surface diagonal carries an O(h^2)
// cross-curvature bias that would leak into the noise estimate.
inline double estimate_noise_var(const std::vector<const SparseCurve*>& curves,
                                 const Eigen::VectorXd& mean,
                                 const Eigen::MatrixXd& cov,
                                 const TimeGrid& grid, double bandwidth = 0.0) {
  using namespace smooth_detail;
  if (cov.rows() != static_cast<Eigen::Index>(grid.size()) ||
      cov.cols() != cov.rows())
    throw std::invalid_argument("estimate_noise_var: covariance shape");
  std::span<const double> mean_span(mean.data(),
                                    static_cast<std::size_t>(mean.size()));
  std::vector<Point1> diag;
  for (const SparseCurve* c : curves)
    for (std::size_t j = 0; j < c->size(); ++j) {
      double r = c->values[j] - grid.interpolate(mean_span, c->times[j]);
      diag.push_back({c->times[j], r * r});
    }
  if (diag.empty())
    throw std::invalid_argument("estimate_noise_var: no observations");
  std::sort(diag.begin(), diag.end());
  auto pairs = residual_pairs(curves, mean, grid);
  if (pairs.empty())
    throw std::runtime_error(
        "estimate_noise_var: no off-diagonal pairs (need a curve with >= 2 "
        "points)");

  double h = bandwidth;
  if (h <= 0.0) {
    if (bandwidth < 0.0)
      throw std::invalid_argument(
          "estimate_noise_var: bandwidth must be positive");
    // Small default: the bias of the V - G difference grows as h^2 while the
    // middle-half average keeps its variance in check.
    h = std::max(2.0 * grid.spacing(), grid.width() / 20.0);
  }
  auto local_count = [&](double x, double hh) {
    auto lo = std::lower_bound(diag.begin(), diag.end(), x - 2.0 * hh,
                               [](const Point1& p, double v) { return p.t < v; });
    std::size_t n = 0;
    for (auto it = lo; it != diag.end() && it->t <= x + 2.0 * hh; ++it) ++n;
    return n;
  };
  for (;;) {
    std::size_t min_count = diag.size();
    for (double x : grid.points()) min_count = std::min(min_count, local_count(x, h));
    if (min_count >= 3 || h >= grid.width()) break;
    h = std::min(2.0 * h, grid.width());
  }

  std::size_t g = grid.size();
  std::vector<double> integrand(g);
  double vmax = 0.0;
  for (std::size_t i = 0; i < g; ++i) {
    double x = grid.points()[i];
    double v = loclin1(diag, x, h);
    if (!std::isfinite(v)) v = loclin1(diag, x, grid.width());
    double d = loclin_diag(pairs, x, h);
    if (!std::isfinite(d)) d = loclin_diag(pairs, x, grid.width());
    vmax = std::max(vmax, v);
    integrand[i] = v - d;
  }
  double quarter = grid.width() / 4.0;
  double integral =
      grid.integrate(integrand, grid.t0() + quarter, grid.t1() - quarter);
  double floor = 1e-8 * std::max(vmax, 0.0);
  return std::max(floor, 2.0 / grid.width() * integral);
}

// Full moment chain used by the FPCA fit.
inline MomentEstimates estimate_moments(
    const std::vector<const SparseCurve*>& curves, const TimeGrid& grid,
    double bandwidth_mean = 0.0, double bandwidth_cov = 0.0) {
  MomentEstimates m;
  m.grid = grid;
  auto mean_fit = estimate_mean(curves, grid, bandwidth_mean);
  m.mean = std::move(mean_fit.values);
  m.bandwidth_mean = mean_fit.bandwidth;
  m.warnings = std::move(mean_fit.warnings);
  auto cov_fit = estimate_covariance(curves, m.mean, grid, bandwidth_cov);
  m.cov = std::move(cov_fit.surface);
  m.bandwidth_cov = cov_fit.bandwidth;
  m.noise_var = estimate_noise_var(curves, m.mean, m.cov, grid);
  m.validate();
  return m;
}

}  // namespace sfmlp
