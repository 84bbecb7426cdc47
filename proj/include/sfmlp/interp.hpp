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

namespace sfmlp {

// Natural cubic spline through the curve's points, evaluated on the grid.
// Constant extrapolation outside the observed span keeps the large gaps that
// motivate per-subject interpolation from blowing up. A single observation
// degrades to a constant function (warning recorded when requested).
inline Eigen::VectorXd spline_interp(const SparseCurve& curve,
                                     const TimeGrid& grid,
                                     std::string* warning = nullptr) {
  std::size_t m = curve.size();
  if (m == 0) throw std::invalid_argument("spline_interp: empty curve");
  Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
  if (m == 1) {
    if (warning)
      *warning = "spline_interp: single observation for subject " +
                 curve.subject_id + "; returning a constant";
    out.setConstant(curve.values[0]);
    return out;
  }

  const auto& t = curve.times;
  const auto& z = curve.values;
  // Second derivatives with natural boundary conditions (Thomas algorithm).
  std::vector<double> m2(m, 0.0);
  if (m > 2) {
    std::size_t n = m - 2;
    std::vector<double> diag(n), upper(n), rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
      double h0 = t[i + 1] - t[i];
      double h1 = t[i + 2] - t[i + 1];
      diag[i] = 2.0 * (h0 + h1);
      upper[i] = h1;
      rhs[i] = 6.0 * ((z[i + 2] - z[i + 1]) / h1 - (z[i + 1] - z[i]) / h0);
    }
    for (std::size_t i = 1; i < n; ++i) {
      double lower = t[i + 1] - t[i];  // sub-diagonal equals previous upper
      double w = lower / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    m2[n] = rhs[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;)
      m2[i + 1] = (rhs[i] - upper[i] * m2[i + 2]) / diag[i];
  }

  for (std::size_t g = 0; g < grid.size(); ++g) {
    double x = grid.points()[g];
    double v;
    if (x <= t.front()) {
      v = z.front();
    } else if (x >= t.back()) {
      v = z.back();
    } else {
      auto it = std::upper_bound(t.begin(), t.end(), x);
      std::size_t i = static_cast<std::size_t>(it - t.begin()) - 1;
      double h = t[i + 1] - t[i];
      double a = (t[i + 1] - x) / h;
      double b = (x - t[i]) / h;
      v = a * z[i] + b * z[i + 1] +
          ((a * a * a - a) * m2[i] + (b * b * b - b) * m2[i + 1]) * h * h / 6.0;
    }
    out[static_cast<Eigen::Index>(g)] = v;
  }
  return out;
}

// Squared-exponential GP posterior mean. Hyperparameters are either fixed or
// grid-searched per curve by closed-form leave-one-out predictive error.
struct GpConfig {
  double length_scale = 0.2;
  double signal_var = 1.0;
  double noise_var = 0.01;
  bool grid_search = true;
};

namespace gp_detail {

inline Eigen::MatrixXd kernel_matrix(const std::vector<double>& t, double ls,
                                     double sv) {
  auto m = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd k(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      double d = (t[static_cast<std::size_t>(i)] - t[static_cast<std::size_t>(j)]) / ls;
      k(i, j) = sv * std::exp(-0.5 * d * d);
    }
  return k;
}

// LLT with escalating jitter; throws if the kernel never becomes PD.
inline Eigen::LLT<Eigen::MatrixXd> jittered_llt(Eigen::MatrixXd k, double sv) {
  double jitter = std::max(1e-10, 1e-10 * sv);
  for (int attempt = 0; attempt < 9; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() == Eigen::Success) return llt;
    k.diagonal().array() += jitter;
    jitter *= 10.0;
  }
  throw std::runtime_error("gp_interp: kernel matrix not positive definite");
}

// Closed-form LOO squared error: residual_i = alpha_i / inv(K)_ii.
inline double loo_error(const std::vector<double>& t,
                        const Eigen::VectorXd& y_centered, double ls, double sv,
                        double nv) {
  Eigen::MatrixXd k = kernel_matrix(t, ls, sv);
  k.diagonal().array() += nv;
  auto llt = jittered_llt(std::move(k), sv);
  Eigen::VectorXd alpha = llt.solve(y_centered);
  Eigen::MatrixXd kinv =
      llt.solve(Eigen::MatrixXd::Identity(y_centered.size(), y_centered.size()));
  double err = 0.0;
  for (Eigen::Index i = 0; i < y_centered.size(); ++i) {
    double r = alpha[i] / kinv(i, i);
    err += r * r;
  }
  return err;
}

}  // namespace gp_detail

inline Eigen::VectorXd gp_interp(const SparseCurve& curve, const TimeGrid& grid,
                                 const GpConfig& config = {}) {
  std::size_t m = curve.size();
  if (m == 0) throw std::invalid_argument("gp_interp: empty curve");
  if (!(config.length_scale > 0.0) || !(config.signal_var > 0.0) ||
      config.noise_var < 0.0)
    throw std::invalid_argument("gp_interp: invalid hyperparameters");

  double mean = 0.0;
  for (double z : curve.values) mean += z;
  mean /= static_cast<double>(m);
  Eigen::VectorXd y(static_cast<Eigen::Index>(m));
  for (std::size_t j = 0; j < m; ++j)
    y[static_cast<Eigen::Index>(j)] = curve.values[j] - mean;

  double ls = config.length_scale, sv = config.signal_var, nv = config.noise_var;
  if (config.grid_search && m >= 3) {
    double var = y.squaredNorm() / static_cast<double>(m);
    if (var <= 0.0) var = 1e-12;
    double width = grid.width();
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 5; ++a) {
      double cls = 0.05 * width * std::pow(10.0, a / 4.0);  // up to 0.5 width
      for (int b = 0; b < 5; ++b) {
        double csv = 0.2 * var * std::pow(10.0, b / 2.0);  // 0.2 .. 20 x var
        for (double frac : {1e-4, 1e-2, 1e-1}) {
          double cnv = frac * var;
          double err = gp_detail::loo_error(curve.times, y, cls, csv, cnv);
          if (err < best) {
            best = err;
            ls = cls;
            sv = csv;
            nv = cnv;
          }
        }
      }
    }
  }

  Eigen::MatrixXd k = gp_detail::kernel_matrix(curve.times, ls, sv);
  k.diagonal().array() += nv;
  auto llt = gp_detail::jittered_llt(std::move(k), sv);
  Eigen::VectorXd alpha = llt.solve(y);

  Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
  double lo = curve.times.front(), hi = curve.times.back();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double x = std::clamp(grid.points()[g], lo, hi);  // constant extrapolation
    double v = mean;
    for (std::size_t j = 0; j < m; ++j) {
      double d = (x - curve.times[j]) / ls;
      v += sv * std::exp(-0.5 * d * d) * alpha[static_cast<Eigen::Index>(j)];
    }
    out[static_cast<Eigen::Index>(g)] = v;
  }
  return out;
}

// Average over subjects of the per-subject discrete RMSE on the grid.
inline double interp_rmse(const std::vector<Eigen::VectorXd>& estimates,
                          const std::vector<Eigen::VectorXd>& truths) {
  if (estimates.size() != truths.size() || estimates.empty())
    throw std::invalid_argument("interp_rmse: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (estimates[i].size() != truths[i].size())
      throw std::invalid_argument("interp_rmse: grid length mismatch");
    double mse = (estimates[i] - truths[i]).squaredNorm() /
                 static_cast<double>(estimates[i].size());
    total += std::sqrt(mse);
  }
  return total / static_cast<double>(estimates.size());
}

}  // namespace sfmlp
