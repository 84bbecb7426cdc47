#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfmlp/curve.hpp"
#include "sfmlp/grid.hpp"
#include "sfmlp/parallel.hpp"
#include "sfmlp/smoothing.hpp"

namespace sfmlp {

// Spectrum of the covariance operator on the grid. Eigenvalues keep the full
// clamped spectrum (non-increasing, >= 0); eigenfunction rows are stored only
// for strictly positive eigenvalues and are orthonormal in the grid's
// weighted inner product. Sign convention: the largest-magnitude entry of
// each row is positive (earliest index on ties).
struct EigenSystem {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenfunctions;  // rows x G
};

namespace fpca_detail {

inline void fix_row_sign(Eigen::MatrixXd& m, Eigen::Index row) {
  Eigen::Index best = 0;
  double best_abs = -1.0;
  for (Eigen::Index g = 0; g < m.cols(); ++g) {
    double a = std::abs(m(row, g));
    if (a > best_abs) {
      best_abs = a;
      best = g;
    }
  }
  if (m(row, best) < 0.0) m.row(row) = -m.row(row);
}

inline void fix_col_sign(Eigen::MatrixXd& m, Eigen::Index col) {
  Eigen::Index best = 0;
  double best_abs = -1.0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double a = std::abs(m(r, col));
    if (a > best_abs) {
      best_abs = a;
      best = r;
    }
  }
  if (m(best, col) < 0.0) m.col(col) = -m.col(col);
}

}  // namespace fpca_detail

// Weighted eigenproblem of the covariance surface: with W = diag(weights),
// eigendecompose W^{1/2} G W^{1/2}; eigenfunctions are W^{-1/2} times the
// eigenvectors. Negative eigenvalues are clamped to zero and their functions
// dropped.
inline EigenSystem eigendecompose(const MomentEstimates& moments,
                                  int max_components) {
  moments.validate();
  auto g = static_cast<Eigen::Index>(moments.grid.size());
  if (max_components < 1 || max_components > g)
    throw std::invalid_argument("eigendecompose: max_components out of range");

  Eigen::VectorXd sqrt_w(g), inv_sqrt_w(g);
  for (Eigen::Index i = 0; i < g; ++i) {
    double w = moments.grid.weights()[static_cast<std::size_t>(i)];
    sqrt_w[i] = std::sqrt(w);
    inv_sqrt_w[i] = 1.0 / sqrt_w[i];
  }
  Eigen::MatrixXd b =
      sqrt_w.asDiagonal() * moments.cov * sqrt_w.asDiagonal();
  b = 0.5 * (b + b.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(b);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eigendecompose: eigensolver failed");

  EigenSystem sys;
  sys.eigenvalues.resize(g);
  for (Eigen::Index p = 0; p < g; ++p)
    sys.eigenvalues[p] = std::max(0.0, solver.eigenvalues()[g - 1 - p]);

  Eigen::Index keep = 0;
  for (Eigen::Index p = 0; p < std::min<Eigen::Index>(max_components, g); ++p)
    if (solver.eigenvalues()[g - 1 - p] > 0.0) ++keep;

  sys.eigenfunctions.resize(keep, g);
  for (Eigen::Index p = 0; p < keep; ++p) {
    sys.eigenfunctions.row(p) =
        (inv_sqrt_w.asDiagonal() * solver.eigenvectors().col(g - 1 - p))
            .transpose();
    fpca_detail::fix_row_sign(sys.eigenfunctions, p);
  }
  return sys;
}

// Smallest P whose cumulative eigenvalue share reaches the cutoff.
inline int select_components(const Eigen::VectorXd& eigenvalues, double cutoff) {
  if (!(cutoff > 0.0 && cutoff < 1.0))
    throw std::invalid_argument("select_components: cutoff must be in (0, 1)");
  if (eigenvalues.size() == 0)
    throw std::invalid_argument("select_components: empty spectrum");
  for (Eigen::Index p = 0; p < eigenvalues.size(); ++p) {
    if (eigenvalues[p] < 0.0)
      throw std::invalid_argument("select_components: negative eigenvalue");
    if (p > 0 && eigenvalues[p] > eigenvalues[p - 1] * (1.0 + 1e-12) + 1e-300)
      throw std::invalid_argument("select_components: spectrum not sorted");
  }
  double total = eigenvalues.sum();
  if (total <= 0.0)
    throw std::runtime_error("select_components: all-zero spectrum (no signal)");
  double cum = 0.0;
  for (Eigen::Index p = 0; p < eigenvalues.size(); ++p) {
    cum += eigenvalues[p];
    if (cum / total >= cutoff) return static_cast<int>(p) + 1;
  }
  return static_cast<int>(eigenvalues.size());
}

// Fitted FPCA components of one feature. Scores are kept uncentered
// (eta = <X, phi>), so gamma = <phi, mean> is their prior mean and curve
// reconstruction does not re-add the mean.
struct FpcaModel {
  int feature_id = 0;
  TimeGrid grid;
  Eigen::VectorXd mean;
  EigenSystem eig;  // eigenfunction rows trimmed to the truncation order
  double noise_var = 0.0;
  int truncation = 0;  // P
  Eigen::VectorXd gamma;
  double bandwidth_mean = 0.0;
  double bandwidth_cov = 0.0;
};

// Conditional scores E[eta | Z]: the best linear unbiased predictor given the
// curve's sparse observations. Solved as an SPD system, never an inverse; a
// ridge of 1e-10 * lambda_1 is added when the noise variance is tiny.
inline Eigen::VectorXd pace_scores(const SparseCurve& curve,
                                   const FpcaModel& model) {
  if (curve.size() == 0)
    throw std::invalid_argument("pace_scores: empty curve");
  int p_trunc = model.truncation;
  if (p_trunc < 1 || p_trunc > model.eig.eigenfunctions.rows())
    throw std::invalid_argument("pace_scores: invalid truncation order");

  auto m = static_cast<Eigen::Index>(curve.size());
  std::span<const double> mean_span(model.mean.data(),
                                    static_cast<std::size_t>(model.mean.size()));
  std::vector<Eigen::VectorXd> rows(static_cast<std::size_t>(p_trunc));
  for (int p = 0; p < p_trunc; ++p)
    rows[static_cast<std::size_t>(p)] = model.eig.eigenfunctions.row(p);
  Eigen::VectorXd centered(m);
  Eigen::MatrixXd phi(m, p_trunc);
  for (Eigen::Index j = 0; j < m; ++j) {
    double t = curve.times[static_cast<std::size_t>(j)];
    centered[j] = curve.values[static_cast<std::size_t>(j)] -
                  model.grid.interpolate(mean_span, t);
    for (int p = 0; p < p_trunc; ++p) {
      const auto& row = rows[static_cast<std::size_t>(p)];
      phi(j, p) = model.grid.interpolate(
          std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), t);
    }
  }
  Eigen::VectorXd lambda = model.eig.eigenvalues.head(p_trunc);
  double sigma2 = model.noise_var;
  double lambda1 = model.eig.eigenvalues[0];
  if (sigma2 < 1e-10 * lambda1) sigma2 += 1e-10 * lambda1;

  Eigen::MatrixXd a = phi * lambda.asDiagonal() * phi.transpose();
  a.diagonal().array() += sigma2;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  Eigen::VectorXd x;
  if (llt.info() == Eigen::Success) {
    x = llt.solve(centered);
  } else {
    x = a.ldlt().solve(centered);
  }
  return model.gamma + lambda.asDiagonal() * (phi.transpose() * x);
}

// Truncated expansion on the grid: sum_p score_p * phi_p. With uncentered
// scores the mean is already carried by the scores via gamma.
inline Eigen::VectorXd reconstruct(const Eigen::VectorXd& scores,
                                   const FpcaModel& model) {
  if (scores.size() != model.truncation)
    throw std::invalid_argument("reconstruct: score length != truncation order");
  return model.eig.eigenfunctions.topRows(model.truncation).transpose() * scores;
}

struct ScoreMatrix {
  std::vector<std::string> subject_ids;
  Eigen::MatrixXd scores;  // N x P
};

struct FpcaOptions {
  double bandwidth_mean = 0.0;  // <= 0: cross-validated
  double bandwidth_cov = 0.0;   // <= 0: cross-validated
  double fve_cutoff = 0.80;
  int fixed_components = 0;  // > 0 overrides the FVE rule
  int max_components = 0;    // 0: grid size
};

struct FpcaFit {
  FpcaModel model;
  ScoreMatrix scores;
  MomentEstimates moments;
};

// Full univariate chain: moments -> eigendecomposition -> truncation ->
// conditional scores for every input curve.
inline FpcaFit fit_fpca(const std::vector<const SparseCurve*>& curves,
                        const TimeGrid& grid, const FpcaOptions& opts = {}) {
  if (curves.size() < 2)
    throw std::invalid_argument("fit_fpca: need at least 2 curves");
  FpcaFit fit;
  fit.moments =
      estimate_moments(curves, grid, opts.bandwidth_mean, opts.bandwidth_cov);

  int max_components = opts.max_components > 0
                           ? std::min<int>(opts.max_components,
                                           static_cast<int>(grid.size()))
                           : static_cast<int>(grid.size());
  EigenSystem sys = eigendecompose(fit.moments, max_components);

  int p_trunc;
  if (opts.fixed_components > 0) {
    if (opts.fixed_components > sys.eigenfunctions.rows())
      throw std::runtime_error(
          "fit_fpca: fixed component count exceeds positive spectrum (" +
          std::to_string(sys.eigenfunctions.rows()) + " available)");
    p_trunc = opts.fixed_components;
  } else {
    p_trunc = select_components(sys.eigenvalues, opts.fve_cutoff);
    p_trunc = std::min<int>(p_trunc, static_cast<int>(sys.eigenfunctions.rows()));
    if (p_trunc < 1)
      throw std::runtime_error("fit_fpca: no positive eigencomponents");
  }

  FpcaModel& model = fit.model;
  model.feature_id = curves.front()->feature_id;
  model.grid = grid;
  model.mean = fit.moments.mean;
  model.noise_var = fit.moments.noise_var;
  model.bandwidth_mean = fit.moments.bandwidth_mean;
  model.bandwidth_cov = fit.moments.bandwidth_cov;
  model.truncation = p_trunc;
  model.eig.eigenvalues = sys.eigenvalues;
  model.eig.eigenfunctions = sys.eigenfunctions.topRows(p_trunc);
  model.gamma.resize(p_trunc);
  std::span<const double> mean_span(model.mean.data(),
                                    static_cast<std::size_t>(model.mean.size()));
  for (int p = 0; p < p_trunc; ++p) {
    const Eigen::VectorXd row = model.eig.eigenfunctions.row(p);
    model.gamma[p] = grid.inner(
        std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
        mean_span);
  }

  fit.scores.subject_ids.resize(curves.size());
  fit.scores.scores.resize(static_cast<Eigen::Index>(curves.size()), p_trunc);
  parallel_for(curves.size(), [&](std::size_t i) {
    fit.scores.subject_ids[i] = curves[i]->subject_id;
    fit.scores.scores.row(static_cast<Eigen::Index>(i)) =
        pace_scores(*curves[i], model).transpose();
  });
  return fit;
}

}  // namespace sfmlp
