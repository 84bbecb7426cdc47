#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "sfmlp/fpca.hpp"
#include "sfmlp/simgen.hpp"

using namespace sfmlp;

namespace {

// Analytic moment set: cov = sum_p lambda_p phi_p(s) phi_p(t) with
// phi_p = sqrt(2) sin(p pi t), plus a mean inside the span.
MomentEstimates analytic_moments(const TimeGrid& grid,
                                 const Eigen::VectorXd& lambdas,
                                 const Eigen::VectorXd& mean_coeffs,
                                 double noise_var) {
  auto g = static_cast<Eigen::Index>(grid.size());
  MomentEstimates m;
  m.grid = grid;
  m.mean = Eigen::VectorXd::Zero(g);
  m.cov = Eigen::MatrixXd::Zero(g, g);
  Eigen::MatrixXd phi(lambdas.size(), g);
  for (Eigen::Index p = 0; p < lambdas.size(); ++p)
    for (Eigen::Index i = 0; i < g; ++i)
      phi(p, i) = kl_eigenfunction(static_cast<int>(p),
                                   grid.points()[static_cast<std::size_t>(i)]);
  for (Eigen::Index p = 0; p < lambdas.size(); ++p) {
    m.cov += lambdas[p] * phi.row(p).transpose() * phi.row(p);
    if (p < mean_coeffs.size()) m.mean += mean_coeffs[p] * phi.row(p).transpose();
  }
  m.cov = 0.5 * (m.cov + m.cov.transpose()).eval();
  m.noise_var = noise_var;
  return m;
}

double weighted_l2(const TimeGrid& grid, const Eigen::VectorXd& a,
                   const Eigen::VectorXd& b) {
  Eigen::VectorXd d = a - b;
  return std::sqrt(grid.inner(
      std::span<const double>(d.data(), static_cast<std::size_t>(d.size())),
      std::span<const double>(d.data(), static_cast<std::size_t>(d.size()))));
}

}  // namespace

TEST_CASE("eigendecomposition recovers an analytic spectrum", "[fpca]") {
  TimeGrid grid(0, 1, 101);
  Eigen::VectorXd lambdas(4);
  lambdas << 0.1, 0.045, 0.01, 0.001;
  auto m = analytic_moments(grid, lambdas, Eigen::VectorXd(), 0.0);
  auto sys = eigendecompose(m, 10);

  for (Eigen::Index p = 0; p < 4; ++p)
    REQUIRE(std::abs(sys.eigenvalues[p] - lambdas[p]) <= 0.02 * lambdas[p]);
  for (Eigen::Index p = 4; p < 10; ++p)
    REQUIRE(sys.eigenvalues[p] <= 1e-10);

  // eigenfunctions aligned to the analytic ones within discrete L2
  for (int p = 0; p < 4; ++p) {
    Eigen::VectorXd truth(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i)
      truth[static_cast<Eigen::Index>(i)] = kl_eigenfunction(p, grid.points()[i]);
    Eigen::VectorXd est = sys.eigenfunctions.row(p);
    double err = std::min(weighted_l2(grid, est, truth),
                          weighted_l2(grid, est, (-truth).eval()));
    REQUIRE(err <= 0.05);
  }
}

TEST_CASE("eigenfunctions are orthonormal in the weighted inner product",
          "[fpca]") {
  TimeGrid grid(0, 1, 101);
  Eigen::VectorXd lambdas(4);
  lambdas << 0.1, 0.045, 0.01, 0.001;
  auto m = analytic_moments(grid, lambdas, Eigen::VectorXd(), 0.0);
  auto sys = eigendecompose(m, 6);
  for (Eigen::Index p = 0; p < sys.eigenfunctions.rows(); ++p)
    for (Eigen::Index q = 0; q < sys.eigenfunctions.rows(); ++q) {
      Eigen::VectorXd a = sys.eigenfunctions.row(p);
      Eigen::VectorXd b = sys.eigenfunctions.row(q);
      double ip = grid.inner(
          std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
          std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
      REQUIRE(std::abs(ip - (p == q ? 1.0 : 0.0)) <= 1e-10);
    }
}

TEST_CASE("zero covariance yields zero eigenvalues and no functions", "[fpca]") {
  TimeGrid grid(0, 1, 21);
  MomentEstimates m;
  m.grid = grid;
  m.mean = Eigen::VectorXd::Zero(21);
  m.cov = Eigen::MatrixXd::Zero(21, 21);
  m.noise_var = 0.0;
  auto sys = eigendecompose(m, 5);
  REQUIRE(sys.eigenvalues.maxCoeff() == 0.0);
  REQUIRE(sys.eigenfunctions.rows() == 0);
  REQUIRE_THROWS_AS(select_components(sys.eigenvalues, 0.8),
                    std::runtime_error);
}

TEST_CASE("non-finite covariance is rejected", "[fpca]") {
  TimeGrid grid(0, 1, 11);
  MomentEstimates m;
  m.grid = grid;
  m.mean = Eigen::VectorXd::Zero(11);
  m.cov = Eigen::MatrixXd::Zero(11, 11);
  m.cov(3, 3) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(eigendecompose(m, 5), std::runtime_error);
}

TEST_CASE("FVE selection on the benchmark spectrum", "[fpca]") {
  Eigen::VectorXd ev(4);
  ev << 0.1, 0.045, 0.01, 0.001;
  // cumulative fractions 0.641, 0.929, 0.994, 1.0
  REQUIRE(select_components(ev, 0.80) == 2);
  REQUIRE(select_components(ev, 0.99) == 3);
  Eigen::VectorXd one(1);
  one << 1.0;
  REQUIRE(select_components(one, 0.5) == 1);
  REQUIRE(select_components(one, 0.999999) == 1);
  REQUIRE_THROWS_AS(select_components(ev, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(select_components(ev, 1.0), std::invalid_argument);
}

TEST_CASE("PACE scores match the quadrature projection oracle", "[fpca]") {
  TimeGrid grid(0, 1, 101);
  Eigen::VectorXd lambdas(4);
  lambdas << 0.1, 0.045, 0.01, 0.001;
  Eigen::VectorXd mean_coeffs(4);
  mean_coeffs << 0.0, 0.0, 0.0, 1.0 / std::sqrt(2.0);  // sin(4 pi t)
  auto m = analytic_moments(grid, lambdas, mean_coeffs, 0.0);
  auto sys = eigendecompose(m, 4);

  FpcaModel model;
  model.grid = grid;
  model.mean = m.mean;
  model.eig = sys;
  model.truncation = 4;
  model.noise_var = 0.0;  // pace adds the ridge floor itself
  model.gamma.resize(4);
  for (int p = 0; p < 4; ++p) {
    Eigen::VectorXd row = sys.eigenfunctions.row(p);
    model.gamma[p] = grid.inner(
        std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
        std::span<const double>(m.mean.data(), static_cast<std::size_t>(m.mean.size())));
  }

  // dense on-grid noiseless curve inside the span
  Eigen::VectorXd coeffs(4);
  coeffs << 0.9, -0.4, 0.2, 0.05;
  Eigen::VectorXd curve_values =
      m.mean + sys.eigenfunctions.transpose() * coeffs;
  SparseCurve curve{"dense", 0, grid.points(), {}};
  curve.values.assign(curve_values.data(), curve_values.data() + curve_values.size());

  Eigen::VectorXd scores = pace_scores(curve, model);
  for (int p = 0; p < 4; ++p) {
    Eigen::VectorXd row = sys.eigenfunctions.row(p);
    double oracle = grid.inner(
        std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
        std::span<const double>(curve_values.data(),
                                static_cast<std::size_t>(curve_values.size())));
    REQUIRE(std::abs(scores[p] - oracle) <= 1e-3);
  }

  SECTION("reconstruction returns the curve for projection scores") {
    Eigen::VectorXd proj(4);
    for (int p = 0; p < 4; ++p) {
      Eigen::VectorXd row = sys.eigenfunctions.row(p);
      proj[p] = grid.inner(
          std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
          std::span<const double>(curve_values.data(),
                                  static_cast<std::size_t>(curve_values.size())));
    }
    Eigen::VectorXd rec = reconstruct(proj, model);
    REQUIRE((rec - curve_values).cwiseAbs().maxCoeff() <= 1e-6);
  }

  SECTION("reconstruction error from PACE is small and non-increasing in P") {
    double prev = 1e300;
    for (int p_use = 1; p_use <= 4; ++p_use) {
      FpcaModel sub = model;
      sub.truncation = p_use;
      sub.eig.eigenfunctions = sys.eigenfunctions.topRows(p_use);
      sub.gamma = model.gamma.head(p_use);
      Eigen::VectorXd s = pace_scores(curve, sub);
      double err = weighted_l2(grid, reconstruct(s, sub), curve_values);
      REQUIRE(err <= prev + 1e-12);
      prev = err;
    }
    REQUIRE(prev <= 1e-3);  // full-rank in-span reconstruction
  }

  SECTION("single observation matches the scalar formula") {
    SparseCurve single{"one", 0, {0.37}, {1.3}};
    Eigen::VectorXd s = pace_scores(single, model);
    double mu = grid.interpolate(
        std::span<const double>(m.mean.data(), static_cast<std::size_t>(m.mean.size())),
        0.37);
    double denom = 0.0;
    double sigma2 = 1e-10 * sys.eigenvalues[0];  // ridge floor
    for (int q = 0; q < 4; ++q) {
      Eigen::VectorXd row = sys.eigenfunctions.row(q);
      double phi_q = grid.interpolate(
          std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
          0.37);
      denom += sys.eigenvalues[q] * phi_q * phi_q;
    }
    denom += sigma2;
    for (int p = 0; p < 4; ++p) {
      Eigen::VectorXd row = sys.eigenfunctions.row(p);
      double phi_p = grid.interpolate(
          std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
          0.37);
      double expected =
          model.gamma[p] + sys.eigenvalues[p] * phi_p * (1.3 - mu) / denom;
      REQUIRE(s[p] == Catch::Approx(expected).margin(1e-10));
    }
  }

  SECTION("huge noise variance shrinks scores to gamma") {
    FpcaModel noisy = model;
    noisy.noise_var = 1e12;
    SparseCurve sparse{"s", 0, {0.2, 0.5, 0.8}, {1.0, -1.0, 0.5}};
    Eigen::VectorXd s = pace_scores(sparse, noisy);
    for (int p = 0; p < 4; ++p)
      REQUIRE(s[p] == Catch::Approx(model.gamma[p]).margin(1e-9));
  }

  SECTION("scores are affine in the observations on shared timestamps") {
    SparseCurve z1{"z1", 0, {0.1, 0.4, 0.75}, {1.0, 0.2, -0.3}};
    SparseCurve z2{"z2", 0, {0.1, 0.4, 0.75}, {-0.5, 0.9, 0.4}};
    double alpha = 0.3;
    SparseCurve mix = z1;
    for (std::size_t j = 0; j < 3; ++j)
      mix.values[j] = alpha * z1.values[j] + (1 - alpha) * z2.values[j];
    Eigen::VectorXd s1 = pace_scores(z1, model);
    Eigen::VectorXd s2 = pace_scores(z2, model);
    Eigen::VectorXd sm = pace_scores(mix, model);
    Eigen::VectorXd expect = alpha * s1 + (1 - alpha) * s2;
    REQUIRE((sm - expect).cwiseAbs().maxCoeff() <= 1e-10);
  }

  SECTION("timestamps outside the domain are a hard error") {
    SparseCurve bad{"bad", 0, {1.5}, {0.0}};
    REQUIRE_THROWS_AS(pace_scores(bad, model), std::out_of_range);
  }

  SECTION("reconstruct validates the score length") {
    Eigen::VectorXd wrong(3);
    wrong << 1, 2, 3;
    REQUIRE_THROWS_AS(reconstruct(wrong, model), std::invalid_argument);
  }

  SECTION("gamma scores reconstruct the mean's span projection") {
    Eigen::VectorXd rec = reconstruct(model.gamma, model);
    // mean lies in the span here, so the projection is the mean itself
    REQUIRE((rec - m.mean).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("fitted pipeline picks P = 2 on the benchmark data", "[fpca][mc]") {
  TimeGrid grid(0, 1, 101);
  int hits = 0;
  constexpr int kRuns = 12;
  for (int run = 0; run < kRuns; ++run) {
    KlConfig cfg;
    cfg.groups = {{1.0, 4.0, 0.0}};
    cfg.eigenvalues.resize(4);
    cfg.eigenvalues << 0.1, 0.045, 0.01, 0.001;
    cfg.noise_sd = 0.3;
    cfg.n_per_group = 300;
    cfg.points_per_curve = 10;
    cfg.seed = 4242 + static_cast<std::uint64_t>(run);
    cfg.task = Task::kRegression;
    auto sim = generate(cfg, grid);
    auto fit = fit_fpca(sim.dataset.feature_curves(0), grid);
    if (fit.model.truncation == 2) ++hits;
  }
  // eigenvalues (0.1, 0.045, ...) put FVE at 0.929 for P = 2 under the 80% cutoff
  REQUIRE(hits >= static_cast<int>(0.95 * kRuns));
}

TEST_CASE("identical curves make the spectrum degenerate", "[fpca]") {
  TimeGrid grid(0, 1, 51);
  // identical affine curves: the mean fit reproduces them exactly, so the
  // residual spectrum collapses (an exactly-zero spectrum errors out in
  // select_components, covered above)
  SparseCurve a{"a", 0, {0.1, 0.3, 0.5, 0.7, 0.9}, {}};
  for (double t : a.times) a.values.push_back(2.0 * t + 1.0);
  SparseCurve b = a;
  b.subject_id = "b";
  try {
    auto fit = fit_fpca({&a, &b}, grid);
    REQUIRE(fit.model.eig.eigenvalues[0] <= 1e-12);
  } catch (const std::runtime_error& e) {
    REQUIRE(std::string(e.what()).find("zero") != std::string::npos);
  }
}

TEST_CASE("fixed component count overrides the FVE rule", "[fpca]") {
  TimeGrid grid(0, 1, 101);
  KlConfig cfg;
  cfg.groups = {{1.0, 4.0, 0.0}};
  cfg.eigenvalues.resize(4);
  cfg.eigenvalues << 0.1, 0.045, 0.01, 0.001;
  cfg.noise_sd = 0.3;
  cfg.n_per_group = 150;
  cfg.points_per_curve = 10;
  cfg.seed = 17;
  cfg.task = Task::kRegression;
  auto sim = generate(cfg, grid);
  FpcaOptions opts;
  opts.fixed_components = 3;
  auto fit = fit_fpca(sim.dataset.feature_curves(0), grid, opts);
  REQUIRE(fit.model.truncation == 3);
  REQUIRE(fit.model.gamma.size() == 3);
  REQUIRE(fit.scores.scores.cols() == 3);
  REQUIRE(fit.scores.scores.rows() == 150);
  REQUIRE(fit.scores.scores.allFinite());
}
