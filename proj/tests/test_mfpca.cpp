#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sfmlp/mfpca.hpp"
#include "sfmlp/simgen.hpp"

using namespace sfmlp;

namespace {

// Hand-built feature model with the sine basis, re-orthonormalized in the
// grid's weighted inner product so the discrete invariants hold exactly.
FpcaModel sine_model(const TimeGrid& grid, int p_count, int feature_id) {
  FpcaModel m;
  m.feature_id = feature_id;
  m.grid = grid;
  m.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
  m.truncation = p_count;
  m.eig.eigenvalues = Eigen::VectorXd::Zero(p_count);
  m.eig.eigenfunctions.resize(p_count, static_cast<Eigen::Index>(grid.size()));
  for (int p = 0; p < p_count; ++p) {
    m.eig.eigenvalues[p] = 1.0 / (p + 1);
    for (std::size_t g = 0; g < grid.size(); ++g)
      m.eig.eigenfunctions(p, static_cast<Eigen::Index>(g)) =
          kl_eigenfunction(p, grid.points()[g]);
  }
  auto inner = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return grid.inner(
        std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
        std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
  };
  for (int p = 0; p < p_count; ++p) {
    Eigen::VectorXd row = m.eig.eigenfunctions.row(p);
    for (int q = 0; q < p; ++q) {
      Eigen::VectorXd prev = m.eig.eigenfunctions.row(q);
      row -= inner(prev, row) * prev;
    }
    m.eig.eigenfunctions.row(p) = row / std::sqrt(inner(row, row));
  }
  m.gamma = Eigen::VectorXd::Zero(p_count);
  m.noise_var = 0.01;
  return m;
}

ScoreMatrix make_scores(const Eigen::MatrixXd& scores) {
  ScoreMatrix s;
  s.scores = scores;
  for (Eigen::Index i = 0; i < scores.rows(); ++i)
    s.subject_ids.push_back("s" + std::to_string(i + 1));
  return s;
}

}  // namespace

TEST_CASE("joint spectrum traces the score covariance", "[mfpca]") {
  TimeGrid grid(0, 1, 41);
  auto m1 = sine_model(grid, 2, 0);
  auto m2 = sine_model(grid, 3, 1);
  CounterRng rng(7);
  Eigen::MatrixXd s1(40, 2), s2(40, 3);
  for (Eigen::Index i = 0; i < 40; ++i) {
    double common = rng.normal();
    s1(i, 0) = common + 0.1 * rng.normal();
    s1(i, 1) = rng.normal();
    s2(i, 0) = -common + 0.1 * rng.normal();
    s2(i, 1) = 0.5 * rng.normal();
    s2(i, 2) = 0.2 * rng.normal();
  }
  auto model = fit_mfpca({m1, m2}, {make_scores(s1), make_scores(s2)}, 0.8);

  REQUIRE(model.stacked_size() == 5);
  REQUIRE(std::abs(model.joint_eigenvalues.sum() - model.xi.trace()) <= 1e-10);

  // coefficient vectors are Euclidean-orthonormal
  Eigen::MatrixXd gram =
      model.coeff_vectors.transpose() * model.coeff_vectors;
  REQUIRE((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() <=
          1e-10);

  // non-increasing, non-negative joint eigenvalues
  for (Eigen::Index p = 0; p < 5; ++p) {
    REQUIRE(model.joint_eigenvalues[p] >= 0.0);
    if (p > 0)
      REQUIRE(model.joint_eigenvalues[p] <=
              model.joint_eigenvalues[p - 1] + 1e-12);
  }
}

TEST_CASE("single-feature MFPCA degenerates to a rotation", "[mfpca]") {
  TimeGrid grid(0, 1, 41);
  auto m1 = sine_model(grid, 3, 0);
  CounterRng rng(3);
  Eigen::MatrixXd s(60, 3);
  for (Eigen::Index i = 0; i < 60; ++i) {
    s(i, 0) = 2.0 * rng.normal();
    s(i, 1) = 1.0 * rng.normal();
    s(i, 2) = 0.5 * rng.normal();
  }
  auto model = fit_mfpca({m1}, {make_scores(s)}, 0.8, 3);

  // joint eigenvalues equal the eigenvalues of the single covariance block
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(model.xi);
  for (Eigen::Index p = 0; p < 3; ++p)
    REQUIRE(model.joint_eigenvalues[p] ==
            Catch::Approx(solver.eigenvalues()[2 - p]).margin(1e-12));

  // joint eigenfunctions are an orthonormal rotation of the basis
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q) {
      Eigen::VectorXd a = model.joint_eigenfunctions[0].row(p);
      Eigen::VectorXd b = model.joint_eigenfunctions[0].row(q);
      double ip = grid.inner(
          std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
          std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
      REQUIRE(std::abs(ip - (p == q ? 1.0 : 0.0)) <= 1e-8);
    }
}

TEST_CASE("diagonal score covariance keeps the univariate basis", "[mfpca]") {
  TimeGrid grid(0, 1, 41);
  auto m1 = sine_model(grid, 2, 0);
  // centered orthogonal columns: exactly diagonal covariance with distinct
  // variances
  Eigen::MatrixXd s(4, 2);
  s << 3, 1, -3, 1, 3, -1, -3, -1;
  auto model = fit_mfpca({m1}, {make_scores(s)}, 0.8, 2);
  REQUIRE(model.joint_eigenvalues[0] == Catch::Approx(12.0));  // 36/3
  REQUIRE(model.joint_eigenvalues[1] == Catch::Approx(4.0 / 3.0));
  // identity rotation (up to sign, fixed positive by convention)
  REQUIRE(model.coeff_vectors(0, 0) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(model.coeff_vectors(1, 1) == Catch::Approx(1.0).margin(1e-12));
  // phi~ = phi up to sign for a diagonal block
  REQUIRE((model.joint_eigenfunctions[0].row(0) -
           m1.eig.eigenfunctions.row(0)).cwiseAbs().maxCoeff() <= 1e-12);

  SECTION("joint scores are centered projections") {
    Eigen::VectorXd at_mean = model.score_means;
    REQUIRE(mfpca_scores(at_mean, model).cwiseAbs().maxCoeff() <= 1e-12);
    Eigen::VectorXd one = s.row(0).transpose();
    Eigen::VectorXd js = mfpca_scores(one, model);
    REQUIRE(js[0] == Catch::Approx(3.0));  // means are zero here
    REQUIRE(js[1] == Catch::Approx(1.0));
  }

  SECTION("block-diagonal joint spectrum is the union of block spectra") {
    auto m2 = sine_model(grid, 1, 1);
    Eigen::MatrixXd s2(4, 1);
    s2 << 2, -2, -2, 2;  // variance 16/3, orthogonal to both columns of s
    auto joint =
        fit_mfpca({m1, m2}, {make_scores(s), make_scores(s2)}, 0.8, 3);
    REQUIRE(joint.joint_eigenvalues[0] == Catch::Approx(12.0));
    REQUIRE(joint.joint_eigenvalues[1] == Catch::Approx(16.0 / 3.0));
    REQUIRE(joint.joint_eigenvalues[2] == Catch::Approx(4.0 / 3.0));
  }
}

TEST_CASE("full-rank joint reconstruction matches stacked univariate",
          "[mfpca]") {
  TimeGrid grid(0, 1, 51);
  auto m1 = sine_model(grid, 2, 0);
  auto m2 = sine_model(grid, 2, 1);
  CounterRng rng(11);
  Eigen::MatrixXd s1(30, 2), s2(30, 2);
  for (Eigen::Index i = 0; i < 30; ++i) {
    s1(i, 0) = rng.normal();
    s1(i, 1) = 0.4 * rng.normal() + 0.3 * s1(i, 0);
    s2(i, 0) = 0.7 * rng.normal() - 0.2 * s1(i, 1);
    s2(i, 1) = 0.3 * rng.normal();
  }
  auto model = fit_mfpca({m1, m2}, {make_scores(s1), make_scores(s2)}, 0.8, 4);

  for (Eigen::Index i : {Eigen::Index{0}, Eigen::Index{7}, Eigen::Index{29}}) {
    Eigen::VectorXd stacked(4);
    stacked << s1(i, 0), s1(i, 1), s2(i, 0), s2(i, 1);
    Eigen::VectorXd joint = mfpca_scores(stacked, model);
    for (int r = 0; r < 2; ++r) {
      Eigen::VectorXd via_joint = mfpca_reconstruct(joint, model, r);
      Eigen::VectorXd direct =
          (r == 0 ? m1 : m2).eig.eigenfunctions.transpose() *
          (r == 0 ? s1.row(i).transpose() : s2.row(i).transpose()).eval();
      REQUIRE((via_joint - direct).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("inconsistent subject sets are rejected", "[mfpca]") {
  TimeGrid grid(0, 1, 21);
  auto m1 = sine_model(grid, 1, 0);
  auto m2 = sine_model(grid, 1, 1);
  Eigen::MatrixXd s(3, 1);
  s << 1, 2, 3;
  auto a = make_scores(s);
  auto b = make_scores(s);
  b.subject_ids[1] = "other";
  REQUIRE_THROWS_AS(fit_mfpca({m1, m2}, {a, b}, 0.8), std::runtime_error);
}

TEST_CASE("stacked score length is validated", "[mfpca]") {
  TimeGrid grid(0, 1, 21);
  auto m1 = sine_model(grid, 2, 0);
  Eigen::MatrixXd s(3, 2);
  s << 1, 0, 0, 1, -1, -1;
  auto model = fit_mfpca({m1}, {make_scores(s)}, 0.8);
  Eigen::VectorXd wrong(3);
  wrong << 1, 2, 3;
  REQUIRE_THROWS_AS(mfpca_scores(wrong, model), std::invalid_argument);
}
