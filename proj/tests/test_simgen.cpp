#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sfmlp/simgen.hpp"

using namespace sfmlp;

TEST_CASE("degenerate draws land exactly on the group mean", "[simgen]") {
  TimeGrid grid(0, 1, 51);
  KlConfig cfg;
  cfg.groups = {{1.0, 4.0, 0.0}};
  cfg.eigenvalues = Eigen::VectorXd::Zero(4);  // forces xi = 0
  cfg.noise_sd = 0.0;
  cfg.n_per_group = 5;
  cfg.points_per_curve = 7;
  cfg.seed = 3;
  cfg.task = Task::kRegression;
  auto sim = generate(cfg, grid);
  for (std::size_t i = 0; i < sim.dataset.n_subjects(); ++i) {
    const auto& c = sim.dataset.curve(i, 0);
    for (std::size_t j = 0; j < c.size(); ++j)
      REQUIRE(c.values[j] ==
              Catch::Approx(cfg.groups[0](c.times[j])).margin(1e-15));
  }
}

TEST_CASE("observations decompose exactly into recorded randomness", "[simgen]") {
  TimeGrid grid(0, 1, 101);
  auto cfg = KlConfig::two_sine(17);
  cfg.n_per_group = 20;
  auto sim = generate(cfg, grid);
  for (std::size_t i = 0; i < sim.dataset.n_subjects(); ++i) {
    const auto& c = sim.dataset.curve(i, 0);
    const auto& truth = sim.truth[i];
    const MeanSpec& mu = cfg.groups[static_cast<std::size_t>(truth.group)];
    for (std::size_t j = 0; j < c.size(); ++j) {
      double x = mu(c.times[j]);
      for (Eigen::Index p = 0; p < truth.scores.size(); ++p)
        x += truth.scores[p] *
             kl_eigenfunction(static_cast<int>(p), c.times[j]);
      REQUIRE(c.values[j] == x + truth.noise[j]);
    }
  }
}

TEST_CASE("timestamps are sorted, strictly increasing, and in range", "[simgen]") {
  TimeGrid grid(0, 1, 11);
  auto cfg = KlConfig::two_sine(23);
  cfg.n_per_group = 50;
  auto sim = generate(cfg, grid);
  for (const auto& row : sim.dataset.curves) {
    const auto& t = row[0].times;
    for (std::size_t j = 0; j < t.size(); ++j) {
      REQUIRE(t[j] >= 0.0);
      REQUIRE(t[j] <= 1.0);
      if (j > 0) REQUIRE(t[j] > t[j - 1]);
    }
  }
}

TEST_CASE("same seed reproduces the dataset bit for bit", "[simgen]") {
  TimeGrid grid(0, 1, 31);
  auto a = generate(KlConfig::two_sine(777), grid);
  auto b = generate(KlConfig::two_sine(777), grid);
  REQUIRE(a.dataset.subject_ids == b.dataset.subject_ids);
  for (std::size_t i = 0; i < a.dataset.n_subjects(); ++i) {
    REQUIRE(a.dataset.curve(i, 0).times == b.dataset.curve(i, 0).times);
    REQUIRE(a.dataset.curve(i, 0).values == b.dataset.curve(i, 0).values);
  }
  auto c = generate(KlConfig::two_sine(778), grid);
  REQUIRE(a.dataset.curve(0, 0).values != c.dataset.curve(0, 0).values);
}

TEST_CASE("score moments match the configuration at scale", "[simgen][mc]") {
  TimeGrid grid(0, 1, 11);
  auto cfg = KlConfig::two_sine(2025);
  cfg.n_per_group = 10000;
  auto sim = generate(cfg, grid);
  auto n = static_cast<double>(sim.truth.size());
  for (Eigen::Index p = 0; p < 4; ++p) {
    double mean = 0.0, ss = 0.0;
    for (const auto& t : sim.truth) mean += t.scores[p];
    mean /= n;
    for (const auto& t : sim.truth)
      ss += (t.scores[p] - mean) * (t.scores[p] - mean);
    double var = ss / (n - 1);
    double lambda = cfg.eigenvalues[p];
    REQUIRE(std::abs(var - lambda) <= 0.05 * lambda);
    // mean within 3 standard errors of zero
    REQUIRE(std::abs(mean) <= 3.0 * std::sqrt(lambda / n));
  }
}

TEST_CASE("empirical curve covariance converges to the KL surface",
          "[simgen][mc]") {
  TimeGrid grid(0, 1, 51);
  KlConfig cfg;
  cfg.groups = {{0.0, 0.0, 0.0}};
  cfg.eigenvalues.resize(4);
  cfg.eigenvalues << 0.1, 0.045, 0.01, 0.001;
  cfg.noise_sd = 0.0;
  cfg.n_per_group = 10000;
  cfg.points_per_curve = 1;
  cfg.seed = 99;
  cfg.task = Task::kRegression;
  auto sim = generate(cfg, grid);

  auto n = static_cast<Eigen::Index>(sim.truth.size());
  auto g = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd curves(n, g);
  for (Eigen::Index i = 0; i < n; ++i)
    curves.row(i) = sim.truth[static_cast<std::size_t>(i)].curve_on_grid.transpose();
  Eigen::RowVectorXd mean = curves.colwise().mean();
  Eigen::MatrixXd centered = curves.rowwise() - mean;
  Eigen::MatrixXd emp = centered.transpose() * centered / double(n - 1);

  Eigen::MatrixXd truth = Eigen::MatrixXd::Zero(g, g);
  for (Eigen::Index p = 0; p < 4; ++p) {
    Eigen::VectorXd phi(g);
    for (Eigen::Index i = 0; i < g; ++i)
      phi[i] = kl_eigenfunction(static_cast<int>(p),
                                grid.points()[static_cast<std::size_t>(i)]);
    truth += cfg.eigenvalues[p] * phi * phi.transpose();
  }
  REQUIRE((emp - truth).cwiseAbs().maxCoeff() <= 0.02);
}

TEST_CASE("regression responses follow the linear functional of scores",
          "[simgen]") {
  TimeGrid grid(0, 1, 21);
  KlConfig cfg;
  cfg.groups = {{0.0, 0.0, 0.0}};
  cfg.eigenvalues.resize(2);
  cfg.eigenvalues << 0.1, 0.045;
  cfg.noise_sd = 0.1;
  cfg.n_per_group = 25;
  cfg.points_per_curve = 5;
  cfg.seed = 5;
  cfg.task = Task::kRegression;
  cfg.response_weights.resize(2);
  cfg.response_weights << 3.0, -2.0;
  cfg.response_noise_sd = 0.2;
  auto sim = generate(cfg, grid);
  for (std::size_t i = 0; i < sim.truth.size(); ++i) {
    double expected = 3.0 * sim.truth[i].scores[0] -
                      2.0 * sim.truth[i].scores[1] +
                      sim.truth[i].response_noise;
    REQUIRE(sim.dataset.responses[i] == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("configuration errors are rejected", "[simgen]") {
  TimeGrid grid(0, 1, 11);
  KlConfig cfg = KlConfig::two_sine(1);
  SECTION("classification needs exactly two groups") {
    cfg.groups.push_back({0.5, 1.0, 0.0});
    REQUIRE_THROWS_AS(generate(cfg, grid), std::invalid_argument);
  }
  SECTION("eigenvalues must be non-increasing") {
    cfg.eigenvalues[1] = 1.0;
    REQUIRE_THROWS_AS(generate(cfg, grid), std::invalid_argument);
  }
  SECTION("classification labels are the group indices") {
    auto sim = generate(cfg, grid);
    REQUIRE(sim.dataset.task == Task::kBinaryClassification);
    REQUIRE(sim.dataset.responses.front() == 0.0);
    REQUIRE(sim.dataset.responses.back() == 1.0);
  }
}
