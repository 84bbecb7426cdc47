#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfmlp/curve.hpp"
#include "sfmlp/grid.hpp"
#include "sfmlp/rng.hpp"

namespace sfmlp {

// Closed-form mean function a*sin(b*pi*t) + c.
struct MeanSpec {
  double amplitude = 0.0;
  double frequency = 0.0;
  double offset = 0.0;

  double operator()(double t) const {
    return amplitude * std::sin(frequency * std::numbers::pi * t) + offset;
  }
};

// Karhunen-Loeve generator: X(t) = mu_g(t) + sum_p xi_p phi_p(t) with
// xi_p ~ N(0, lambda_p), phi_p(t) = sqrt(2) sin(p pi t), observed at M
// i.i.d. Uniform(0,1) timestamps under additive N(0, sigma^2) noise.
struct KlConfig {
  std::vector<MeanSpec> groups;
  Eigen::VectorXd eigenvalues;
  double noise_sd = 0.3;
  int n_per_group = 300;
  int points_per_curve = 10;
  std::uint64_t seed = 0;
  Task task = Task::kBinaryClassification;
  // regression only: Y = response_weights . xi + N(0, response_noise_sd^2)
  Eigen::VectorXd response_weights;
  double response_noise_sd = 0.0;

  // Two-group sine benchmark: means +/- sin(4 pi t), eigenvalues
  // (0.1, 0.045, 0.01, 0.001), noise 0.3, 300 subjects per group, 10 points
  // per curve.
  static KlConfig two_sine(std::uint64_t seed) {
    KlConfig c;
    c.groups = {{1.0, 4.0, 0.0}, {-1.0, 4.0, 0.0}};
    c.eigenvalues.resize(4);
    c.eigenvalues << 0.1, 0.045, 0.01, 0.001;
    c.noise_sd = 0.3;
    c.n_per_group = 300;
    c.points_per_curve = 10;
    c.seed = seed;
    c.task = Task::kBinaryClassification;
    return c;
  }
};

struct SubjectTruth {
  int group = 0;
  Eigen::VectorXd scores;          // xi draws
  std::vector<double> noise;       // per-observation noise draws
  double response_noise = 0.0;
  Eigen::VectorXd curve_on_grid;   // mu_g + sum xi phi on the grid
};

struct SimOutput {
  FunctionalDataset dataset;
  std::vector<SubjectTruth> truth;  // subject order matches the dataset
};

inline double kl_eigenfunction(int p, double t) {
  return std::sqrt(2.0) * std::sin((p + 1) * std::numbers::pi * t);
}

inline SimOutput generate(const KlConfig& config, const TimeGrid& grid) {
  if (config.groups.empty())
    throw std::invalid_argument("generate: need at least one group");
  if (config.task == Task::kBinaryClassification && config.groups.size() != 2)
    throw std::invalid_argument("generate: classification needs two groups");
  if (config.n_per_group < 1 || config.points_per_curve < 1)
    throw std::invalid_argument("generate: invalid sizes");
  if (config.noise_sd < 0.0)
    throw std::invalid_argument("generate: negative noise sd");
  auto n_comp = config.eigenvalues.size();
  for (Eigen::Index p = 0; p < n_comp; ++p) {
    if (config.eigenvalues[p] < 0.0)
      throw std::invalid_argument("generate: negative eigenvalue");
    if (p > 0 && config.eigenvalues[p] > config.eigenvalues[p - 1])
      throw std::invalid_argument("generate: eigenvalues must be non-increasing");
  }
  if (config.task == Task::kRegression &&
      config.response_weights.size() > n_comp)
    throw std::invalid_argument("generate: more response weights than scores");

  enum Role : std::uint64_t { kTimes = 1, kScores = 2, kNoise = 3, kResponse = 4 };

  SimOutput out;
  out.dataset.grid = grid;
  out.dataset.task = config.task;
  out.dataset.n_features = 1;
  auto m = static_cast<std::size_t>(config.points_per_curve);
  for (std::size_t g = 0; g < config.groups.size(); ++g) {
    for (int i = 0; i < config.n_per_group; ++i) {
      auto subject = static_cast<std::uint64_t>(i);
      std::string id = "g" + std::to_string(g + 1) + "s" + std::to_string(i + 1);

      std::vector<double> times(m);
      for (std::uint64_t salt = 0;; ++salt) {
        CounterRng rng(config.seed, g, subject, kTimes + (salt << 8));
        for (auto& t : times)
          t = grid.t0() + rng.uniform() * grid.width();
        std::sort(times.begin(), times.end());
        if (std::adjacent_find(times.begin(), times.end()) == times.end()) break;
      }

      SubjectTruth truth;
      truth.group = static_cast<int>(g);
      truth.scores.resize(n_comp);
      {
        CounterRng rng(config.seed, g, subject, kScores);
        for (Eigen::Index p = 0; p < n_comp; ++p)
          truth.scores[p] = rng.normal() * std::sqrt(config.eigenvalues[p]);
      }
      truth.noise.resize(m);
      {
        CounterRng rng(config.seed, g, subject, kNoise);
        for (auto& e : truth.noise) e = rng.normal() * config.noise_sd;
      }

      const MeanSpec& mu = config.groups[g];
      SparseCurve curve;
      curve.subject_id = id;
      curve.feature_id = 0;
      curve.times = times;
      curve.values.resize(m);
      for (std::size_t j = 0; j < m; ++j) {
        double x = mu(times[j]);
        for (Eigen::Index p = 0; p < n_comp; ++p)
          x += truth.scores[p] * kl_eigenfunction(static_cast<int>(p), times[j]);
        curve.values[j] = x + truth.noise[j];
      }

      truth.curve_on_grid.resize(static_cast<Eigen::Index>(grid.size()));
      for (std::size_t gg = 0; gg < grid.size(); ++gg) {
        double t = grid.points()[gg];
        double x = mu(t);
        for (Eigen::Index p = 0; p < n_comp; ++p)
          x += truth.scores[p] * kl_eigenfunction(static_cast<int>(p), t);
        truth.curve_on_grid[static_cast<Eigen::Index>(gg)] = x;
      }

      double response;
      if (config.task == Task::kBinaryClassification) {
        response = static_cast<double>(g);
      } else {
        CounterRng rng(config.seed, g, subject, kResponse);
        truth.response_noise = rng.normal() * config.response_noise_sd;
        response = truth.response_noise;
        for (Eigen::Index p = 0; p < config.response_weights.size(); ++p)
          response += config.response_weights[p] * truth.scores[p];
      }

      out.dataset.subject_ids.push_back(id);
      out.dataset.responses.push_back(response);
      out.dataset.curves.push_back({std::move(curve)});
      out.truth.push_back(std::move(truth));
    }
  }
  out.dataset.validate();
  return out;
}

}  // namespace sfmlp
