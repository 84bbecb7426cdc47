#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfmlp/curve.hpp"
#include "sfmlp/pipeline.hpp"
#include "sfmlp/rng.hpp"

namespace sfmlp {

inline double rmse(const std::vector<double>& predictions,
                   const std::vector<double>& truths) {
  if (predictions.empty() || predictions.size() != truths.size())
    throw std::invalid_argument("rmse: need equal non-empty vectors");
  double sse = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    double d = predictions[i] - truths[i];
    sse += d * d;
  }
  return std::sqrt(sse / static_cast<double>(predictions.size()));
}

struct Metrics {
  Task task = Task::kRegression;
  double rmse = 0.0;      // regression
  double accuracy = 0.0;  // classification
  long tp = 0, fp = 0, fn = 0, tn = 0;

  double primary() const {
    return task == Task::kRegression ? rmse : accuracy;
  }
};

inline Metrics classification_metrics(const std::vector<double>& probabilities,
                                      const std::vector<double>& labels,
                                      double threshold = 0.5) {
  if (probabilities.size() != labels.size() || probabilities.empty())
    throw std::invalid_argument("classification_metrics: shape mismatch");
  Metrics m;
  m.task = Task::kBinaryClassification;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0)
      throw std::invalid_argument("classification_metrics: labels must be 0/1");
    int pred = probabilities[i] >= threshold ? 1 : 0;  // tie goes positive
    int truth = labels[i] == 1.0 ? 1 : 0;
    if (pred == 1 && truth == 1) ++m.tp;
    if (pred == 1 && truth == 0) ++m.fp;
    if (pred == 0 && truth == 1) ++m.fn;
    if (pred == 0 && truth == 0) ++m.tn;
  }
  m.accuracy = static_cast<double>(m.tp + m.tn) /
               static_cast<double>(labels.size());
  return m;
}

struct CvPlan {
  enum class Mode { kHoldout, kKFold, kLeaveOneOut };
  Mode mode = Mode::kHoldout;
  double holdout_fraction = 0.2;
  int k = 5;
  std::uint64_t seed = 0;
  bool refit_fpca_per_fold = true;

  static CvPlan holdout(double fraction, std::uint64_t seed) {
    CvPlan p;
    p.mode = Mode::kHoldout;
    p.holdout_fraction = fraction;
    p.seed = seed;
    return p;
  }
  static CvPlan k_fold(int k, std::uint64_t seed) {
    CvPlan p;
    p.mode = Mode::kKFold;
    p.k = k;
    p.seed = seed;
    return p;
  }
  static CvPlan leave_one_out() {
    CvPlan p;
    p.mode = Mode::kLeaveOneOut;
    return p;
  }
};

// Test-subject index sets; disjoint and (for k-fold/LOO) covering.
inline std::vector<std::vector<std::size_t>> make_folds(std::size_t n,
                                                        const CvPlan& plan) {
  if (n < 2) throw std::invalid_argument("make_folds: need at least 2 subjects");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> folds;
  switch (plan.mode) {
    case CvPlan::Mode::kHoldout: {
      if (!(plan.holdout_fraction > 0.0 && plan.holdout_fraction < 1.0))
        throw std::invalid_argument("make_folds: holdout fraction in (0, 1)");
      CounterRng rng(plan.seed, 0xF01D);
      rng.shuffle(order);
      auto n_test = static_cast<std::size_t>(
          std::llround(plan.holdout_fraction * static_cast<double>(n)));
      n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
      folds.emplace_back(order.begin(),
                         order.begin() + static_cast<std::ptrdiff_t>(n_test));
      break;
    }
    case CvPlan::Mode::kKFold: {
      if (plan.k < 2 || static_cast<std::size_t>(plan.k) > n)
        throw std::invalid_argument("make_folds: k out of range");
      CounterRng rng(plan.seed, 0xF01D);
      rng.shuffle(order);
      auto k = static_cast<std::size_t>(plan.k);
      folds.resize(k);
      for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(order[i]);
      break;
    }
    case CvPlan::Mode::kLeaveOneOut: {
      folds.resize(n);
      for (std::size_t i = 0; i < n; ++i) folds[i] = {i};
      break;
    }
  }
  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

struct FoldResult {
  std::vector<std::size_t> test_subjects;
  Metrics metrics;
  bool skipped = false;
  std::string warning;
};

struct CvResult {
  std::vector<FoldResult> folds;
  double aggregate_mean = 0.0;
  double aggregate_sd = 0.0;  // sample standard deviation across folds
  int skipped_folds = 0;
  std::vector<std::string> warnings;
};

// Per-fold protocol: fit FPCA/MFPCA on training subjects only (unless
// refitting is disabled), score the test subjects with the training-fold
// models, train the network, evaluate. Folds with a single class in training
// are skipped with a warning. Per-fold training seeds derive from
// (plan seed, fold index).
inline CvResult crossvalidate(const FunctionalDataset& ds,
                              const PipelineConfig& config, const CvPlan& plan) {
  if (ds.n_subjects() < 2)
    throw std::invalid_argument("crossvalidate: need at least 2 subjects");
  auto folds = make_folds(ds.n_subjects(), plan);
  CvResult result;
  if (plan.mode == CvPlan::Mode::kLeaveOneOut && ds.n_subjects() > 200)
    result.warnings.push_back(
        "leave-one-out over " + std::to_string(ds.n_subjects()) +
        " subjects refits the pipeline once per subject; expect a long run");

  // Shared fit when each fold reuses the full-data FPCA basis.
  std::optional<TrainedPipeline> shared;
  if (!plan.refit_fpca_per_fold) {
    PipelineConfig quick = config;
    quick.train.epochs = 1;  // basis only; the network is retrained per fold
    shared = fit_pipeline(ds, quick);
  }

  std::vector<double> fold_metric;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    FoldResult fr;
    fr.test_subjects = folds[f];
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < ds.n_subjects(); ++i)
      if (!std::binary_search(folds[f].begin(), folds[f].end(), i))
        train_idx.push_back(i);

    if (ds.task == Task::kBinaryClassification) {
      bool has0 = false, has1 = false;
      for (std::size_t i : train_idx) {
        if (ds.responses[i] == 0.0) has0 = true;
        if (ds.responses[i] == 1.0) has1 = true;
      }
      if (!has0 || !has1) {
        fr.skipped = true;
        fr.warning = "fold " + std::to_string(f) +
                     " skipped: single class in training data";
        result.warnings.push_back(fr.warning);
        ++result.skipped_folds;
        result.folds.push_back(std::move(fr));
        continue;
      }
    }

    PipelineConfig fold_config = config;
    fold_config.train.seed =
        CounterRng(plan.seed, 0xCFDE, static_cast<std::uint64_t>(f),
                   config.train.seed)
            .next_u64();

    FunctionalDataset train_ds = ds.subset(train_idx);
    TrainedPipeline pipe;
    if (plan.refit_fpca_per_fold) {
      pipe = fit_pipeline(train_ds, fold_config);
    } else {
      pipe = *shared;
      Eigen::MatrixXd inputs = pipeline_scores_matrix(pipe, train_ds);
      Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(
          train_ds.responses.data(),
          static_cast<Eigen::Index>(train_ds.responses.size()));
      std::vector<int> blocks;
      if (pipe.score_mode == ScoreMode::kMfpca) {
        blocks = {pipe.mfpca->truncation};
      } else {
        for (const auto& m : pipe.fpca_models) blocks.push_back(m.truncation);
      }
      FunctionalNetwork net =
          init_network(fold_config.functional_neurons, fold_config.dense_sizes,
                       blocks, ds.task, fold_config.train.seed);
      TrainConfig tc = fold_config.train;
      tc.loss = default_loss(ds.task);
      auto trained = train(std::move(net), inputs, y, tc);
      pipe.network = std::move(trained.network);
      pipe.loss_history = std::move(trained.loss_history);
    }

    std::vector<double> preds, truths;
    for (std::size_t i : folds[f]) {
      preds.push_back(predict_pipeline(pipe, ds.curves[i]).value);
      truths.push_back(ds.responses[i]);
    }
    if (ds.task == Task::kBinaryClassification) {
      fr.metrics = classification_metrics(preds, truths);
    } else {
      fr.metrics.task = Task::kRegression;
      fr.metrics.rmse = rmse(preds, truths);
    }
    fold_metric.push_back(fr.metrics.primary());
    result.folds.push_back(std::move(fr));
  }

  if (fold_metric.empty())
    throw std::runtime_error("crossvalidate: every fold was skipped");
  double mean = std::accumulate(fold_metric.begin(), fold_metric.end(), 0.0) /
                static_cast<double>(fold_metric.size());
  result.aggregate_mean = mean;
  if (fold_metric.size() > 1) {
    double ss = 0.0;
    for (double v : fold_metric) ss += (v - mean) * (v - mean);
    result.aggregate_sd =
        std::sqrt(ss / static_cast<double>(fold_metric.size() - 1));
  }
  return result;
}

}  // namespace sfmlp
