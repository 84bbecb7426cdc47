#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sfmlp/curve.hpp"
#include "sfmlp/fpca.hpp"
#include "sfmlp/mfpca.hpp"
#include "sfmlp/network.hpp"

namespace sfmlp {

enum class ScoreMode { kUnivariate, kMfpca };

inline const char* score_mode_name(ScoreMode m) {
  return m == ScoreMode::kUnivariate ? "univariate" : "mfpca";
}

inline ScoreMode score_mode_from_name(const std::string& s) {
  if (s == "univariate") return ScoreMode::kUnivariate;
  if (s == "mfpca") return ScoreMode::kMfpca;
  throw std::invalid_argument("unknown score mode: " + s);
}

struct PipelineConfig {
  FpcaOptions fpca;
  ScoreMode score_mode = ScoreMode::kUnivariate;
  double joint_fve = 0.80;
  int joint_fixed = 0;
  int functional_neurons = 4;
  std::vector<int> dense_sizes = {2};
  TrainConfig train;
};

// A fitted end-to-end model: per-feature FPCA components (inside the MFPCA
// model when joint scores are used), plus the trained functional network.
struct TrainedPipeline {
  TimeGrid grid;
  Task task = Task::kRegression;
  ScoreMode score_mode = ScoreMode::kUnivariate;
  std::vector<FpcaModel> fpca_models;  // univariate mode
  std::optional<MfpcaModel> mfpca;     // mfpca mode (owns its feature models)
  FunctionalNetwork network;
  std::vector<double> loss_history;

  const std::vector<FpcaModel>& feature_models() const {
    return score_mode == ScoreMode::kMfpca ? mfpca->feature_models
                                           : fpca_models;
  }

  // Bundles written by the fpca subcommand carry components but no network.
  bool has_network() const { return !network.dense.empty(); }
};

// Stacked uncentered PACE scores of one subject across features.
inline Eigen::VectorXd stacked_pace_scores(
    const std::vector<FpcaModel>& models,
    const std::vector<SparseCurve>& subject_curves) {
  if (subject_curves.size() != models.size())
    throw std::invalid_argument("stacked_pace_scores: feature count mismatch");
  int total = 0;
  for (const auto& m : models) total += m.truncation;
  Eigen::VectorXd out(total);
  int offset = 0;
  for (std::size_t r = 0; r < models.size(); ++r) {
    out.segment(offset, models[r].truncation) =
        pace_scores(subject_curves[r], models[r]);
    offset += models[r].truncation;
  }
  return out;
}

// Network input for one subject under the pipeline's score mode.
inline Eigen::VectorXd pipeline_score_vector(
    const TrainedPipeline& pipe, const std::vector<SparseCurve>& subject_curves) {
  Eigen::VectorXd stacked =
      stacked_pace_scores(pipe.feature_models(), subject_curves);
  if (pipe.score_mode == ScoreMode::kMfpca)
    return mfpca_scores(stacked, *pipe.mfpca);
  return stacked;
}

inline Eigen::MatrixXd pipeline_scores_matrix(const TrainedPipeline& pipe,
                                              const FunctionalDataset& ds) {
  Eigen::MatrixXd out;
  for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
    Eigen::VectorXd s = pipeline_score_vector(pipe, ds.curves[i]);
    if (i == 0) out.resize(static_cast<Eigen::Index>(ds.n_subjects()), s.size());
    out.row(static_cast<Eigen::Index>(i)) = s.transpose();
  }
  return out;
}

// Fits FPCA (and MFPCA when configured) on the dataset, then trains the
// functional network on the resulting score vectors.
inline TrainedPipeline fit_pipeline(const FunctionalDataset& ds,
                                    const PipelineConfig& config) {
  if (ds.n_subjects() < 2)
    throw std::invalid_argument("fit_pipeline: need at least 2 subjects");
  TrainedPipeline pipe;
  pipe.grid = ds.grid;
  pipe.task = ds.task;
  pipe.score_mode = config.score_mode;

  std::vector<FpcaModel> models;
  std::vector<ScoreMatrix> scores;
  for (int r = 0; r < ds.n_features; ++r) {
    auto fit = fit_fpca(ds.feature_curves(r), ds.grid, config.fpca);
    models.push_back(std::move(fit.model));
    scores.push_back(std::move(fit.scores));
  }

  Eigen::MatrixXd inputs;
  std::vector<int> blocks;
  if (config.score_mode == ScoreMode::kMfpca) {
    pipe.mfpca = fit_mfpca(models, scores, config.joint_fve, config.joint_fixed);
    auto n = static_cast<Eigen::Index>(ds.n_subjects());
    int p_total = pipe.mfpca->stacked_size();
    Eigen::MatrixXd stacked(n, p_total);
    for (std::size_t r = 0; r < models.size(); ++r)
      stacked.middleCols(pipe.mfpca->offsets[r], models[r].truncation) =
          scores[r].scores;
    inputs.resize(n, pipe.mfpca->truncation);
    for (Eigen::Index i = 0; i < n; ++i)
      inputs.row(i) =
          mfpca_scores(stacked.row(i).transpose(), *pipe.mfpca).transpose();
    blocks = {pipe.mfpca->truncation};
  } else {
    pipe.fpca_models = std::move(models);
    int p_total = 0;
    for (const auto& m : pipe.fpca_models) {
      blocks.push_back(m.truncation);
      p_total += m.truncation;
    }
    auto n = static_cast<Eigen::Index>(ds.n_subjects());
    inputs.resize(n, p_total);
    int offset = 0;
    for (std::size_t r = 0; r < pipe.fpca_models.size(); ++r) {
      inputs.middleCols(offset, pipe.fpca_models[r].truncation) =
          scores[r].scores;
      offset += pipe.fpca_models[r].truncation;
    }
  }

  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(
      ds.responses.data(), static_cast<Eigen::Index>(ds.responses.size()));
  FunctionalNetwork net =
      init_network(config.functional_neurons, config.dense_sizes, blocks,
                   ds.task, config.train.seed);
  TrainConfig tc = config.train;
  tc.loss = default_loss(ds.task);
  auto result = train(std::move(net), inputs, y, tc);
  pipe.network = std::move(result.network);
  pipe.loss_history = std::move(result.loss_history);
  return pipe;
}

struct Prediction {
  double value = 0.0;
  double probability = 0.0;  // classification only
  int label = 0;             // classification only; 0.5 ties go positive
};

inline Prediction predict_pipeline(const TrainedPipeline& pipe,
                                   const std::vector<SparseCurve>& subject_curves) {
  Prediction pred;
  pred.value = forward_scores(pipe.network,
                              pipeline_score_vector(pipe, subject_curves));
  if (pipe.task == Task::kBinaryClassification) {
    pred.probability = pred.value;
    pred.label = pred.probability >= 0.5 ? 1 : 0;
  }
  return pred;
}

}  // namespace sfmlp
