#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfmlp/fpca.hpp"

namespace sfmlp {

// Joint eigenanalysis of the stacked univariate scores. Xi is the sample
// covariance (divisor N-1) of the centered score vectors; joint eigenfunction
// blocks mix the univariate eigenfunctions through the eigenvector blocks.
struct MfpcaModel {
  std::vector<FpcaModel> feature_models;
  Eigen::VectorXd score_means;     // length P+
  Eigen::MatrixXd xi;              // P+ x P+
  Eigen::VectorXd joint_eigenvalues;
  Eigen::MatrixXd coeff_vectors;   // columns c_p, Euclidean-orthonormal
  std::vector<Eigen::MatrixXd> joint_eigenfunctions;  // per feature: P+ x G
  int truncation = 0;              // P_joint
  std::vector<int> offsets;        // feature block offsets into a stacked vector

  int stacked_size() const { return static_cast<int>(score_means.size()); }
};

inline MfpcaModel fit_mfpca(const std::vector<FpcaModel>& models,
                            const std::vector<ScoreMatrix>& scores,
                            double joint_fve = 0.80, int fixed_joint = 0) {
  if (models.empty() || models.size() != scores.size())
    throw std::invalid_argument("fit_mfpca: need one score matrix per model");
  const auto& subjects = scores.front().subject_ids;
  auto n = static_cast<Eigen::Index>(subjects.size());
  if (n < 2) throw std::invalid_argument("fit_mfpca: need at least 2 subjects");
  for (const auto& s : scores)
    if (s.subject_ids != subjects)
      throw std::runtime_error("fit_mfpca: inconsistent subject sets");

  MfpcaModel model;
  model.feature_models = models;
  int p_total = 0;
  for (std::size_t r = 0; r < models.size(); ++r) {
    model.offsets.push_back(p_total);
    if (scores[r].scores.rows() != n ||
        scores[r].scores.cols() != models[r].truncation)
      throw std::invalid_argument("fit_mfpca: score matrix shape mismatch");
    p_total += models[r].truncation;
  }

  Eigen::MatrixXd stacked(n, p_total);
  for (std::size_t r = 0; r < models.size(); ++r)
    stacked.middleCols(model.offsets[r], models[r].truncation) = scores[r].scores;

  model.score_means = stacked.colwise().mean();
  Eigen::MatrixXd centered = stacked.rowwise() - model.score_means.transpose();
  model.xi = centered.transpose() * centered / static_cast<double>(n - 1);
  model.xi = 0.5 * (model.xi + model.xi.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(model.xi);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("fit_mfpca: eigensolver failed");
  model.joint_eigenvalues.resize(p_total);
  model.coeff_vectors.resize(p_total, p_total);
  for (int p = 0; p < p_total; ++p) {
    model.joint_eigenvalues[p] =
        std::max(0.0, solver.eigenvalues()[p_total - 1 - p]);
    model.coeff_vectors.col(p) = solver.eigenvectors().col(p_total - 1 - p);
    fpca_detail::fix_col_sign(model.coeff_vectors, p);
  }

  for (std::size_t r = 0; r < models.size(); ++r) {
    // joint block for feature r: rows are phi~_{r,p} = sum_m c_p[off+m] phi_{r,m}
    Eigen::MatrixXd block = model.coeff_vectors
                                .middleRows(model.offsets[r], models[r].truncation)
                                .transpose() *
                            models[r].eig.eigenfunctions;
    model.joint_eigenfunctions.push_back(std::move(block));
  }

  if (fixed_joint > 0) {
    if (fixed_joint > p_total)
      throw std::invalid_argument("fit_mfpca: fixed joint order exceeds P+");
    model.truncation = fixed_joint;
  } else {
    model.truncation = select_components(model.joint_eigenvalues, joint_fve);
  }
  return model;
}

// Projection of a stacked (uncentered) univariate score vector onto the joint
// components: c_p' (s - mean), for p up to the joint truncation.
inline Eigen::VectorXd mfpca_scores(const Eigen::VectorXd& stacked_scores,
                                    const MfpcaModel& model) {
  if (stacked_scores.size() != model.score_means.size())
    throw std::invalid_argument("mfpca_scores: stacked score length mismatch");
  Eigen::VectorXd centered = stacked_scores - model.score_means;
  return model.coeff_vectors.leftCols(model.truncation).transpose() * centered;
}

// Feature-r curve implied by joint scores; the centered expansion plus the
// score-mean part, so at full rank it equals the univariate reconstruction.
inline Eigen::VectorXd mfpca_reconstruct(const Eigen::VectorXd& joint_scores,
                                         const MfpcaModel& model, int feature) {
  auto r = static_cast<std::size_t>(feature);
  if (r >= model.feature_models.size())
    throw std::invalid_argument("mfpca_reconstruct: feature out of range");
  if (joint_scores.size() > model.stacked_size())
    throw std::invalid_argument("mfpca_reconstruct: too many joint scores");
  const FpcaModel& fm = model.feature_models[r];
  Eigen::VectorXd out =
      model.joint_eigenfunctions[r].topRows(joint_scores.size()).transpose() *
      joint_scores;
  Eigen::VectorXd mean_part =
      fm.eig.eigenfunctions.transpose() *
      model.score_means.segment(model.offsets[r], fm.truncation);
  return out + mean_part;
}

}  // namespace sfmlp
