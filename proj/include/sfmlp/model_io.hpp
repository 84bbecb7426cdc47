#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sfmlp/fpca.hpp"
#include "sfmlp/mfpca.hpp"
#include "sfmlp/network.hpp"
#include "sfmlp/pipeline.hpp"
#include "sfmlp/rng.hpp"
#include "sfmlp/version.hpp"

namespace sfmlp {

using Json = nlohmann::ordered_json;

namespace json_detail {

inline Json vector_to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Eigen::VectorXd vector_from_json(const Json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

inline Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline Eigen::MatrixXd matrix_from_json(const Json& j) {
  auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return {};
  auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols)
      throw std::runtime_error("model JSON: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]
                    .get<double>();
  }
  return m;
}

inline void check_version(const Json& j, const std::string& kind) {
  if (!j.contains("format_version") ||
      j["format_version"].get<int>() != kModelFormatVersion)
    throw std::runtime_error("model JSON: unsupported format_version");
  if (!j.contains("kind") || j["kind"].get<std::string>() != kind)
    throw std::runtime_error("model JSON: expected kind '" + kind + "'");
}

}  // namespace json_detail

inline Json to_json(const TimeGrid& grid) {
  return Json{{"t0", grid.t0()}, {"t1", grid.t1()}, {"size", grid.size()}};
}

inline TimeGrid grid_from_json(const Json& j) {
  return TimeGrid(j.at("t0").get<double>(), j.at("t1").get<double>(),
                  j.at("size").get<std::size_t>());
}

inline Json to_json(const FpcaModel& m) {
  using namespace json_detail;
  Json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = "fpca_model";
  j["feature_id"] = m.feature_id;
  j["grid"] = to_json(m.grid);
  j["mean"] = vector_to_json(m.mean);
  j["eigenvalues"] = vector_to_json(m.eig.eigenvalues);
  j["eigenfunctions"] = matrix_to_json(m.eig.eigenfunctions);
  j["noise_var"] = m.noise_var;
  j["truncation"] = m.truncation;
  j["gamma"] = vector_to_json(m.gamma);
  j["bandwidth_mean"] = m.bandwidth_mean;
  j["bandwidth_cov"] = m.bandwidth_cov;
  return j;
}

inline FpcaModel fpca_model_from_json(const Json& j) {
  using namespace json_detail;
  check_version(j, "fpca_model");
  FpcaModel m;
  m.feature_id = j.at("feature_id").get<int>();
  m.grid = grid_from_json(j.at("grid"));
  m.mean = vector_from_json(j.at("mean"));
  m.eig.eigenvalues = vector_from_json(j.at("eigenvalues"));
  m.eig.eigenfunctions = matrix_from_json(j.at("eigenfunctions"));
  m.noise_var = j.at("noise_var").get<double>();
  m.truncation = j.at("truncation").get<int>();
  m.gamma = vector_from_json(j.at("gamma"));
  m.bandwidth_mean = j.at("bandwidth_mean").get<double>();
  m.bandwidth_cov = j.at("bandwidth_cov").get<double>();
  return m;
}

inline Json to_json(const MfpcaModel& m) {
  using namespace json_detail;
  Json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = "mfpca_model";
  Json models = Json::array();
  for (const auto& fm : m.feature_models) models.push_back(to_json(fm));
  j["feature_models"] = std::move(models);
  j["score_means"] = vector_to_json(m.score_means);
  j["xi"] = matrix_to_json(m.xi);
  j["joint_eigenvalues"] = vector_to_json(m.joint_eigenvalues);
  j["coeff_vectors"] = matrix_to_json(m.coeff_vectors);
  Json blocks = Json::array();
  for (const auto& b : m.joint_eigenfunctions) blocks.push_back(matrix_to_json(b));
  j["joint_eigenfunctions"] = std::move(blocks);
  j["truncation"] = m.truncation;
  j["offsets"] = m.offsets;
  return j;
}

inline MfpcaModel mfpca_model_from_json(const Json& j) {
  using namespace json_detail;
  check_version(j, "mfpca_model");
  MfpcaModel m;
  for (const auto& fm : j.at("feature_models"))
    m.feature_models.push_back(fpca_model_from_json(fm));
  m.score_means = vector_from_json(j.at("score_means"));
  m.xi = matrix_from_json(j.at("xi"));
  m.joint_eigenvalues = vector_from_json(j.at("joint_eigenvalues"));
  m.coeff_vectors = matrix_from_json(j.at("coeff_vectors"));
  for (const auto& b : j.at("joint_eigenfunctions"))
    m.joint_eigenfunctions.push_back(matrix_from_json(b));
  m.truncation = j.at("truncation").get<int>();
  m.offsets = j.at("offsets").get<std::vector<int>>();
  return m;
}

inline Json to_json(const FunctionalNetwork& net) {
  using namespace json_detail;
  Json j;
  j["task"] = task_name(net.task);
  j["functional"] = Json{{"coeffs", matrix_to_json(net.functional.coeffs)},
                         {"biases", vector_to_json(net.functional.biases)},
                         {"block_sizes", net.functional.block_sizes}};
  Json layers = Json::array();
  for (const auto& layer : net.dense)
    layers.push_back(Json{
        {"weights", matrix_to_json(layer.weights)},
        {"biases", vector_to_json(layer.biases)},
        {"activation",
         layer.activation == Activation::kLogistic ? "logistic" : "identity"}});
  j["dense"] = std::move(layers);
  return j;
}

inline FunctionalNetwork network_from_json(const Json& j) {
  using namespace json_detail;
  FunctionalNetwork net;
  net.task = task_from_name(j.at("task").get<std::string>());
  const Json& f = j.at("functional");
  net.functional.coeffs = matrix_from_json(f.at("coeffs"));
  net.functional.biases = vector_from_json(f.at("biases"));
  net.functional.block_sizes = f.at("block_sizes").get<std::vector<int>>();
  for (const auto& layer_json : j.at("dense")) {
    DenseLayer layer;
    layer.weights = matrix_from_json(layer_json.at("weights"));
    layer.biases = vector_from_json(layer_json.at("biases"));
    std::string act = layer_json.at("activation").get<std::string>();
    layer.activation =
        act == "logistic" ? Activation::kLogistic : Activation::kIdentity;
    net.dense.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

// One bundle per trained pipeline: FPCA or MFPCA components plus the network.
inline Json to_json(const TrainedPipeline& pipe) {
  Json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = "sfmlp_bundle";
  j["tool_version"] = kVersion;
  j["task"] = task_name(pipe.task);
  j["score_mode"] = score_mode_name(pipe.score_mode);
  j["grid"] = to_json(pipe.grid);
  if (pipe.score_mode == ScoreMode::kMfpca) {
    j["mfpca"] = to_json(*pipe.mfpca);
  } else {
    Json models = Json::array();
    for (const auto& m : pipe.fpca_models) models.push_back(to_json(m));
    j["fpca_models"] = std::move(models);
  }
  j["network"] = pipe.has_network() ? to_json(pipe.network) : Json(nullptr);
  j["loss_history"] = pipe.loss_history;
  return j;
}

inline TrainedPipeline pipeline_from_json(const Json& j) {
  json_detail::check_version(j, "sfmlp_bundle");
  TrainedPipeline pipe;
  pipe.task = task_from_name(j.at("task").get<std::string>());
  pipe.score_mode = score_mode_from_name(j.at("score_mode").get<std::string>());
  pipe.grid = grid_from_json(j.at("grid"));
  if (pipe.score_mode == ScoreMode::kMfpca) {
    pipe.mfpca = mfpca_model_from_json(j.at("mfpca"));
  } else {
    for (const auto& m : j.at("fpca_models"))
      pipe.fpca_models.push_back(fpca_model_from_json(m));
  }
  if (j.contains("network") && !j.at("network").is_null())
    pipe.network = network_from_json(j.at("network"));
  if (j.contains("loss_history"))
    pipe.loss_history = j.at("loss_history").get<std::vector<double>>();
  return pipe;
}

// Write-temp-then-rename so partial files never appear under the final name.
inline void atomic_write_text(const std::string& path,
                              const std::string& content) {
  std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

inline void save_json(const std::string& path, const Json& j) {
  atomic_write_text(path, j.dump(2) + "\n");
}

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  Json j;
  in >> j;
  return j;
}

// Reproducibility manifest: seed, canonical config and its hash, versions.
inline Json make_manifest(const Json& config, std::uint64_t seed) {
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config.dump())));
  Json j;
  j["format_version"] = kModelFormatVersion;
  j["tool_version"] = kVersion;
  j["seed"] = seed;
  j["config"] = config;
  j["config_hash"] = std::string(hash);
  return j;
}

}  // namespace sfmlp
