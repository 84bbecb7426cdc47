// Command-line front end for the sparse functional MLP pipeline. Batch-only:
// every run writes its artifacts plus a reproducibility manifest and exits.
// Exit codes: 0 success, 1 usage error, 2 data/runtime error.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sfmlp/sfmlp.hpp"

namespace fs = std::filesystem;
using namespace sfmlp;

namespace {

struct GridSpec {
  double t0 = 0.0, t1 = 1.0;
  std::size_t size = 101;
  TimeGrid make() const { return TimeGrid(t0, t1, size); }
};

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (double v : parse_double_list(s)) out.push_back(static_cast<int>(v));
  return out;
}

struct InputOptions {
  std::string data_path;
  std::string labels_path;
  std::string format = "long";  // long | cmapss
  int window = 31;
  double rul_cap = 130.0;
  bool detrend_conditions = false;
  std::string task = "auto";  // auto | regression | classification
  bool minmax = false;
};

void add_input_options(CLI::App* cmd, InputOptions& in) {
  cmd->add_option("-i,--input", in.data_path, "input data file")->required();
  cmd->add_option("--labels", in.labels_path, "label CSV (subject,label)");
  cmd->add_option("--format", in.format, "input format: long | cmapss")
      ->check(CLI::IsMember({"long", "cmapss"}));
  cmd->add_option("--window", in.window, "cmapss: sliding window length");
  cmd->add_option("--rul-cap", in.rul_cap, "cmapss: piecewise RUL cap");
  cmd->add_flag("--detrend-conditions", in.detrend_conditions,
                "cmapss: remove per-condition-cluster sensor levels");
  cmd->add_option("--task", in.task,
                  "task override: auto | regression | classification")
      ->check(CLI::IsMember({"auto", "regression", "classification"}));
  cmd->add_flag("--minmax", in.minmax, "min-max normalize features to [0,1]");
}

std::optional<Task> task_override(const std::string& s) {
  if (s == "regression") return Task::kRegression;
  if (s == "classification") return Task::kBinaryClassification;
  return std::nullopt;
}

FunctionalDataset load_input(const InputOptions& in, const TimeGrid& grid,
                             LoadReport* report = nullptr) {
  FunctionalDataset ds;
  if (in.format == "cmapss") {
    ds = load_cmapss(in.data_path, grid, in.window, in.rul_cap,
                     in.detrend_conditions, report);
  } else if (!in.labels_path.empty()) {
    ds = load_long_csv(in.data_path, in.labels_path, grid,
                       task_override(in.task), report);
  } else {
    ds = load_long_csv_unlabeled(
        in.data_path, grid, task_override(in.task).value_or(Task::kRegression),
        report);
  }
  if (in.minmax) ds = minmax_normalize(ds).first;
  return ds;
}

Json input_config_json(const InputOptions& in) {
  return Json{{"input", in.data_path},   {"labels", in.labels_path},
              {"format", in.format},     {"window", in.window},
              {"rul_cap", in.rul_cap},   {"detrend", in.detrend_conditions},
              {"task", in.task},         {"minmax", in.minmax}};
}

struct PipelineFlags {
  double fve = 0.80;
  int fixed_p = 0;
  double bw_mean = 0.0;
  double bw_cov = 0.0;
  int max_components = 0;
  std::string score_mode = "univariate";
  double joint_fve = 0.80;
  int joint_p = 0;
  int neurons = 4;
  std::string dense = "2";
  double learning_rate = 0.5;
  int epochs = 500;
  int batch_size = 0;

  PipelineConfig make(std::uint64_t seed) const {
    PipelineConfig cfg;
    cfg.fpca.fve_cutoff = fve;
    cfg.fpca.fixed_components = fixed_p;
    cfg.fpca.bandwidth_mean = bw_mean;
    cfg.fpca.bandwidth_cov = bw_cov;
    cfg.fpca.max_components = max_components;
    cfg.score_mode = score_mode_from_name(score_mode);
    cfg.joint_fve = joint_fve;
    cfg.joint_fixed = joint_p;
    cfg.functional_neurons = neurons;
    cfg.dense_sizes = parse_int_list(dense);
    cfg.train.learning_rate = learning_rate;
    cfg.train.epochs = epochs;
    cfg.train.batch_size = batch_size;
    cfg.train.seed = seed;
    return cfg;
  }

  Json to_config_json() const {
    return Json{{"fve", fve},
                {"fixed_p", fixed_p},
                {"bw_mean", bw_mean},
                {"bw_cov", bw_cov},
                {"max_components", max_components},
                {"score_mode", score_mode},
                {"joint_fve", joint_fve},
                {"joint_p", joint_p},
                {"neurons", neurons},
                {"dense", dense},
                {"learning_rate", learning_rate},
                {"epochs", epochs},
                {"batch_size", batch_size}};
  }
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& p, bool with_training) {
  cmd->add_option("--fve", p.fve, "fraction-of-variance cutoff (default 0.80)");
  cmd->add_option("--fixed-p", p.fixed_p,
                  "fixed component count (overrides FVE)");
  cmd->add_option("--bw-mean", p.bw_mean, "mean bandwidth (0 = cross-validated)");
  cmd->add_option("--bw-cov", p.bw_cov,
                  "covariance bandwidth (0 = cross-validated)");
  cmd->add_option("--max-components", p.max_components,
                  "cap on retained eigencomponents (0 = grid size)");
  cmd->add_option("--score-mode", p.score_mode, "univariate | mfpca")
      ->check(CLI::IsMember({"univariate", "mfpca"}));
  cmd->add_option("--joint-fve", p.joint_fve, "joint FVE cutoff (mfpca mode)");
  cmd->add_option("--joint-p", p.joint_p, "fixed joint component count");
  if (with_training) {
    cmd->add_option("--neurons", p.neurons, "functional neurons (default 4)");
    cmd->add_option("--dense", p.dense,
                    "hidden dense layer sizes, comma-separated (default 2)");
    cmd->add_option("--lr", p.learning_rate, "learning rate (default 0.5)");
    cmd->add_option("--epochs", p.epochs, "training epochs (default 500)");
    cmd->add_option("--batch", p.batch_size, "batch size (0 = full batch)");
  }
}

void add_grid_option(CLI::App* cmd, GridSpec& grid) {
  cmd->add_option_function<std::string>(
      "--grid",
      [&grid](const std::string& s) {
        auto v = parse_double_list(s);
        if (v.size() != 3)
          throw CLI::ValidationError("--grid", "expected t0,t1,points");
        grid.t0 = v[0];
        grid.t1 = v[1];
        grid.size = static_cast<std::size_t>(v[2]);
      },
      "evaluation grid as t0,t1,points (default 0,1,101)");
}

void write_manifest(const fs::path& path, const Json& config,
                    std::uint64_t seed) {
  save_json(path.string(), make_manifest(config, seed));
}

std::string scores_csv(const TrainedPipeline& pipe,
                       const FunctionalDataset& ds) {
  Eigen::MatrixXd scores = pipeline_scores_matrix(pipe, ds);
  std::string out = "subject";
  for (Eigen::Index p = 0; p < scores.cols(); ++p)
    out += ",score_" + std::to_string(p + 1);
  out += '\n';
  for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
    out += ds.subject_ids[i];
    for (Eigen::Index p = 0; p < scores.cols(); ++p) {
      out += ',';
      out += io_detail::format_double(scores(static_cast<Eigen::Index>(i), p));
    }
    out += '\n';
  }
  return out;
}

// Fits FPCA (and MFPCA when requested) without touching the network.
TrainedPipeline fit_components(const FunctionalDataset& ds,
                               const PipelineConfig& config) {
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
  if (config.score_mode == ScoreMode::kMfpca)
    pipe.mfpca =
        fit_mfpca(models, scores, config.joint_fve, config.joint_fixed);
  else
    pipe.fpca_models = std::move(models);
  return pipe;
}

int run_simulate(const std::string& out_dir, const std::string& preset,
                 const std::string& means, const std::string& eigenvalues,
                 double noise_sd, int n_per_group, int points, GridSpec grid,
                 const std::string& task, const std::string& response_weights,
                 double response_noise, std::uint64_t seed) {
  KlConfig cfg;
  if (preset == "two-sine") {
    cfg = KlConfig::two_sine(seed);
  } else {
    for (const auto& group : CLI::detail::split(means, ';')) {
      auto v = parse_double_list(group);
      if (v.size() != 3)
        throw std::runtime_error("--means groups must be a,b,c triples");
      cfg.groups.push_back({v[0], v[1], v[2]});
    }
    auto ev = parse_double_list(eigenvalues);
    cfg.eigenvalues = Eigen::Map<Eigen::VectorXd>(
        ev.data(), static_cast<Eigen::Index>(ev.size()));
    cfg.noise_sd = noise_sd;
    cfg.seed = seed;
    cfg.task =
        task == "regression" ? Task::kRegression : Task::kBinaryClassification;
    if (!response_weights.empty()) {
      auto w = parse_double_list(response_weights);
      cfg.response_weights = Eigen::Map<Eigen::VectorXd>(
          w.data(), static_cast<Eigen::Index>(w.size()));
    }
    cfg.response_noise_sd = response_noise;
  }
  if (n_per_group > 0) cfg.n_per_group = n_per_group;
  if (points > 0) cfg.points_per_curve = points;

  auto g = grid.make();
  auto sim = generate(cfg, g);
  fs::create_directories(out_dir);
  atomic_write_text((fs::path(out_dir) / "data.csv").string(),
                    to_long_csv(sim.dataset));
  atomic_write_text((fs::path(out_dir) / "labels.csv").string(),
                    to_labels_csv(sim.dataset));
  std::string truth = "subject,time,value\n";
  for (std::size_t i = 0; i < sim.dataset.n_subjects(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) {
      truth += sim.dataset.subject_ids[i];
      truth += ',';
      truth += io_detail::format_double(g.points()[j]);
      truth += ',';
      truth += io_detail::format_double(
          sim.truth[i].curve_on_grid[static_cast<Eigen::Index>(j)]);
      truth += '\n';
    }
  atomic_write_text((fs::path(out_dir) / "truth.csv").string(), truth);

  Json config{
      {"subcommand", "simulate"},
      {"preset", preset},
      {"n_per_group", cfg.n_per_group},
      {"points_per_curve", cfg.points_per_curve},
      {"noise_sd", cfg.noise_sd},
      {"task", task_name(cfg.task)},
      {"grid", Json{{"t0", grid.t0}, {"t1", grid.t1}, {"size", grid.size}}}};
  write_manifest(fs::path(out_dir) / "manifest.json", config, seed);
  std::cout << "wrote " << sim.dataset.n_subjects() << " subjects to "
            << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "sparse functional MLP pipeline (FPCA scores + functional network)"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "master seed (default 0)");

  // ---- simulate ----------------------------------------------------------
  auto* sim_cmd =
      app.add_subcommand("simulate", "generate a synthetic sparse curve dataset");
  std::string sim_out, sim_preset = "two-sine", sim_means, sim_eigen;
  std::string sim_task = "classification", sim_weights;
  double sim_noise = 0.3, sim_resp_noise = 0.0;
  int sim_n = 0, sim_points = 0;
  GridSpec sim_grid;
  sim_cmd->add_option("-o,--out", sim_out, "output directory")->required();
  sim_cmd->add_option("--preset", sim_preset,
                      "two-sine (benchmark config) | custom")
      ->check(CLI::IsMember({"two-sine", "custom"}));
  sim_cmd->add_option("--means", sim_means,
                      "custom: per-group mean a,b,c for a*sin(b*pi*t)+c; "
                      "groups separated by ';'");
  sim_cmd->add_option("--eigenvalues", sim_eigen, "custom: comma list");
  sim_cmd->add_option("--noise-sd", sim_noise, "observation noise sd");
  sim_cmd->add_option("--n-per-group", sim_n, "subjects per group");
  sim_cmd->add_option("--points", sim_points, "observations per curve");
  sim_cmd->add_option("--task", sim_task, "classification | regression")
      ->check(CLI::IsMember({"classification", "regression"}));
  sim_cmd->add_option("--response-weights", sim_weights,
                      "regression: weights on the KL scores");
  sim_cmd->add_option("--response-noise", sim_resp_noise,
                      "regression: response noise sd");
  add_grid_option(sim_cmd, sim_grid);

  // ---- fpca --------------------------------------------------------------
  auto* fpca_cmd = app.add_subcommand(
      "fpca", "fit FPCA components (and MFPCA) and write a model bundle");
  InputOptions fpca_in;
  PipelineFlags fpca_flags;
  GridSpec fpca_grid;
  std::string fpca_out;
  add_input_options(fpca_cmd, fpca_in);
  add_pipeline_flags(fpca_cmd, fpca_flags, false);
  add_grid_option(fpca_cmd, fpca_grid);
  fpca_cmd->add_option("-o,--out", fpca_out, "output model JSON")->required();

  // ---- scores ------------------------------------------------------------
  auto* scores_cmd = app.add_subcommand(
      "scores", "compute conditional scores for every subject");
  InputOptions scores_in;
  std::string scores_model, scores_out;
  add_input_options(scores_cmd, scores_in);
  scores_cmd->add_option("--model", scores_model, "model bundle JSON")
      ->required();
  scores_cmd->add_option("-o,--out", scores_out, "output CSV")->required();

  // ---- train -------------------------------------------------------------
  auto* train_cmd = app.add_subcommand(
      "train", "fit the pipeline (or reuse a bundle) and train the network");
  InputOptions train_in;
  PipelineFlags train_flags;
  GridSpec train_grid;
  std::string train_model, train_out;
  add_input_options(train_cmd, train_in);
  add_pipeline_flags(train_cmd, train_flags, true);
  add_grid_option(train_cmd, train_grid);
  train_cmd->add_option("--model", train_model,
                        "existing bundle whose components are reused");
  train_cmd->add_option("-o,--out", train_out, "output bundle JSON")
      ->required();

  // ---- predict -----------------------------------------------------------
  auto* predict_cmd =
      app.add_subcommand("predict", "predict responses with a trained bundle");
  InputOptions predict_in;
  std::string predict_model, predict_out;
  add_input_options(predict_cmd, predict_in);
  predict_cmd->add_option("--model", predict_model, "trained bundle JSON")
      ->required();
  predict_cmd->add_option("-o,--out", predict_out, "output CSV")->required();

  // ---- evaluate ----------------------------------------------------------
  auto* eval_cmd = app.add_subcommand(
      "evaluate", "cross-validate the pipeline and report metrics");
  InputOptions eval_in;
  PipelineFlags eval_flags;
  GridSpec eval_grid;
  std::string eval_out;
  double eval_holdout = -1.0;
  int eval_kfold = 0;
  bool eval_loo = false, eval_no_refit = false;
  add_input_options(eval_cmd, eval_in);
  add_pipeline_flags(eval_cmd, eval_flags, true);
  add_grid_option(eval_cmd, eval_grid);
  eval_cmd->add_option("--holdout", eval_holdout, "holdout test fraction");
  eval_cmd->add_option("--kfold", eval_kfold, "number of folds");
  eval_cmd->add_flag("--loo", eval_loo, "leave-one-out");
  eval_cmd->add_flag("--no-refit-fpca", eval_no_refit,
                     "reuse the full-data FPCA basis across folds");
  eval_cmd->add_option("-o,--out", eval_out, "output directory")->required();

  // ---- interpolate -------------------------------------------------------
  auto* interp_cmd = app.add_subcommand(
      "interpolate", "per-subject interpolators on the grid (+ RMSE vs truth)");
  InputOptions interp_in;
  GridSpec interp_grid;
  PipelineFlags interp_flags;
  std::string interp_truth, interp_out, interp_methods = "spline,gp,pace";
  add_input_options(interp_cmd, interp_in);
  add_pipeline_flags(interp_cmd, interp_flags, false);
  add_grid_option(interp_cmd, interp_grid);
  interp_cmd->add_option("--truth", interp_truth,
                         "truth CSV (subject,time,value) for RMSE");
  interp_cmd->add_option("--methods", interp_methods,
                         "comma list from spline,gp,pace");
  interp_cmd->add_option("-o,--out", interp_out, "output directory")
      ->required();

  // ---- sparsify ----------------------------------------------------------
  auto* sparsify_cmd = app.add_subcommand(
      "sparsify", "randomly keep a fraction of each curve's points");
  InputOptions sparsify_in;
  GridSpec sparsify_grid;
  std::string sparsify_out;
  double sparsify_keep = 0.3;
  bool sparsify_keep_last = false;
  add_input_options(sparsify_cmd, sparsify_in);
  add_grid_option(sparsify_cmd, sparsify_grid);
  sparsify_cmd->add_option("--keep", sparsify_keep, "keep fraction in (0,1]")
      ->required();
  sparsify_cmd->add_flag("--keep-last", sparsify_keep_last,
                         "always keep each curve's final observation");
  sparsify_cmd->add_option("-o,--out", sparsify_out, "output directory")
      ->required();

  // ---- count-params ------------------------------------------------------
  auto* count_cmd = app.add_subcommand(
      "count-params", "parameter counts of the compared architectures");
  std::string count_kind;
  long count_hidden = 0, count_features = 0, count_coeffs = 2;
  count_cmd->add_option("--kind", count_kind, "rnn | lstm | gru | fmlp")
      ->required()
      ->check(CLI::IsMember({"rnn", "lstm", "gru", "fmlp"}));
  count_cmd->add_option("--hidden", count_hidden, "hidden units / neurons")
      ->required();
  count_cmd->add_option("--features", count_features, "input features")
      ->required();
  count_cmd->add_option("--coeffs", count_coeffs,
                        "fmlp: coefficients per weight function (default 2)");

  // ---- label-rul ---------------------------------------------------------
  auto* rul_cmd =
      app.add_subcommand("label-rul", "piecewise remaining-useful-life label");
  double rul_linear = 0.0, rul_cap = 130.0;
  rul_cmd->add_option("--linear", rul_linear, "linear RUL in cycles")
      ->required();
  rul_cmd->add_option("--cap", rul_cap, "cap T (default 130)");

  // --seed may appear after the subcommand name
  for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; }))
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n"
              << "run with --help for usage\n";
    return 1;
  }

  try {
    if (*sim_cmd)
      return run_simulate(sim_out, sim_preset, sim_means, sim_eigen, sim_noise,
                          sim_n, sim_points, sim_grid, sim_task, sim_weights,
                          sim_resp_noise, seed);

    if (*fpca_cmd) {
      auto grid = fpca_grid.make();
      auto ds = load_input(fpca_in, grid);
      auto cfg = fpca_flags.make(seed);
      auto pipe = fit_components(ds, cfg);
      save_json(fpca_out, to_json(pipe));
      Json config{{"subcommand", "fpca"},
                  {"input", input_config_json(fpca_in)},
                  {"pipeline", fpca_flags.to_config_json()}};
      write_manifest(fs::path(fpca_out).string() + ".manifest.json", config,
                     seed);
      for (const auto& m : pipe.feature_models())
        std::cout << "feature " << (m.feature_id + 1)
                  << ": P = " << m.truncation
                  << ", noise_var = " << m.noise_var << "\n";
      if (pipe.mfpca)
        std::cout << "joint components: " << pipe.mfpca->truncation << "\n";
      return 0;
    }

    if (*scores_cmd) {
      auto pipe = pipeline_from_json(load_json(scores_model));
      auto ds = load_input(scores_in, pipe.grid);
      atomic_write_text(scores_out, scores_csv(pipe, ds));
      std::cout << "wrote scores for " << ds.n_subjects() << " subjects\n";
      return 0;
    }

    if (*train_cmd) {
      auto grid = train_grid.make();
      auto ds = load_input(train_in, grid);
      auto cfg = train_flags.make(seed);
      TrainedPipeline pipe;
      if (!train_model.empty()) {
        pipe = pipeline_from_json(load_json(train_model));
        Eigen::MatrixXd inputs = pipeline_scores_matrix(pipe, ds);
        Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(
            ds.responses.data(),
            static_cast<Eigen::Index>(ds.responses.size()));
        std::vector<int> blocks;
        if (pipe.score_mode == ScoreMode::kMfpca) {
          blocks = {pipe.mfpca->truncation};
        } else {
          for (const auto& m : pipe.fpca_models) blocks.push_back(m.truncation);
        }
        pipe.task = ds.task;
        auto net = init_network(cfg.functional_neurons, cfg.dense_sizes, blocks,
                                ds.task, cfg.train.seed);
        TrainConfig tc = cfg.train;
        tc.loss = default_loss(ds.task);
        auto result = train(std::move(net), inputs, y, tc);
        pipe.network = std::move(result.network);
        pipe.loss_history = std::move(result.loss_history);
      } else {
        pipe = fit_pipeline(ds, cfg);
      }
      save_json(train_out, to_json(pipe));
      Json config{{"subcommand", "train"},
                  {"input", input_config_json(train_in)},
                  {"pipeline", train_flags.to_config_json()},
                  {"reused_model", train_model}};
      write_manifest(fs::path(train_out).string() + ".manifest.json", config,
                     seed);
      std::cout << "final training loss = " << pipe.loss_history.back()
                << "\n";
      return 0;
    }

    if (*predict_cmd) {
      auto pipe = pipeline_from_json(load_json(predict_model));
      if (!pipe.has_network())
        throw std::runtime_error("bundle has no trained network (run train)");
      predict_in.task =
          pipe.task == Task::kRegression ? "regression" : "classification";
      auto ds = load_input(predict_in, pipe.grid);
      std::string out = pipe.task == Task::kBinaryClassification
                            ? "subject,probability,label\n"
                            : "subject,prediction\n";
      for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
        auto pred = predict_pipeline(pipe, ds.curves[i]);
        out += ds.subject_ids[i];
        out += ',';
        if (pipe.task == Task::kBinaryClassification) {
          out += io_detail::format_double(pred.probability);
          out += ',';
          out += std::to_string(pred.label);
        } else {
          out += io_detail::format_double(pred.value);
        }
        out += '\n';
      }
      atomic_write_text(predict_out, out);
      std::cout << "wrote predictions for " << ds.n_subjects() << " subjects\n";
      return 0;
    }

    if (*eval_cmd) {
      auto grid = eval_grid.make();
      auto ds = load_input(eval_in, grid);
      CvPlan plan;
      if (eval_loo) {
        plan = CvPlan::leave_one_out();
      } else if (eval_kfold > 0) {
        plan = CvPlan::k_fold(eval_kfold, seed);
      } else {
        plan = CvPlan::holdout(eval_holdout > 0 ? eval_holdout : 0.2, seed);
      }
      plan.seed = seed;
      plan.refit_fpca_per_fold = !eval_no_refit;
      auto cfg = eval_flags.make(seed);
      auto result = crossvalidate(ds, cfg, plan);
      for (const auto& w : result.warnings)
        std::cerr << "warning: " << w << "\n";

      fs::create_directories(eval_out);
      std::string folds_csv = "fold,n_test,skipped,rmse,accuracy,tp,fp,fn,tn\n";
      for (std::size_t f = 0; f < result.folds.size(); ++f) {
        const auto& fr = result.folds[f];
        folds_csv += std::to_string(f) + "," +
                     std::to_string(fr.test_subjects.size()) + "," +
                     (fr.skipped ? "1" : "0") + ",";
        if (fr.skipped) {
          folds_csv += ",,,,,\n";
        } else if (ds.task == Task::kRegression) {
          folds_csv += io_detail::format_double(fr.metrics.rmse) + ",,,,,\n";
        } else {
          folds_csv += "," + io_detail::format_double(fr.metrics.accuracy) +
                       "," + std::to_string(fr.metrics.tp) + "," +
                       std::to_string(fr.metrics.fp) + "," +
                       std::to_string(fr.metrics.fn) + "," +
                       std::to_string(fr.metrics.tn) + "\n";
        }
      }
      atomic_write_text((fs::path(eval_out) / "folds.csv").string(), folds_csv);

      const char* metric_name =
          ds.task == Task::kRegression ? "rmse" : "accuracy";
      Json summary{{"metric", metric_name},
                   {"mean", result.aggregate_mean},
                   {"sd", result.aggregate_sd},
                   {"folds", result.folds.size()},
                   {"skipped_folds", result.skipped_folds},
                   {"warnings", result.warnings}};
      save_json((fs::path(eval_out) / "summary.json").string(), summary);
      Json config{{"subcommand", "evaluate"},
                  {"input", input_config_json(eval_in)},
                  {"pipeline", eval_flags.to_config_json()},
                  {"plan", Json{{"holdout", eval_holdout},
                                {"kfold", eval_kfold},
                                {"loo", eval_loo},
                                {"refit_fpca_per_fold",
                                 plan.refit_fpca_per_fold}}}};
      write_manifest(fs::path(eval_out) / "manifest.json", config, seed);
      std::cout << metric_name << " mean = " << result.aggregate_mean
                << ", sd = " << result.aggregate_sd << " over "
                << result.folds.size() - result.skipped_folds << " folds\n";
      return 0;
    }

    if (*interp_cmd) {
      auto grid = interp_grid.make();
      auto ds = load_input(interp_in, grid);
      auto methods = CLI::detail::split(interp_methods, ',');
      fs::create_directories(interp_out);

      std::map<std::string, std::vector<Eigen::VectorXd>> fits;
      for (const auto& method : methods) {
        std::vector<Eigen::VectorXd> per_subject;
        if (method == "spline") {
          for (std::size_t i = 0; i < ds.n_subjects(); ++i)
            per_subject.push_back(spline_interp(ds.curve(i, 0), grid));
        } else if (method == "gp") {
          for (std::size_t i = 0; i < ds.n_subjects(); ++i)
            per_subject.push_back(gp_interp(ds.curve(i, 0), grid));
        } else if (method == "pace") {
          auto cfg = interp_flags.make(seed);
          auto fit = fit_fpca(ds.feature_curves(0), grid, cfg.fpca);
          for (std::size_t i = 0; i < ds.n_subjects(); ++i)
            per_subject.push_back(reconstruct(
                fit.scores.scores.row(static_cast<Eigen::Index>(i)).transpose(),
                fit.model));
        } else {
          throw std::runtime_error("unknown interpolation method: " + method);
        }
        fits[method] = std::move(per_subject);
      }

      std::string values_csv = "method,subject,time,value\n";
      for (const auto& [method, per_subject] : fits)
        for (std::size_t i = 0; i < ds.n_subjects(); ++i)
          for (std::size_t g = 0; g < grid.size(); ++g)
            values_csv += method + "," + ds.subject_ids[i] + "," +
                          io_detail::format_double(grid.points()[g]) + "," +
                          io_detail::format_double(
                              per_subject[i][static_cast<Eigen::Index>(g)]) +
                          "\n";
      atomic_write_text((fs::path(interp_out) / "interp_values.csv").string(),
                        values_csv);

      if (!interp_truth.empty()) {
        auto truth_ds = load_long_csv_unlabeled(interp_truth, grid);
        std::vector<Eigen::VectorXd> truth;
        for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
          const auto& subject = ds.subject_ids[i];
          bool found = false;
          for (std::size_t k = 0; k < truth_ds.n_subjects(); ++k)
            if (truth_ds.subject_ids[k] == subject) {
              const auto& c = truth_ds.curve(k, 0);
              if (c.size() != grid.size())
                throw std::runtime_error(
                    "truth grid does not match --grid for subject " + subject);
              truth.emplace_back(Eigen::Map<const Eigen::VectorXd>(
                  c.values.data(), static_cast<Eigen::Index>(c.size())));
              found = true;
              break;
            }
          if (!found)
            throw std::runtime_error("no truth rows for subject " + subject);
        }
        std::string rmse_csv = "method,avg_rmse\n";
        for (const auto& [method, per_subject] : fits) {
          double r = interp_rmse(per_subject, truth);
          rmse_csv += method + "," + io_detail::format_double(r) + "\n";
          std::cout << method << " avg RMSE = " << r << "\n";
        }
        atomic_write_text((fs::path(interp_out) / "interp_rmse.csv").string(),
                          rmse_csv);
      }
      Json config{{"subcommand", "interpolate"},
                  {"input", input_config_json(interp_in)},
                  {"methods", interp_methods}};
      write_manifest(fs::path(interp_out) / "manifest.json", config, seed);
      return 0;
    }

    if (*sparsify_cmd) {
      auto grid = sparsify_grid.make();
      auto ds = load_input(sparsify_in, grid);
      auto sparse = sparsify(ds, sparsify_keep, seed, sparsify_keep_last);
      fs::create_directories(sparsify_out);
      atomic_write_text((fs::path(sparsify_out) / "data.csv").string(),
                        to_long_csv(sparse));
      atomic_write_text((fs::path(sparsify_out) / "labels.csv").string(),
                        to_labels_csv(sparse));
      Json config{{"subcommand", "sparsify"},
                  {"input", input_config_json(sparsify_in)},
                  {"keep", sparsify_keep},
                  {"keep_last", sparsify_keep_last}};
      write_manifest(fs::path(sparsify_out) / "manifest.json", config, seed);
      std::cout << "kept fraction " << sparsify_keep << " of each curve\n";
      return 0;
    }

    if (*count_cmd) {
      ModelKind kind = ModelKind::kRnn;
      if (count_kind == "lstm") kind = ModelKind::kLstm;
      if (count_kind == "gru") kind = ModelKind::kGru;
      if (count_kind == "fmlp") kind = ModelKind::kFmlp;
      long q = kind == ModelKind::kFmlp ? count_coeffs : 0;
      std::cout << count_params(kind, count_hidden, count_features, q) << "\n";
      return 0;
    }

    if (*rul_cmd) {
      std::cout << piecewise_rul_label(rul_linear, rul_cap) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
