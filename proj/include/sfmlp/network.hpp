#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfmlp/curve.hpp"
#include "sfmlp/grid.hpp"
#include "sfmlp/rng.hpp"

namespace sfmlp {

enum class Activation { kLogistic, kIdentity };

inline double activate(Activation a, double u) {
  return a == Activation::kLogistic ? 1.0 / (1.0 + std::exp(-u)) : u;
}

enum class Loss { kMse, kCrossEntropy };

// First layer of the functional MLP: each neuron integrates weight functions
// against the functional inputs. With weight functions expanded in the same
// orthonormal basis as the inputs, the integral collapses to a dot product of
// coefficients and scores, so the layer acts densely on the stacked scores.
struct FunctionalLayer {
  Eigen::MatrixXd coeffs;       // K x P_total (beta)
  Eigen::VectorXd biases;       // K
  std::vector<int> block_sizes; // scores per feature

  int input_size() const {
    return std::accumulate(block_sizes.begin(), block_sizes.end(), 0);
  }
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;
  Activation activation = Activation::kLogistic;
};

struct FunctionalNetwork {
  FunctionalLayer functional;
  std::vector<DenseLayer> dense;
  Task task = Task::kRegression;

  void validate() const {
    if (functional.coeffs.rows() != functional.biases.size())
      throw std::invalid_argument("FunctionalNetwork: functional layer shape");
    if (functional.coeffs.cols() != functional.input_size())
      throw std::invalid_argument(
          "FunctionalNetwork: coefficient blocks do not match input size");
    if (dense.empty())
      throw std::invalid_argument("FunctionalNetwork: no dense layers");
    Eigen::Index width = functional.coeffs.rows();
    for (const auto& layer : dense) {
      if (layer.weights.cols() != width ||
          layer.weights.rows() != layer.biases.size())
        throw std::invalid_argument("FunctionalNetwork: dense layer shape");
      width = layer.weights.rows();
    }
    if (width != 1)
      throw std::invalid_argument("FunctionalNetwork: output must be scalar");
  }
};

// Glorot-uniform weights, zero biases, deterministic in the seed. Hidden
// layers are logistic; the output activation follows the task.
inline FunctionalNetwork init_network(int n_functional,
                                      const std::vector<int>& dense_sizes,
                                      const std::vector<int>& block_sizes,
                                      Task task, std::uint64_t seed) {
  if (n_functional < 1)
    throw std::invalid_argument("init_network: need at least one neuron");
  for (int b : block_sizes)
    if (b < 1) throw std::invalid_argument("init_network: empty score block");
  FunctionalNetwork net;
  net.task = task;
  net.functional.block_sizes = block_sizes;
  int p_total = net.functional.input_size();

  CounterRng rng(seed, 0x11);
  auto glorot = [&](Eigen::MatrixXd& m, int fan_in, int fan_out) {
    double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        m(r, c) = a * (2.0 * rng.uniform() - 1.0);
  };

  net.functional.coeffs.resize(n_functional, p_total);
  glorot(net.functional.coeffs, p_total, n_functional);
  net.functional.biases = Eigen::VectorXd::Zero(n_functional);

  std::vector<int> widths;
  widths.push_back(n_functional);
  for (int s : dense_sizes) {
    if (s < 1) throw std::invalid_argument("init_network: empty dense layer");
    widths.push_back(s);
  }
  widths.push_back(1);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer;
    layer.weights.resize(widths[l + 1], widths[l]);
    glorot(layer.weights, widths[l], widths[l + 1]);
    layer.biases = Eigen::VectorXd::Zero(widths[l + 1]);
    bool is_output = (l + 2 == widths.size());
    layer.activation = is_output && task == Task::kRegression
                           ? Activation::kIdentity
                           : Activation::kLogistic;
    net.dense.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

inline double forward_scores(const FunctionalNetwork& net,
                             const Eigen::VectorXd& scores) {
  if (scores.size() != net.functional.coeffs.cols())
    throw std::invalid_argument("forward_scores: score length mismatch");
  Eigen::VectorXd x =
      net.functional.biases + net.functional.coeffs * scores;
  for (Eigen::Index k = 0; k < x.size(); ++k)
    x[k] = activate(Activation::kLogistic, x[k]);
  for (const auto& layer : net.dense) {
    Eigen::VectorXd u = layer.weights * x + layer.biases;
    for (Eigen::Index k = 0; k < u.size(); ++k)
      u[k] = activate(layer.activation, u[k]);
    x = std::move(u);
  }
  return x[0];
}

// One basis block per feature for the quadrature forward path. The rows
// evaluate basis functions on the grid; offset locates the coefficient and
// score slice of this feature in the stacked vectors.
struct QuadratureBasis {
  const Eigen::MatrixXd* rows = nullptr;
  int offset = 0;
};

// Forward pass that materializes the weight functions and inputs on the grid
// and integrates their product with the trapezoid weights. With both factors
// expanded in a discretely orthonormal basis this matches forward_scores to
// numerical precision; it exists as the oracle for that identity and for
// non-eigen bases.
inline double forward_quadrature(const FunctionalNetwork& net,
                                 const TimeGrid& grid,
                                 const std::vector<QuadratureBasis>& basis,
                                 const Eigen::VectorXd& scores) {
  if (scores.size() != net.functional.coeffs.cols())
    throw std::invalid_argument("forward_quadrature: score length mismatch");
  auto k_count = net.functional.coeffs.rows();
  Eigen::VectorXd x(k_count);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    double acc = net.functional.biases[k];
    for (const auto& b : basis) {
      const Eigen::MatrixXd& rows = *b.rows;
      auto nb = rows.rows();
      if (static_cast<std::size_t>(rows.cols()) != grid.size())
        throw std::invalid_argument("forward_quadrature: basis/grid mismatch");
      Eigen::VectorXd weight_fn =
          rows.transpose() *
          net.functional.coeffs.row(k).segment(b.offset, nb).transpose();
      Eigen::VectorXd input_fn =
          rows.transpose() * scores.segment(b.offset, nb);
      acc += grid.inner(
          std::span<const double>(weight_fn.data(), static_cast<std::size_t>(weight_fn.size())),
          std::span<const double>(input_fn.data(), static_cast<std::size_t>(input_fn.size())));
    }
    x[k] = activate(Activation::kLogistic, acc);
  }
  for (const auto& layer : net.dense) {
    Eigen::VectorXd u = layer.weights * x + layer.biases;
    for (Eigen::Index k = 0; k < u.size(); ++k)
      u[k] = activate(layer.activation, u[k]);
    x = std::move(u);
  }
  return x[0];
}

struct Gradients {
  Eigen::MatrixXd func_coeffs;
  Eigen::VectorXd func_biases;
  std::vector<Eigen::MatrixXd> dense_weights;
  std::vector<Eigen::VectorXd> dense_biases;
  double loss = 0.0;
};

namespace net_detail {

inline double clamp_prob(double p) {
  return std::clamp(p, 1e-12, 1.0 - 1e-12);
}

inline double sample_loss(Loss loss, double yhat, double y) {
  if (loss == Loss::kMse) return (yhat - y) * (yhat - y);
  double p = clamp_prob(yhat);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

}  // namespace net_detail

// Analytic batch gradients (mean loss over the batch) for all coefficients,
// biases and dense parameters, plus the loss value.
inline Gradients backward(const FunctionalNetwork& net,
                          const Eigen::MatrixXd& batch_scores,
                          const Eigen::VectorXd& batch_y, Loss loss) {
  auto b = batch_scores.rows();
  if (b == 0) throw std::invalid_argument("backward: empty batch");
  if (batch_y.size() != b)
    throw std::invalid_argument("backward: batch size mismatch");
  if (loss == Loss::kCrossEntropy &&
      net.dense.back().activation != Activation::kLogistic)
    throw std::invalid_argument(
        "backward: cross-entropy requires a logistic output");

  Gradients g;
  g.func_coeffs = Eigen::MatrixXd::Zero(net.functional.coeffs.rows(),
                                        net.functional.coeffs.cols());
  g.func_biases = Eigen::VectorXd::Zero(net.functional.biases.size());
  for (const auto& layer : net.dense) {
    g.dense_weights.emplace_back(
        Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
    g.dense_biases.emplace_back(Eigen::VectorXd::Zero(layer.biases.size()));
  }

  double inv_b = 1.0 / static_cast<double>(b);
  std::size_t depth = net.dense.size();
  for (Eigen::Index i = 0; i < b; ++i) {
    Eigen::VectorXd s = batch_scores.row(i).transpose();
    std::vector<Eigen::VectorXd> activations(depth + 1);
    Eigen::VectorXd u0 = net.functional.biases + net.functional.coeffs * s;
    activations[0].resize(u0.size());
    for (Eigen::Index k = 0; k < u0.size(); ++k)
      activations[0][k] = activate(Activation::kLogistic, u0[k]);
    for (std::size_t l = 0; l < depth; ++l) {
      Eigen::VectorXd u =
          net.dense[l].weights * activations[l] + net.dense[l].biases;
      activations[l + 1].resize(u.size());
      for (Eigen::Index k = 0; k < u.size(); ++k)
        activations[l + 1][k] = activate(net.dense[l].activation, u[k]);
    }
    double yhat = activations[depth][0];
    double y = batch_y[i];
    g.loss += net_detail::sample_loss(loss, yhat, y) * inv_b;

    // delta at the output pre-activation
    Eigen::VectorXd delta(1);
    if (loss == Loss::kCrossEntropy) {
      delta[0] = (yhat - y) * inv_b;
    } else if (net.dense.back().activation == Activation::kIdentity) {
      delta[0] = 2.0 * (yhat - y) * inv_b;
    } else {
      delta[0] = 2.0 * (yhat - y) * yhat * (1.0 - yhat) * inv_b;
    }
    for (std::size_t l = depth; l-- > 0;) {
      g.dense_weights[l] += delta * activations[l].transpose();
      g.dense_biases[l] += delta;
      if (l > 0) {
        Eigen::VectorXd back = net.dense[l].weights.transpose() * delta;
        const Eigen::VectorXd& o = activations[l];
        delta.resize(back.size());
        for (Eigen::Index k = 0; k < back.size(); ++k) {
          double d = net.dense[l - 1].activation == Activation::kLogistic
                         ? o[k] * (1.0 - o[k])
                         : 1.0;
          delta[k] = back[k] * d;
        }
      } else {
        Eigen::VectorXd back = net.dense[0].weights.transpose() * delta;
        const Eigen::VectorXd& o = activations[0];
        Eigen::VectorXd d0(back.size());
        for (Eigen::Index k = 0; k < back.size(); ++k)
          d0[k] = back[k] * o[k] * (1.0 - o[k]);
        g.func_coeffs += d0 * s.transpose();
        g.func_biases += d0;
      }
    }
  }
  return g;
}

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 100;
  int batch_size = 0;  // 0: full batch
  std::uint64_t seed = 0;
  Loss loss = Loss::kMse;
};

inline Loss default_loss(Task task) {
  return task == Task::kRegression ? Loss::kMse : Loss::kCrossEntropy;
}

struct TrainResult {
  FunctionalNetwork network;
  std::vector<double> loss_history;  // full-data loss after each epoch
};

// Plain gradient descent, deterministic in (seed, config, data order).
// Mini-batches reshuffle each epoch from a seeded substream.
inline TrainResult train(FunctionalNetwork net, const Eigen::MatrixXd& scores,
                         const Eigen::VectorXd& y, const TrainConfig& config) {
  net.validate();
  if (scores.rows() != y.size() || scores.rows() == 0)
    throw std::invalid_argument("train: scores/response shape mismatch");
  if (!(config.learning_rate >= 0.0))
    throw std::invalid_argument("train: negative learning rate");
  if (config.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (config.loss == Loss::kCrossEntropy && net.task == Task::kRegression)
    throw std::invalid_argument("train: cross-entropy is for classification");

  auto n = scores.rows();
  auto apply = [&](const Gradients& g) {
    net.functional.coeffs -= config.learning_rate * g.func_coeffs;
    net.functional.biases -= config.learning_rate * g.func_biases;
    for (std::size_t l = 0; l < net.dense.size(); ++l) {
      net.dense[l].weights -= config.learning_rate * g.dense_weights[l];
      net.dense[l].biases -= config.learning_rate * g.dense_biases[l];
    }
  };

  TrainResult result;
  result.loss_history.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.batch_size <= 0 || config.batch_size >= n) {
      apply(backward(net, scores, y, config.loss));
    } else {
      std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      CounterRng rng(config.seed, 0x5A5A, static_cast<std::uint64_t>(epoch));
      rng.shuffle(order);
      for (Eigen::Index start = 0; start < n; start += config.batch_size) {
        Eigen::Index stop = std::min<Eigen::Index>(n, start + config.batch_size);
        Eigen::MatrixXd bs(stop - start, scores.cols());
        Eigen::VectorXd by(stop - start);
        for (Eigen::Index i = start; i < stop; ++i) {
          bs.row(i - start) = scores.row(order[static_cast<std::size_t>(i)]);
          by[i - start] = y[order[static_cast<std::size_t>(i)]];
        }
        apply(backward(net, bs, by, config.loss));
      }
    }
    double epoch_loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      epoch_loss += net_detail::sample_loss(
          config.loss, forward_scores(net, scores.row(i).transpose()), y[i]);
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss))
      throw std::runtime_error("train: non-finite loss at epoch " +
                               std::to_string(epoch));
    result.loss_history.push_back(epoch_loss);
  }
  result.network = std::move(net);
  return result;
}

enum class ModelKind { kRnn, kLstm, kGru, kFmlp };

// Parameter-count formulas for the architectures compared in the study.
// The FMLP count assumes the two-layer case: hidden functional neurons plus
// one output neuron.
inline long count_params(ModelKind kind, long hidden, long features,
                         long coeffs_per_pair = 0) {
  if (hidden < 1 || features < 1)
    throw std::invalid_argument("count_params: hidden and features must be >= 1");
  switch (kind) {
    case ModelKind::kRnn:
      return hidden * (hidden + features) + hidden;
    case ModelKind::kLstm:
      return 4 * (hidden * (hidden + features) + hidden);
    case ModelKind::kGru:
      return 3 * (hidden * (hidden + features) + hidden);
    case ModelKind::kFmlp: {
      if (coeffs_per_pair < 1)
        throw std::invalid_argument(
            "count_params: FMLP needs coefficients per weight function");
      return (hidden * features * coeffs_per_pair + hidden) + (hidden + 1);
    }
  }
  throw std::invalid_argument("count_params: unknown model kind");
}

}  // namespace sfmlp
