#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dfolio/decision.hpp"
#include "dfolio/training.hpp"

namespace dfolio {

/// Linear inferencer followed by a one-hidden-layer allocator with a softmax head:
///   r_hat = X theta + b,  h = relu(W1 r_hat + b1),  w = softmax(W2 h + b2).
struct SoftmaxAllocator {
  LinearPredictor inferencer;
  Eigen::MatrixXd W1;  ///< hidden x assets
  Eigen::VectorXd b1;
  Eigen::MatrixXd W2;  ///< assets x hidden
  Eigen::VectorXd b2;

  /// Allocator layers uniform in +-1/sqrt(fan_in) from `seed`; inferencer at zero.
  static SoftmaxAllocator init(std::size_t n_assets, std::size_t n_features, std::size_t hidden,
                               std::uint64_t seed);

  std::size_t n_params() const;
  /// Layout: theta, b, W1 (column-major), b1, W2 (column-major), b2.
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& params);
};

/// Forward pass to softmax weights.
Eigen::VectorXd allocate_weights(const SoftmaxAllocator& model, const Eigen::MatrixXd& features);
Portfolio allocate(const SoftmaxAllocator& model, const Eigen::MatrixXd& features);

enum class DflObjective { MaxReturn, MaxSharpe };

/// MaxReturn: -r'w.  MaxSharpe: -r'w / sqrt(w' Sigma w) with Sigma = est->loaded().
/// Throws TrainingError when MaxSharpe sees zero variance or no estimate.
double dfl_loss(const Eigen::VectorXd& weights, const Eigen::VectorXd& realized,
                DflObjective objective, const CovarianceEstimate* est = nullptr);

struct DflEvaluation {
  double loss = 0.0;
  Eigen::VectorXd gradient;  ///< flattened, same layout as SoftmaxAllocator::flatten
};
DflEvaluation dfl_loss_and_gradient(const SoftmaxAllocator& model, const Eigen::MatrixXd& features,
                                    const Eigen::VectorXd& realized, DflObjective objective,
                                    const CovarianceEstimate* est = nullptr);

struct DflConfig {
  DflObjective objective = DflObjective::MaxReturn;
  int epochs = 30;
  double learning_rate = 1e-3;
  int batch_size = 63;
  std::size_t hidden = 32;
  AdamConfig adam;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DflTrainResult {
  SoftmaxAllocator model;
  std::vector<double> epoch_loss;
};

/// Adam over contiguous date-ordered batches. `est` is the training-window
/// covariance, required for MaxSharpe and held fixed.
DflTrainResult train_dfl(const Dataset& data, const DflConfig& config,
                         const CovarianceEstimate* est = nullptr);

/// Mean realized r'w - fee_rate ||w - w_prev||_1 over `validation`.
double dfl_score(const SoftmaxAllocator& model, const Dataset& validation, const Portfolio& w_prev,
                 double fee_rate);

struct DflChoice {
  DflConfig config;
  SoftmaxAllocator model;
  SearchOutcome outcome;
};
DflChoice dfl_search(const Dataset& train_set, const Dataset& validation, const SearchSpace& space,
                     const DflConfig& base, const Portfolio& w_prev, double fee_rate,
                     const CovarianceEstimate* est = nullptr);

}  // namespace dfolio
