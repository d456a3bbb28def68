#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dfolio/decision.hpp"
#include "dfolio/spo.hpp"

namespace dfolio {

/// Cross-sectional linear model shared by all assets: r_hat_i = theta'x_i + intercept.
struct LinearPredictor {
  Eigen::VectorXd theta;
  double intercept = 0.0;

  static LinearPredictor zeros(std::size_t n_features);
};

/// `features` is asset x feature. Throws TrainingError on a width mismatch.
Eigen::VectorXd predict(const LinearPredictor& model, const Eigen::MatrixXd& features);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  explicit AdamState(Eigen::Index size)
      : m(Eigen::VectorXd::Zero(size)), v(Eigen::VectorXd::Zero(size)) {}
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(Eigen::VectorXd& params, AdamState& state, const Eigen::VectorXd& grad,
               double learning_rate, const AdamConfig& config = {});

enum class LossKind { MSE, SpoPlus, RobustSpo };

struct TrainConfig {
  LossKind loss_kind = LossKind::SpoPlus;
  int epochs = 30;
  double learning_rate = 1e-3;
  int batch_size = 63;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::optional<RobustConfig> robust;
  DecisionProblem problem;
  bool fit_intercept = true;

  void validate() const;
};

/// Chronologically ordered samples: features[k] (asset x feature) observed at
/// day k, targets[k] the simple returns of the following day.
struct Dataset {
  std::vector<Eigen::MatrixXd> features;
  std::vector<Eigen::VectorXd> targets;

  std::size_t size() const { return features.size(); }
  std::size_t n_assets() const;
  std::size_t n_features() const;
  void validate() const;
};

struct TrainResult {
  LinearPredictor model;
  std::vector<double> epoch_loss;  ///< mean per-sample loss of each epoch
};

/// Oracle decision w* for every target under `problem`.
std::vector<Portfolio> oracle_decisions(const Dataset& data, const DecisionProblem& problem);

/// Mini-batch Adam from theta = 0, intercept = 0, over contiguous batches in
/// date order. `w_star` may supply precomputed oracle decisions. Throws
/// TrainingError on a non-finite loss.
TrainResult train(const Dataset& data, const TrainConfig& config,
                  const std::vector<Portfolio>* w_star = nullptr);

/// Decision-focused validation score: mean of r'w_hat - fee_rate ||w_hat - w_prev||_1.
double decision_score(const LinearPredictor& model, const Dataset& validation,
                      const DecisionProblem& problem, double fee_rate);
/// Mean per-sample squared error ||r_hat - r||^2.
double mse(const LinearPredictor& model, const Dataset& data);

struct SearchSpace {
  double lr_min = 1e-4;
  double lr_max = 5e-2;
  int epochs_min = 20;
  int epochs_max = 40;
  int n_trials = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrialDraw {
  double learning_rate = 0.0;
  int epochs = 0;
};

/// Seeded draws: lr log-uniform, epochs uniform integer, both inclusive ranges.
std::vector<TrialDraw> draw_trials(const SearchSpace& space);

struct TrialResult {
  TrialDraw draw;
  double score = 0.0;
  std::vector<double> trace;
};

struct SearchOutcome {
  std::size_t best = 0;
  std::vector<TrialResult> trials;

  const TrialResult& best_trial() const { return trials[best]; }
};

/// Scores every draw with `evaluate`; the highest score wins and the first trial wins ties.
using TrialEvaluator = std::function<TrialResult(std::size_t trial, const TrialDraw& draw)>;
SearchOutcome random_search(const SearchSpace& space, const TrialEvaluator& evaluate);

/// Random search over (lr, epochs) for a linear predictor trained with `base`.
/// Decision-focused losses are scored by decision_score on `validation`, MSE by -mse.
/// `model` is the winning trial's predictor; retraining it with `config` on the
/// same span reproduces it exactly.
struct HyperparameterChoice {
  TrainConfig config;
  LinearPredictor model;
  SearchOutcome outcome;
};
HyperparameterChoice hyperparameter_search(const Dataset& train_set, const Dataset& validation,
                                           const SearchSpace& space, const TrainConfig& base,
                                           double fee_rate);

}  // namespace dfolio
