#include "dfolio/training.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "dfolio/errors.hpp"
#include "dfolio/seed.hpp"

namespace dfolio {

LinearPredictor LinearPredictor::zeros(std::size_t n_features) {
  return LinearPredictor{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_features)), 0.0};
}

Eigen::VectorXd predict(const LinearPredictor& model, const Eigen::MatrixXd& features) {
  if (features.cols() != model.theta.size()) {
    throw TrainingError("predict: " + std::to_string(features.cols()) + " features, model has " +
                        std::to_string(model.theta.size()));
  }
  return (features * model.theta).array() + model.intercept;
}

void adam_step(Eigen::VectorXd& params, AdamState& state, const Eigen::VectorXd& grad,
               double learning_rate, const AdamConfig& config) {
  if (params.size() != grad.size() || state.m.size() != grad.size()) {
    throw TrainingError("adam_step: dimension mismatch");
  }
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  params.array() -= learning_rate * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + config.epsilon);
}

void TrainConfig::validate() const {
  if (epochs < 1 || epochs > 1000) throw ConfigError("train: epochs must be in [1, 1000]");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be finite and >= 0");
  }
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (loss_kind == LossKind::RobustSpo) {
    if (!robust) throw ConfigError("train: RobustSpo requires a robust config");
    robust->validate();
  }
  if (loss_kind != LossKind::MSE) problem.validate();
}

std::size_t Dataset::n_assets() const {
  return features.empty() ? 0 : static_cast<std::size_t>(features.front().rows());
}

std::size_t Dataset::n_features() const {
  return features.empty() ? 0 : static_cast<std::size_t>(features.front().cols());
}

void Dataset::validate() const {
  if (features.size() != targets.size()) throw TrainingError("dataset: features/targets length mismatch");
  for (std::size_t k = 0; k < features.size(); ++k) {
    if (features[k].rows() != features.front().rows() ||
        features[k].cols() != features.front().cols() ||
        targets[k].size() != features[k].rows()) {
      throw TrainingError("dataset: inconsistent shape at sample " + std::to_string(k));
    }
  }
}

std::vector<Portfolio> oracle_decisions(const Dataset& data, const DecisionProblem& problem) {
  std::vector<Portfolio> out;
  out.reserve(data.size());
  for (const auto& r : data.targets) out.push_back(solve_decision(r, problem));
  return out;
}

TrainResult train(const Dataset& data, const TrainConfig& config,
                  const std::vector<Portfolio>* w_star) {
  data.validate();
  config.validate();
  const std::size_t N = data.size();
  if (N < static_cast<std::size_t>(config.batch_size)) {
    throw TrainingError("train: " + std::to_string(N) + " samples, fewer than batch size " +
                        std::to_string(config.batch_size));
  }
  const auto F = static_cast<Eigen::Index>(data.n_features());
  const bool decision_loss = config.loss_kind != LossKind::MSE;
  if (decision_loss && config.problem.size() != data.n_assets()) {
    throw TrainingError("train: decision problem dimension does not match the asset count");
  }
  std::vector<Portfolio> own;
  if (decision_loss && w_star == nullptr) {
    own = oracle_decisions(data, config.problem);
    w_star = &own;
  }
  if (decision_loss && w_star->size() != N) throw TrainingError("train: oracle cache size mismatch");

  Eigen::VectorXd params = Eigen::VectorXd::Zero(F + 1);
  AdamState state(F + 1);
  TrainResult result;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t begin = 0; begin < N; begin += batch) {
      const std::size_t end = std::min(N, begin + batch);
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(F + 1);
      for (std::size_t k = begin; k < end; ++k) {
        const Eigen::MatrixXd& x = data.features[k];
        const Eigen::VectorXd& r = data.targets[k];
        const Eigen::VectorXd r_hat = (x * params.head(F)).array() + params(F);
        double loss = 0.0;
        Eigen::VectorXd g;
        switch (config.loss_kind) {
          case LossKind::MSE: {
            const Eigen::VectorXd e = r_hat - r;
            loss = e.squaredNorm();
            g = 2.0 * e;
            break;
          }
          case LossKind::SpoPlus: {
            SpoLoss l = spo_plus_loss(r_hat, r, config.problem, (*w_star)[k]);
            loss = l.loss;
            g = std::move(l.gradient);
            break;
          }
          case LossKind::RobustSpo: {
            RobustConfig rc = *config.robust;
            rc.seed = mix_seed({config.robust->seed, config.seed, static_cast<std::uint64_t>(epoch),
                                static_cast<std::uint64_t>(k)});
            const auto zetas = robust_perturbations(r.size(), rc);
            RobustLoss l = robust_spo_plus_loss(r_hat, r, config.problem, (*w_star)[k], zetas);
            loss = l.loss;
            g = std::move(l.gradient);
            break;
          }
        }
        if (!std::isfinite(loss) || !g.allFinite()) {
          throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) +
                              ", sample " + std::to_string(k));
        }
        total += loss;
        grad.head(F).noalias() += x.transpose() * g;
        grad(F) += g.sum();
      }
      grad /= static_cast<double>(end - begin);
      if (!config.fit_intercept) grad(F) = 0.0;
      adam_step(params, state, grad, config.learning_rate, config.adam);
    }
    result.epoch_loss.push_back(total / static_cast<double>(N));
  }
  result.model.theta = params.head(F);
  result.model.intercept = params(F);
  return result;
}

double decision_score(const LinearPredictor& model, const Dataset& validation,
                      const DecisionProblem& problem, double fee_rate) {
  if (validation.size() == 0) throw TrainingError("decision_score: empty validation set");
  double total = 0.0;
  for (std::size_t k = 0; k < validation.size(); ++k) {
    const Portfolio w = solve_decision(predict(model, validation.features[k]), problem);
    total += validation.targets[k].dot(w.weights()) - fee_rate * w.distance_l1(problem.w_prev);
  }
  return total / static_cast<double>(validation.size());
}

double mse(const LinearPredictor& model, const Dataset& data) {
  if (data.size() == 0) throw TrainingError("mse: empty dataset");
  double total = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    total += (predict(model, data.features[k]) - data.targets[k]).squaredNorm();
  }
  return total / static_cast<double>(data.size());
}

void SearchSpace::validate() const {
  if (!(lr_min > 0.0) || !(lr_max >= lr_min)) {
    throw ConfigError("search: need 0 < lr_min <= lr_max");
  }
  if (epochs_min < 1 || epochs_max < epochs_min || epochs_max > 1000) {
    throw ConfigError("search: need 1 <= epochs_min <= epochs_max <= 1000");
  }
  if (n_trials < 1) throw ConfigError("search: n_trials must be >= 1");
}

std::vector<TrialDraw> draw_trials(const SearchSpace& space) {
  space.validate();
  std::mt19937_64 rng(space.seed);
  std::uniform_real_distribution<double> log_lr(std::log(space.lr_min), std::log(space.lr_max));
  std::uniform_int_distribution<int> epochs(space.epochs_min, space.epochs_max);
  std::vector<TrialDraw> out;
  for (int i = 0; i < space.n_trials; ++i) {
    TrialDraw d;
    d.learning_rate = std::exp(log_lr(rng));
    d.epochs = epochs(rng);
    out.push_back(d);
  }
  return out;
}

SearchOutcome random_search(const SearchSpace& space, const TrialEvaluator& evaluate) {
  const auto draws = draw_trials(space);
  SearchOutcome out;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < draws.size(); ++i) {
    TrialResult r = evaluate(i, draws[i]);
    r.draw = draws[i];
    const double score = std::isnan(r.score) ? -std::numeric_limits<double>::infinity() : r.score;
    if (i == 0 || score > best) {
      best = score;
      out.best = i;
    }
    out.trials.push_back(std::move(r));
  }
  return out;
}

HyperparameterChoice hyperparameter_search(const Dataset& train_set, const Dataset& validation,
                                           const SearchSpace& space, const TrainConfig& base,
                                           double fee_rate) {
  const bool decision_loss = base.loss_kind != LossKind::MSE;
  std::vector<Portfolio> w_star;
  if (decision_loss) w_star = oracle_decisions(train_set, base.problem);
  std::vector<LinearPredictor> models;

  const SearchOutcome outcome = random_search(space, [&](std::size_t, const TrialDraw& draw) {
    TrainConfig cfg = base;
    cfg.learning_rate = draw.learning_rate;
    cfg.epochs = draw.epochs;
    TrainResult tr = train(train_set, cfg, decision_loss ? &w_star : nullptr);
    TrialResult res;
    res.score = decision_loss ? decision_score(tr.model, validation, base.problem, fee_rate)
                              : -mse(tr.model, validation);
    res.trace = std::move(tr.epoch_loss);
    models.push_back(std::move(tr.model));
    return res;
  });

  HyperparameterChoice choice;
  choice.config = base;
  choice.config.learning_rate = outcome.best_trial().draw.learning_rate;
  choice.config.epochs = outcome.best_trial().draw.epochs;
  choice.model = models[outcome.best];
  choice.outcome = outcome;
  return choice;
}

}  // namespace dfolio
