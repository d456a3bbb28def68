#include "dfolio/spo.hpp"

#include <random>

#include "dfolio/errors.hpp"

namespace dfolio {

void SpoInstance::validate() const {
  problem.validate();
  const auto n = static_cast<Eigen::Index>(problem.size());
  if (r_hat.size() != n || r_true.size() != n) {
    throw SolverError("spo instance: vector lengths do not match the problem dimension");
  }
  if (!r_hat.allFinite() || !r_true.allFinite()) {
    throw SolverError("spo instance: non-finite return vector");
  }
}

SpoLoss spo_plus_loss(const Eigen::VectorXd& r_hat, const Eigen::VectorXd& r_true,
                      const DecisionProblem& problem, const Portfolio& w_star) {
  const Eigen::VectorXd shifted = 2.0 * r_hat - r_true;
  Portfolio w_tilde = solve_decision(shifted, problem);
  const Eigen::VectorXd& wt = w_tilde.weights();
  const Eigen::VectorXd& ws = w_star.weights();
  SpoLoss out;
  out.loss = shifted.dot(wt) + problem.penalty(wt) - 2.0 * r_hat.dot(ws) + r_true.dot(ws) -
             problem.penalty(ws);
  out.gradient = 2.0 * (wt - ws);
  out.w_tilde = std::move(w_tilde);
  return out;
}

double decision_regret(const Eigen::VectorXd& r_true, const Portfolio& decision,
                       const Portfolio& w_star, const DecisionProblem& problem) {
  return decision_objective(r_true, w_star.weights(), problem) -
         decision_objective(r_true, decision.weights(), problem);
}

SpoEvaluation spo_plus(const SpoInstance& instance) {
  instance.validate();
  const DecisionProblem& prob = instance.problem;
  Portfolio w_star = solve_decision(instance.r_true, prob);
  SpoLoss core = spo_plus_loss(instance.r_hat, instance.r_true, prob, w_star);
  const Portfolio w_hat = solve_decision(instance.r_hat, prob);

  SpoEvaluation ev;
  ev.loss = core.loss;
  ev.subgradient = std::move(core.gradient);
  ev.w_tilde = std::move(core.w_tilde);
  ev.regret = decision_regret(instance.r_true, w_hat, w_star, prob);
  ev.w_star = std::move(w_star);
  return ev;
}

void RobustConfig::validate() const {
  if (!(rho > 0.0)) throw ConfigError("robust: rho must be > 0");
  if (n_samples < 1) throw ConfigError("robust: n_samples must be >= 1");
}

std::vector<Eigen::VectorXd> robust_perturbations(std::size_t n, const RobustConfig& config) {
  config.validate();
  const auto m = static_cast<Eigen::Index>(n);
  std::vector<Eigen::VectorXd> out;
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int k = 0; k < config.n_samples; ++k) {
    if (k % 2 == 1) {
      out.push_back(-out.back());
      continue;
    }
    Eigen::VectorXd z(m);
    for (Eigen::Index i = 0; i < m; ++i) z(i) = config.rho * unit(rng);
    out.push_back(std::move(z));
  }
  if (!config.include_corners) return out;

  std::vector<Eigen::VectorXd> corners;
  auto push = [&](Eigen::VectorXd c) {
    if (corners.size() >= 2 * n) return;
    for (const auto& existing : corners) {
      if (existing == c) return;
    }
    corners.push_back(std::move(c));
  };
  push(Eigen::VectorXd::Constant(m, config.rho));
  push(Eigen::VectorXd::Constant(m, -config.rho));
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::VectorXd up = Eigen::VectorXd::Constant(m, -config.rho);
    up(i) = config.rho;
    push(up);
    push(-up);
  }
  for (auto& c : corners) out.push_back(std::move(c));
  return out;
}

RobustLoss robust_spo_plus_loss(const Eigen::VectorXd& r_hat, const Eigen::VectorXd& r_true,
                                const DecisionProblem& problem, const Portfolio& w_star,
                                const std::vector<Eigen::VectorXd>& perturbations) {
  if (perturbations.empty()) throw SolverError("robust loss: no perturbations");
  RobustLoss best;
  bool have = false;
  for (std::size_t k = 0; k < perturbations.size(); ++k) {
    const Eigen::VectorXd scale = Eigen::VectorXd::Ones(r_hat.size()) + perturbations[k];
    const SpoLoss l = spo_plus_loss(r_hat.cwiseProduct(scale), r_true, problem, w_star);
    if (!have || l.loss > best.loss) {
      best.loss = l.loss;
      best.gradient = l.gradient.cwiseProduct(scale);
      best.sample_index = k;
      have = true;
    }
  }
  return best;
}

RobustEvaluation robust_spo_loss(const SpoInstance& instance, const RobustConfig& config) {
  instance.validate();
  const auto zetas = robust_perturbations(instance.problem.size(), config);
  RobustEvaluation best;
  bool have = false;
  for (std::size_t k = 0; k < zetas.size(); ++k) {
    SpoInstance perturbed = instance;
    perturbed.r_hat = instance.r_hat.cwiseProduct(Eigen::VectorXd::Ones(zetas[k].size()) + zetas[k]);
    SpoEvaluation ev = spo_plus(perturbed);
    if (!have || ev.loss > best.worst.loss) {
      best.worst = std::move(ev);
      best.zeta = zetas[k];
      best.sample_index = k;
      have = true;
    }
  }
  return best;
}

}  // namespace dfolio
