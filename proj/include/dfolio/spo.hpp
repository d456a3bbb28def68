#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dfolio/decision.hpp"

namespace dfolio {

struct SpoInstance {
  Eigen::VectorXd r_hat;
  Eigen::VectorXd r_true;
  DecisionProblem problem;

  void validate() const;
};

struct SpoEvaluation {
  double loss = 0.0;
  Eigen::VectorXd subgradient;  ///< d loss / d r_hat = 2 (w_tilde - w_star)
  Portfolio w_tilde;
  Portfolio w_star;
  double regret = 0.0;
};

/// SPO+ surrogate with the prediction-independent penalty folded in:
///   loss = max_w [(2 r_hat - r)'w + Phi(w)] - 2 r_hat'w* + r'w* - Phi(w*)
/// where w* solves the problem under r_true. Regret uses the decision under r_hat.
SpoEvaluation spo_plus(const SpoInstance& instance);

/// Loss and subgradient only, with the oracle decision supplied by the caller.
/// Used in training loops where w* is fixed per sample.
struct SpoLoss {
  double loss = 0.0;
  Eigen::VectorXd gradient;
  Portfolio w_tilde;
};
SpoLoss spo_plus_loss(const Eigen::VectorXd& r_hat, const Eigen::VectorXd& r_true,
                      const DecisionProblem& problem, const Portfolio& w_star);

/// Decision regret of `decision` under realized returns: [r'w* + Phi(w*)] - [r'w + Phi(w)].
double decision_regret(const Eigen::VectorXd& r_true, const Portfolio& decision,
                       const Portfolio& w_star, const DecisionProblem& problem);

struct RobustConfig {
  double rho = 0.1;
  int n_samples = 8;
  bool include_corners = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Multiplicative perturbations zeta with ||zeta||_inf <= rho. The first
/// n_samples are uniform draws taken in antithetic pairs (z, -z); corners
/// follow: +rho 1, -rho 1, then for each asset i the pattern +rho at i and
/// -rho elsewhere together with its negation, deduplicated and capped at 2n.
std::vector<Eigen::VectorXd> robust_perturbations(std::size_t n, const RobustConfig& config);

struct RobustEvaluation {
  SpoEvaluation worst;
  Eigen::VectorXd zeta;
  std::size_t sample_index = 0;
};

/// Worst SPO+ evaluation over r_hat o (1 + zeta); first sample wins ties.
RobustEvaluation robust_spo_loss(const SpoInstance& instance, const RobustConfig& config);

/// Training-path variant: gradient is with respect to the unperturbed r_hat,
/// i.e. the worst sample's subgradient scaled elementwise by (1 + zeta).
struct RobustLoss {
  double loss = 0.0;
  Eigen::VectorXd gradient;
  std::size_t sample_index = 0;
};
RobustLoss robust_spo_plus_loss(const Eigen::VectorXd& r_hat, const Eigen::VectorXd& r_true,
                                const DecisionProblem& problem, const Portfolio& w_star,
                                const std::vector<Eigen::VectorXd>& perturbations);

}  // namespace dfolio
