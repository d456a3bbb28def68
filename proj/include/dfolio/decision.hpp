#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace dfolio {

/// Long-only, fully-invested weight vector. Construction clamps entries in
/// [-1e-10, 0) to zero and renormalizes; anything further from the simplex throws.
class Portfolio {
 public:
  static constexpr double kNegTol = 1e-10;
  static constexpr double kSumTol = 1e-8;

  Portfolio() = default;
  explicit Portfolio(Eigen::VectorXd weights);

  static Portfolio uniform(std::size_t n);
  static Portfolio vertex(std::size_t n, std::size_t i);

  const Eigen::VectorXd& weights() const { return w_; }
  std::size_t size() const { return static_cast<std::size_t>(w_.size()); }
  double operator[](std::size_t i) const { return w_(static_cast<Eigen::Index>(i)); }

  /// ||this - other||_1
  double distance_l1(const Portfolio& other) const;

 private:
  Eigen::VectorXd w_;
};

enum class ObjectiveKind { MaxReturn, MaxReturnFee, MaxReturnFeeL2 };

/// Oracle specification: maximize c'w - gamma ||w - w_prev||_1 - lambda ||w||_2^2
/// over the simplex.
struct DecisionProblem {
  ObjectiveKind kind = ObjectiveKind::MaxReturn;
  double gamma = 0.0;
  double lambda = 0.0;
  Portfolio w_prev;

  static DecisionProblem max_return(std::size_t n);
  static DecisionProblem with_fee(double gamma, Portfolio w_prev);
  static DecisionProblem with_fee_l2(double gamma, double lambda, Portfolio w_prev);

  std::size_t size() const { return w_prev.size(); }
  /// Prediction-independent part of the objective (0 for MaxReturn).
  double penalty(const Eigen::VectorXd& w) const;
  /// Throws ConfigError when the kind/parameter combination is inconsistent.
  void validate() const;
};

/// coeff'w + penalty(w)
double decision_objective(const Eigen::VectorXd& coeff, const Eigen::VectorXd& w,
                          const DecisionProblem& problem);

/// Vertex e_i with i = argmax coeff, lowest index on ties.
Portfolio solve_max_return(const Eigen::VectorXd& coeff);

/// Fee-penalized oracle, solved as the epigraph LP
///   max r'w - gamma 1'u  s.t.  -u <= w - w_prev <= u,  w in simplex.
Portfolio solve_fee(const Eigen::VectorXd& r_hat, const DecisionProblem& problem);

struct FrankWolfeOptions {
  double gap_tolerance = 1e-7;
  int max_iterations = 10000;
  /// Start from the separable-KKT solution instead of the vertex (w_prev, 0).
  bool warm_start = true;
};

struct FrankWolfeResult {
  Portfolio portfolio;
  double gap = 0.0;  ///< Frank-Wolfe duality gap; bounds the suboptimality
  int iterations = 0;
};

/// Fee + ridge oracle by pairwise Frank-Wolfe over the lifted polytope
///   {(w, u): w in simplex, -u <= w - w_prev <= u, 0 <= u <= 1}
/// with solve_lp as the linear minimization oracle. Throws ConvergenceError
/// (carrying the final gap) if the gap tolerance is not reached.
FrankWolfeResult solve_fee_l2_fw(const Eigen::VectorXd& r_hat, const DecisionProblem& problem,
                                 const FrankWolfeOptions& options = {});
Portfolio solve_fee_l2(const Eigen::VectorXd& r_hat, const DecisionProblem& problem);

/// Same problem solved through its separable KKT system: each coordinate is a
/// piecewise-linear function of the simplex multiplier, which is found by
/// bisection and then solved exactly on the identified pieces.
Eigen::VectorXd solve_fee_l2_kkt(const Eigen::VectorXd& r_hat, const DecisionProblem& problem);

/// Dispatches on problem.kind.
Portfolio solve_decision(const Eigen::VectorXd& coeff, const DecisionProblem& problem);

/// Historical mean and covariance of a return window.
struct CovarianceEstimate {
  Eigen::VectorXd mean;
  Eigen::MatrixXd sigma;  ///< sample covariance (N-1 denominator), without loading
  double ridge = 0.0;     ///< diagonal loading applied by loaded()

  Eigen::MatrixXd loaded() const;
};

/// 1e-6 * trace(sigma) / n, floored at 1e-12 so flat windows stay positive definite.
double default_ridge(const Eigen::MatrixXd& sigma);

/// `returns` is days x assets; requires at least n_assets + 2 rows.
CovarianceEstimate estimate_covariance(const Eigen::MatrixXd& returns, double ridge);

struct MaxSharpeOptions {
  int starts = 8;
  int max_iterations = 5000;
  double step_tolerance = 1e-12;
  std::uint64_t seed = 7;
};

/// Long-only maximum-Sharpe portfolio by multi-start projected gradient ascent
/// with backtracking. Falls back to minimum variance when no simplex point has
/// positive mean return. Throws SolverError if the loaded covariance is not PD.
Portfolio solve_max_sharpe(const CovarianceEstimate& est, const MaxSharpeOptions& options = {});

/// Euclidean projection onto {w >= 0, sum w = 1} (sort and threshold).
Eigen::VectorXd project_simplex_vector(const Eigen::VectorXd& v);
Portfolio project_simplex(const Eigen::VectorXd& v);

}  // namespace dfolio
