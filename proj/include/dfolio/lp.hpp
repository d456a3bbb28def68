#pragma once

#include <Eigen/Dense>
#include <vector>

namespace dfolio {

enum class Relation { LessEqual, Equal, GreaterEqual };

struct LinearConstraint {
  Eigen::VectorXd coeffs;
  Relation relation = Relation::LessEqual;
  double rhs = 0.0;
};

/// maximize objective' x  subject to constraints, x >= 0.
struct LinearProgram {
  Eigen::VectorXd objective;
  std::vector<LinearConstraint> constraints;

  void add(Eigen::VectorXd coeffs, Relation rel, double rhs) {
    constraints.push_back({std::move(coeffs), rel, rhs});
  }
};

struct LpSolution {
  Eigen::VectorXd x;
  double value = 0.0;
  int pivots = 0;
};

/// Dense-tableau two-phase primal simplex with Bland's anti-cycling rule.
/// Returns an optimal basic solution. Throws InfeasibleError / UnboundedError,
/// or SolverError when the pivot cap is exceeded.
LpSolution solve_lp(const LinearProgram& lp);

}  // namespace dfolio
