#include "dfolio/lp.hpp"

#include <cmath>
#include <limits>

#include "dfolio/errors.hpp"

namespace dfolio {

namespace {

constexpr double kPivotTol = 1e-11;
constexpr double kCostTol = 1e-11;
constexpr double kFeasTol = 1e-9;
constexpr int kMaxPivots = 100000;

/// Tableau rows 0..m-1 hold B^-1 [A | b]; row m holds the reduced-cost row
/// z_j = c_B' B^-1 A_j - c_j (maximization: optimal when all z_j >= 0).
struct Tableau {
  Eigen::MatrixXd t;
  std::vector<int> basis;
  int rows = 0;
  int cols = 0;  // structural + slack + artificial columns (rhs is column `cols`)

  double& rhs(int i) { return t(i, cols); }

  void pivot(int r, int c) {
    t.row(r) /= t(r, c);
    for (int i = 0; i <= rows; ++i) {
      if (i == r) continue;
      const double f = t(i, c);
      if (f != 0.0) t.row(i) -= f * t.row(r);
    }
    basis[static_cast<std::size_t>(r)] = c;
  }

  void set_objective(const Eigen::VectorXd& cost) {
    t.row(rows).setZero();
    for (int j = 0; j < cols; ++j) t(rows, j) = -cost(j);
    for (int i = 0; i < rows; ++i) {
      const double cb = cost(basis[static_cast<std::size_t>(i)]);
      if (cb != 0.0) t.row(rows) += cb * t.row(i);
    }
  }

  /// Bland's rule iterations over columns [0, allowed_cols). Returns false if unbounded.
  bool optimize(int allowed_cols, int& pivots) {
    while (true) {
      int enter = -1;
      for (int j = 0; j < allowed_cols; ++j) {
        if (t(rows, j) < -kCostTol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;

      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < rows; ++i) {
        const double a = t(i, enter);
        if (a <= kPivotTol) continue;
        const double ratio = t(i, cols) / a;
        if (ratio < best - 1e-14 ||
            (std::abs(ratio - best) <= 1e-14 &&
             basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
      if (++pivots > kMaxPivots) throw SolverError("solve_lp: pivot limit exceeded");
    }
  }
};

}  // namespace

LpSolution solve_lp(const LinearProgram& lp) {
  const int n = static_cast<int>(lp.objective.size());
  if (n == 0) throw SolverError("solve_lp: empty objective");
  if (!lp.objective.allFinite()) throw SolverError("solve_lp: non-finite objective");

  const int m = static_cast<int>(lp.constraints.size());
  std::vector<Eigen::VectorXd> a(static_cast<std::size_t>(m));
  std::vector<Relation> rel(static_cast<std::size_t>(m));
  std::vector<double> b(static_cast<std::size_t>(m));
  int n_slack = 0;
  int n_art = 0;
  for (int i = 0; i < m; ++i) {
    const auto& c = lp.constraints[static_cast<std::size_t>(i)];
    if (c.coeffs.size() != n) throw SolverError("solve_lp: constraint width mismatch");
    auto& ai = a[static_cast<std::size_t>(i)];
    auto& ri = rel[static_cast<std::size_t>(i)];
    auto& bi = b[static_cast<std::size_t>(i)];
    ai = c.coeffs;
    ri = c.relation;
    bi = c.rhs;
    if (bi < 0.0) {
      ai = -ai;
      bi = -bi;
      if (ri == Relation::LessEqual) {
        ri = Relation::GreaterEqual;
      } else if (ri == Relation::GreaterEqual) {
        ri = Relation::LessEqual;
      }
    }
    if (ri != Relation::Equal) ++n_slack;
    if (ri != Relation::LessEqual) ++n_art;
  }

  Tableau tab;
  tab.rows = m;
  tab.cols = n + n_slack + n_art;
  tab.t = Eigen::MatrixXd::Zero(m + 1, tab.cols + 1);
  tab.basis.assign(static_cast<std::size_t>(m), -1);
  int slack = n;
  int art = n + n_slack;
  for (int i = 0; i < m; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    tab.t.row(i).head(n) = a[ii].transpose();
    tab.rhs(i) = b[ii];
    switch (rel[ii]) {
      case Relation::LessEqual:
        tab.t(i, slack) = 1.0;
        tab.basis[ii] = slack++;
        break;
      case Relation::GreaterEqual:
        tab.t(i, slack++) = -1.0;
        tab.t(i, art) = 1.0;
        tab.basis[ii] = art++;
        break;
      case Relation::Equal:
        tab.t(i, art) = 1.0;
        tab.basis[ii] = art++;
        break;
    }
  }

  int pivots = 0;
  const int first_art = n + n_slack;
  if (n_art > 0) {
    Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(tab.cols);
    phase1.tail(n_art).setConstant(-1.0);
    tab.set_objective(phase1);
    tab.optimize(tab.cols, pivots);
    // Phase-1 optimum value is -sum(artificials) = rhs of objective row.
    if (tab.t(m, tab.cols) < -kFeasTol) {
      throw InfeasibleError("solve_lp: problem is infeasible");
    }
    // Drive zero-level artificials out of the basis; drop redundant rows.
    for (int i = 0; i < tab.rows; ++i) {
      if (tab.basis[static_cast<std::size_t>(i)] < first_art) continue;
      int col = -1;
      for (int j = 0; j < first_art; ++j) {
        if (std::abs(tab.t(i, j)) > kPivotTol) {
          col = j;
          break;
        }
      }
      if (col >= 0) {
        tab.pivot(i, col);
        ++pivots;
      } else {
        // Redundant constraint: remove row i.
        Eigen::MatrixXd reduced(tab.rows, tab.cols + 1);
        reduced << tab.t.topRows(i), tab.t.bottomRows(tab.rows - i);
        tab.t = std::move(reduced);
        tab.basis.erase(tab.basis.begin() + i);
        --tab.rows;
        --i;
      }
    }
  }

  Eigen::VectorXd cost = Eigen::VectorXd::Zero(tab.cols);
  cost.head(n) = lp.objective;
  tab.set_objective(cost);
  if (!tab.optimize(first_art, pivots)) {
    throw UnboundedError("solve_lp: problem is unbounded");
  }

  LpSolution sol;
  sol.x = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < tab.rows; ++i) {
    const int j = tab.basis[static_cast<std::size_t>(i)];
    if (j < n) sol.x(j) = std::max(0.0, tab.rhs(i));
  }
  sol.value = lp.objective.dot(sol.x);
  sol.pivots = pivots;
  return sol;
}

}  // namespace dfolio
