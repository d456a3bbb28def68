#include "dfolio/decision.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dfolio/errors.hpp"
#include "dfolio/lp.hpp"

namespace dfolio {

// ---------------------------------------------------------------------------
// Portfolio

Portfolio::Portfolio(Eigen::VectorXd weights) : w_(std::move(weights)) {
  if (w_.size() == 0) throw Error("portfolio: empty weight vector");
  if (!w_.allFinite()) throw Error("portfolio: non-finite weight");
  for (Eigen::Index i = 0; i < w_.size(); ++i) {
    if (w_(i) < -kNegTol) throw Error("portfolio: negative weight beyond tolerance");
    if (w_(i) < 0.0) w_(i) = 0.0;
  }
  const double s = w_.sum();
  if (std::abs(s - 1.0) > 1e-6) throw Error("portfolio: weights do not sum to one");
  if (s != 1.0) w_ /= s;
}

Portfolio Portfolio::uniform(std::size_t n) {
  return Portfolio(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n)));
}

Portfolio Portfolio::vertex(std::size_t n, std::size_t i) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  w(static_cast<Eigen::Index>(i)) = 1.0;
  return Portfolio(std::move(w));
}

double Portfolio::distance_l1(const Portfolio& other) const {
  return (w_ - other.w_).lpNorm<1>();
}

// ---------------------------------------------------------------------------
// DecisionProblem

DecisionProblem DecisionProblem::max_return(std::size_t n) {
  DecisionProblem p;
  p.kind = ObjectiveKind::MaxReturn;
  p.w_prev = Portfolio::uniform(n);
  return p;
}

DecisionProblem DecisionProblem::with_fee(double gamma, Portfolio w_prev) {
  DecisionProblem p;
  p.kind = ObjectiveKind::MaxReturnFee;
  p.gamma = gamma;
  p.w_prev = std::move(w_prev);
  return p;
}

DecisionProblem DecisionProblem::with_fee_l2(double gamma, double lambda, Portfolio w_prev) {
  DecisionProblem p;
  p.kind = ObjectiveKind::MaxReturnFeeL2;
  p.gamma = gamma;
  p.lambda = lambda;
  p.w_prev = std::move(w_prev);
  return p;
}

double DecisionProblem::penalty(const Eigen::VectorXd& w) const {
  double phi = 0.0;
  if (gamma != 0.0) phi -= gamma * (w - w_prev.weights()).lpNorm<1>();
  if (lambda != 0.0) phi -= lambda * w.squaredNorm();
  return phi;
}

void DecisionProblem::validate() const {
  if (w_prev.size() == 0) throw ConfigError("decision problem: w_prev not set");
  if (!(gamma >= 0.0) || !(lambda >= 0.0)) {
    throw ConfigError("decision problem: gamma and lambda must be >= 0");
  }
  if (kind == ObjectiveKind::MaxReturn && (gamma != 0.0 || lambda != 0.0)) {
    throw ConfigError("decision problem: MaxReturn requires gamma = lambda = 0");
  }
  if (kind == ObjectiveKind::MaxReturnFee && lambda != 0.0) {
    throw ConfigError("decision problem: MaxReturnFee requires lambda = 0");
  }
}

double decision_objective(const Eigen::VectorXd& coeff, const Eigen::VectorXd& w,
                          const DecisionProblem& problem) {
  return coeff.dot(w) + problem.penalty(w);
}

// ---------------------------------------------------------------------------
// Oracles

Portfolio solve_max_return(const Eigen::VectorXd& coeff) {
  if (coeff.size() == 0 || !coeff.allFinite()) {
    throw SolverError("solve_max_return: coefficients must be finite and non-empty");
  }
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < coeff.size(); ++i) {
    if (coeff(i) > coeff(best)) best = i;
  }
  return Portfolio::vertex(static_cast<std::size_t>(coeff.size()), static_cast<std::size_t>(best));
}

namespace {

void check_dims(const Eigen::VectorXd& coeff, const DecisionProblem& problem, const char* who) {
  problem.validate();
  if (coeff.size() != static_cast<Eigen::Index>(problem.size())) {
    throw SolverError(std::string(who) + ": dimension mismatch");
  }
  if (!coeff.allFinite()) throw SolverError(std::string(who) + ": non-finite coefficients");
}

/// Constraints of the lifted polytope over x = (w, u), optionally with u <= 1.
LinearProgram lifted_program(const Eigen::VectorXd& w_prev, bool cap_u) {
  const Eigen::Index n = w_prev.size();
  LinearProgram lp;
  lp.objective = Eigen::VectorXd::Zero(2 * n);
  Eigen::VectorXd row = Eigen::VectorXd::Zero(2 * n);
  row.head(n).setOnes();
  lp.add(row, Relation::Equal, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    row.setZero();
    row(i) = 1.0;
    row(n + i) = -1.0;
    lp.add(row, Relation::LessEqual, w_prev(i));   // w_i - u_i <= p_i
    row(n + i) = 1.0;
    lp.add(row, Relation::GreaterEqual, w_prev(i));  // w_i + u_i >= p_i
  }
  if (cap_u) {
    for (Eigen::Index i = 0; i < n; ++i) {
      row.setZero();
      row(n + i) = 1.0;
      lp.add(row, Relation::LessEqual, 1.0);
    }
  }
  return lp;
}

}  // namespace

Portfolio solve_fee(const Eigen::VectorXd& r_hat, const DecisionProblem& problem) {
  check_dims(r_hat, problem, "solve_fee");
  const Eigen::Index n = r_hat.size();
  LinearProgram lp = lifted_program(problem.w_prev.weights(), false);
  lp.objective.head(n) = r_hat;
  lp.objective.tail(n).setConstant(-problem.gamma);
  const LpSolution sol = solve_lp(lp);
  return Portfolio(sol.x.head(n));
}

Eigen::VectorXd solve_fee_l2_kkt(const Eigen::VectorXd& r_hat, const DecisionProblem& problem) {
  check_dims(r_hat, problem, "solve_fee_l2_kkt");
  const double lambda = problem.lambda;
  const double gamma = problem.gamma;
  if (!(lambda > 0.0)) throw SolverError("solve_fee_l2_kkt: lambda must be > 0");
  const Eigen::VectorXd& p = problem.w_prev.weights();
  const Eigen::Index n = r_hat.size();

  // Piece of coordinate i at multiplier nu: +1 above w_prev, -1 below (and > 0), 0 pinned.
  auto piece = [&](Eigen::Index i, double nu, double& w) {
    const double a = r_hat(i) - nu;
    const double up = (a - gamma) / (2.0 * lambda);
    if (up > p(i)) {
      w = up;
      return 1;
    }
    const double down = (a + gamma) / (2.0 * lambda);
    if (down < p(i)) {
      if (down > 0.0) {
        w = down;
        return -1;
      }
      w = 0.0;
      return 0;
    }
    w = p(i);
    return 0;
  };
  auto total = [&](double nu) {
    double s = 0.0, w = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      piece(i, nu, w);
      s += w;
    }
    return s;
  };

  double lo = r_hat.minCoeff() - gamma - 2.0 * lambda;  // total(lo) >= 1
  double hi = r_hat.maxCoeff() + gamma;                 // total(hi) <= 1
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (total(mid) >= 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double nu = 0.5 * (lo + hi);

  // Solve sum w(nu) = 1 exactly on the pieces identified at nu.
  double fixed = 0.0, numer = 0.0;
  int moving = 0;
  std::vector<int> pieces(static_cast<std::size_t>(n));
  double w = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = piece(i, nu, w);
    pieces[static_cast<std::size_t>(i)] = k;
    if (k == 0) {
      fixed += w;
    } else {
      numer += r_hat(i) - k * gamma;
      ++moving;
    }
  }
  if (moving > 0) {
    const double exact = (numer - 2.0 * lambda * (1.0 - fixed)) / moving;
    bool consistent = true;
    for (Eigen::Index i = 0; i < n && consistent; ++i) {
      consistent = piece(i, exact, w) == pieces[static_cast<std::size_t>(i)];
    }
    if (consistent) nu = exact;
  }

  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) piece(i, nu, out(i));
  const double s = out.sum();
  if (s > 0.0) out /= s;
  return out;
}

FrankWolfeResult solve_fee_l2_fw(const Eigen::VectorXd& r_hat, const DecisionProblem& problem,
                                 const FrankWolfeOptions& options) {
  check_dims(r_hat, problem, "solve_fee_l2");
  if (problem.lambda == 0.0) {
    return FrankWolfeResult{solve_fee(r_hat, problem), 0.0, 0};
  }
  const Eigen::Index n = r_hat.size();
  const double lambda = problem.lambda;
  const Eigen::VectorXd& p = problem.w_prev.weights();

  // Minimization form f(w, u) = -r'w + gamma 1'u + lambda ||w||^2.
  auto gradient = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(2 * n);
    g.head(n) = -r_hat + 2.0 * lambda * x.head(n);
    g.tail(n).setConstant(problem.gamma);
    return g;
  };
  LinearProgram lmo = lifted_program(p, true);
  auto linear_minimizer = [&](const Eigen::VectorXd& g) {
    lmo.objective = -g;
    return solve_lp(lmo).x;
  };

  std::vector<Eigen::VectorXd> atoms;
  std::vector<double> alpha;
  Eigen::VectorXd x(2 * n);
  if (options.warm_start) {
    x.head(n) = solve_fee_l2_kkt(r_hat, problem);
    x.tail(n) = (x.head(n) - p).cwiseAbs();
  } else {
    x.head(n) = p;
    x.tail(n).setZero();
  }
  atoms.push_back(x);
  alpha.push_back(1.0);

  double gap = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= options.max_iterations; ++it) {
    const Eigen::VectorXd g = gradient(x);
    const Eigen::VectorXd s = linear_minimizer(g);
    gap = g.dot(x - s);
    if (gap <= options.gap_tolerance) {
      return FrankWolfeResult{Portfolio(x.head(n)), std::max(gap, 0.0), it};
    }
    if (it == options.max_iterations) break;

    std::size_t away = 0;
    double away_val = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      const double v = g.dot(atoms[k]);
      if (v > away_val) {
        away_val = v;
        away = k;
      }
    }
    const Eigen::VectorXd d = s - atoms[away];
    const double gd = g.dot(d);
    const double curv = lambda * d.head(n).squaredNorm();
    const double tmax = alpha[away];
    double t = curv > 0.0 ? std::min(tmax, -gd / (2.0 * curv)) : tmax;
    t = std::max(t, 0.0);

    x += t * d;
    std::size_t s_idx = atoms.size();
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      if ((atoms[k] - s).lpNorm<Eigen::Infinity>() <= 1e-12) {
        s_idx = k;
        break;
      }
    }
    if (s_idx == atoms.size()) {
      atoms.push_back(s);
      alpha.push_back(0.0);
    }
    alpha[s_idx] += t;
    alpha[away] -= t;
    if (alpha[away] <= 1e-15) {
      atoms.erase(atoms.begin() + static_cast<long>(away));
      alpha.erase(alpha.begin() + static_cast<long>(away));
    }
  }
  throw ConvergenceError("solve_fee_l2: Frank-Wolfe did not reach gap tolerance (final gap " +
                             std::to_string(gap) + ")",
                         gap);
}

Portfolio solve_fee_l2(const Eigen::VectorXd& r_hat, const DecisionProblem& problem) {
  return solve_fee_l2_fw(r_hat, problem).portfolio;
}

Portfolio solve_decision(const Eigen::VectorXd& coeff, const DecisionProblem& problem) {
  switch (problem.kind) {
    case ObjectiveKind::MaxReturn:
      if (coeff.size() != static_cast<Eigen::Index>(problem.size())) {
        throw SolverError("solve_decision: dimension mismatch");
      }
      return solve_max_return(coeff);
    case ObjectiveKind::MaxReturnFee:
      return solve_fee(coeff, problem);
    case ObjectiveKind::MaxReturnFeeL2:
      return solve_fee_l2(coeff, problem);
  }
  throw SolverError("solve_decision: unknown objective kind");
}

// ---------------------------------------------------------------------------
// Covariance and MaxSharpe

Eigen::MatrixXd CovarianceEstimate::loaded() const {
  Eigen::MatrixXd s = sigma;
  s.diagonal().array() += ridge;
  return s;
}

double default_ridge(const Eigen::MatrixXd& sigma) {
  return std::max(1e-6 * sigma.trace() / static_cast<double>(sigma.rows()), 1e-12);
}

CovarianceEstimate estimate_covariance(const Eigen::MatrixXd& returns, double ridge) {
  const Eigen::Index T = returns.rows();
  const Eigen::Index N = returns.cols();
  if (T < N + 2) {
    throw SolverError("estimate_covariance: window of " + std::to_string(T) +
                      " rows is shorter than n_assets + 2 = " + std::to_string(N + 2));
  }
  if (!(ridge >= 0.0)) throw SolverError("estimate_covariance: ridge must be >= 0");
  CovarianceEstimate est;
  est.mean = returns.colwise().mean().transpose();
  const Eigen::MatrixXd centered = returns.rowwise() - est.mean.transpose();
  est.sigma = centered.transpose() * centered / static_cast<double>(T - 1);
  est.sigma = 0.5 * (est.sigma + est.sigma.transpose());
  est.ridge = ridge;
  return est;
}

Eigen::VectorXd project_simplex_vector(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  if (n == 0 || !v.allFinite()) throw SolverError("project_simplex: input must be finite");
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0, tau = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) tau = t;
  }
  return (v.array() - tau).max(0.0);
}

Portfolio project_simplex(const Eigen::VectorXd& v) { return Portfolio(project_simplex_vector(v)); }

Portfolio solve_max_sharpe(const CovarianceEstimate& est, const MaxSharpeOptions& options) {
  const Eigen::Index n = est.mean.size();
  if (n == 0 || est.sigma.rows() != n || est.sigma.cols() != n) {
    throw SolverError("solve_max_sharpe: inconsistent estimate dimensions");
  }
  const Eigen::MatrixXd sigma = est.loaded();
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw SolverError("solve_max_sharpe: covariance is not positive definite");
  }
  const Eigen::VectorXd& mu = est.mean;
  const bool min_variance = mu.maxCoeff() <= 0.0;

  auto objective = [&](const Eigen::VectorXd& w) {
    const double var = w.dot(sigma * w);
    return min_variance ? -var : mu.dot(w) / std::sqrt(var);
  };
  auto gradient = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
    const Eigen::VectorXd sw = sigma * w;
    if (min_variance) return -2.0 * sw;
    const double var = w.dot(sw);
    const double sd = std::sqrt(var);
    return mu / sd - mu.dot(w) * sw / (var * sd);
  };

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
  Eigen::Index best_vertex = 0;
  if (min_variance) {
    sigma.diagonal().minCoeff(&best_vertex);
  } else {
    mu.maxCoeff(&best_vertex);
  }
  starts.push_back(Eigen::VectorXd::Unit(n, best_vertex));
  std::mt19937_64 rng(options.seed);
  std::exponential_distribution<double> expo(1.0);
  while (static_cast<int>(starts.size()) < options.starts) {
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = expo(rng);
    starts.push_back(w / w.sum());
  }

  Eigen::VectorXd best_w = starts.front();
  double best_f = -std::numeric_limits<double>::infinity();
  for (const auto& start : starts) {
    Eigen::VectorXd w = start;
    double f = objective(w);
    double step = 1.0;
    for (int it = 0; it < options.max_iterations; ++it) {
      const Eigen::VectorXd g = gradient(w);
      bool accepted = false;
      Eigen::VectorXd w_new;
      double f_new = f;
      while (step > 1e-20) {
        w_new = project_simplex_vector(w + step * g);
        f_new = objective(w_new);
        if (f_new >= f + 1e-4 * g.dot(w_new - w)) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      const double moved = (w_new - w).lpNorm<Eigen::Infinity>();
      w = w_new;
      f = f_new;
      step *= 2.0;
      if (moved < options.step_tolerance) break;
    }
    if (f > best_f) {
      best_f = f;
      best_w = w;
    }
  }
  return Portfolio(best_w);
}

}  // namespace dfolio
