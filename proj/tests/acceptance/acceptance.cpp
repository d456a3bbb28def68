// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "../oracles.hpp"
#include "dfolio/backtest.hpp"
#include "dfolio/cli.hpp"
#include "dfolio/decision.hpp"
#include "dfolio/features.hpp"
#include "dfolio/market_data.hpp"
#include "dfolio/metrics.hpp"
#include "dfolio/softmax_dfl.hpp"
#include "dfolio/spo.hpp"
#include "dfolio/training.hpp"

using namespace dfolio;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. loss >= regret >= 0 against independent regret oracles

Verdict spo_bound_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240101);
  std::uniform_real_distribution<double> ug(0.0, 0.05), ul(0.0, 1.0);
  int bad_regret = 0, bad_bound = 0, bad_solver = 0;
  double worst_slack = 0.0;
  const int N = 10000;
  for (int k = 0; k < N; ++k) {
    const int kind = k % 3;
    // Grid oracles certify fee problems for n <= 3 only.
    const int n = kind == 0 ? 2 + (k / 3) % 7 : 2 + (k / 3) % 2;
    const Eigen::VectorXd r = oracle::uniform_vector(n, -0.1, 0.1, rng);
    const Eigen::VectorXd rh = oracle::uniform_vector(n, -0.1, 0.1, rng);
    const Eigen::VectorXd prev = oracle::grid_simplex_point(n, 1000, rng);
    const double gamma = ug(rng);
    double lambda = ul(rng);
    if (lambda == 0.0) lambda = 0.5;
    DecisionProblem problem = kind == 0   ? DecisionProblem::max_return(static_cast<std::size_t>(n))
                              : kind == 1 ? DecisionProblem::with_fee(gamma, Portfolio(prev))
                                          : DecisionProblem::with_fee_l2(gamma, lambda, Portfolio(prev));
    const double g = kind == 0 ? 0.0 : gamma, l = kind == 2 ? lambda : 0.0;
    const Eigen::VectorXd p = kind == 0 ? Eigen::VectorXd::Zero(n) : prev;

    const SpoEvaluation ev = spo_plus({rh, r, problem});
    const Eigen::VectorXd w_hat = solve_decision(rh, problem).weights();
    const double achieved = oracle::objective(r, w_hat, g, l, p);
    double best;
    if (kind == 0) {
      best = oracle::vertex_max(r);
    } else {
      const double grid = oracle::concave_grid_max(r, g, l, p).value;
      const double solver = oracle::objective(r, ev.w_star.weights(), g, l, p);
      if (grid > solver + 1e-9) ++bad_solver;
      best = std::max(grid, solver);
    }
    const double regret = best - achieved;
    if (regret < -1e-9) ++bad_regret;
    if (ev.loss < regret - 1e-9) ++bad_bound;
    worst_slack = std::min(worst_slack, ev.loss - regret);
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = bad_regret == 0 && bad_bound == 0 && bad_solver == 0 && secs < 60.0;
  v.detail = fmt("%d instances, regret<0: %d, loss<regret: %d, solver below grid: %d, min(loss-regret) %.3g, %.1fs",
                 N, bad_regret, bad_bound, bad_solver, worst_slack, secs);
  return v;
}

// ---------------------------------------------------------------------------
// 2. analytic gradients vs central differences

Verdict gradient_checks() {
  std::mt19937_64 rng(77);
  int spo_checked = 0, spo_bad = 0;
  double spo_worst = 0.0;
  for (int k = 0; k < 5000 && spo_checked < 100; ++k) {
    const int kind = k % 3;
    const int n = 2 + k % 6;
    const Eigen::VectorXd r = oracle::uniform_vector(n, -0.1, 0.1, rng);
    const Eigen::VectorXd rh = oracle::uniform_vector(n, -0.1, 0.1, rng);
    const Portfolio prev(oracle::random_simplex_point(n, rng));
    const double gamma = std::uniform_real_distribution<double>(0.0, 0.05)(rng);
    const double lambda = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    const DecisionProblem problem = kind == 0   ? DecisionProblem::max_return(static_cast<std::size_t>(n))
                                    : kind == 1 ? DecisionProblem::with_fee(gamma, prev)
                                                : DecisionProblem::with_fee_l2(gamma, lambda, prev);
    const SpoEvaluation base = spo_plus({rh, r, problem});
    // Margin-safe: the shifted decision is locally constant (piecewise-linear
    // kinds) and the subgradient is not vanishingly small.
    if (base.subgradient.norm() < 1e-3) continue;
    bool safe = true;
    if (kind != 2) {
      for (int i = 0; i < n && safe; ++i) {
        for (double s : {1e-4, -1e-4}) {
          Eigen::VectorXd q = rh;
          q(i) += s;
          safe = safe && (spo_plus({q, r, problem}).w_tilde.weights() - base.w_tilde.weights()).norm() <= 1e-12;
        }
      }
    }
    if (!safe) continue;
    const Eigen::VectorXd fd =
        oracle::central_diff([&](const Eigen::VectorXd& q) { return spo_plus({q, r, problem}).loss; }, rh, 1e-6);
    const double err = oracle::relative_error(base.subgradient, fd);
    spo_worst = std::max(spo_worst, err);
    spo_bad += err > 1e-5;
    ++spo_checked;
  }

  int dfl_checked = 0, dfl_bad = 0;
  double dfl_worst = 0.0;
  for (int k = 0; k < 5000 && dfl_checked < 100; ++k) {
    const int n = 3 + k % 5, F = 2 + k % 4, H = 4 + k % 7;
    auto m = SoftmaxAllocator::init(static_cast<std::size_t>(n), static_cast<std::size_t>(F),
                                    static_cast<std::size_t>(H), rng());
    m.inferencer.theta = oracle::uniform_vector(F, -0.5, 0.5, rng);
    m.inferencer.intercept = 0.05;
    const Eigen::MatrixXd x = oracle::uniform_vector(n * F, -1, 1, rng).reshaped(n, F);
    const Eigen::VectorXd r = oracle::uniform_vector(n, -0.05, 0.05, rng);
    const Eigen::VectorXd z1 = m.W1 * predict(m.inferencer, x) + m.b1;
    if (z1.cwiseAbs().minCoeff() < 1e-3) continue;  // away from ReLU kinks
    const Eigen::MatrixXd a = oracle::uniform_vector(n * n, -0.1, 0.1, rng).reshaped(n, n);
    const CovarianceEstimate est{Eigen::VectorXd::Zero(n), a * a.transpose(), 1e-4};
    bool ok = true;
    for (auto obj : {DflObjective::MaxReturn, DflObjective::MaxSharpe}) {
      const auto ev = dfl_loss_and_gradient(m, x, r, obj, &est);
      const Eigen::VectorXd fd = oracle::central_diff(
          [&](const Eigen::VectorXd& pv) {
            SoftmaxAllocator q = m;
            q.unflatten(pv);
            return dfl_loss(allocate_weights(q, x), r, obj, &est);
          },
          m.flatten(), 1e-6);
      const double err = oracle::relative_error(ev.gradient, fd);
      dfl_worst = std::max(dfl_worst, err);
      ok = ok && err <= 1e-5;
    }
    dfl_bad += !ok;
    ++dfl_checked;
  }
  Verdict v;
  v.pass = spo_checked == 100 && dfl_checked == 100 && spo_bad == 0 && dfl_bad == 0;
  v.detail = fmt("SPO+ %d/%d within 1e-5 (worst %.2g); SoftmaxDFL %d/%d within 1e-5 (worst %.2g)",
                 spo_checked - spo_bad, spo_checked, spo_worst, dfl_checked - dfl_bad, dfl_checked, dfl_worst);
  return v;
}

// ---------------------------------------------------------------------------
// 3. solvers against grid and KKT oracles

Verdict solver_oracles() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> ug(0.0, 0.05), ul(0.01, 1.0);

  double fee_worst = 0.0;
  for (int k = 0; k < 500; ++k) {
    const Eigen::VectorXd r = oracle::uniform_vector(3, -0.1, 0.1, rng);
    const Eigen::VectorXd prev = oracle::grid_simplex_point(3, 1000, rng);
    const double gamma = ug(rng);
    const auto w = solve_fee(r, DecisionProblem::with_fee(gamma, Portfolio(prev)));
    const double got = oracle::objective(r, w.weights(), gamma, 0.0, prev);
    fee_worst = std::max(fee_worst, std::abs(got - oracle::grid_max(r, gamma, 0.0, prev).value));
  }

  double fw_gap = 0.0, l2_worst = 0.0;
  int fw_fail = 0;
  for (int k = 0; k < 500; ++k) {
    const int n = 2 + k % 2;
    const Eigen::VectorXd r = oracle::uniform_vector(n, -0.1, 0.1, rng);
    const Eigen::VectorXd prev = oracle::grid_simplex_point(n, 1000, rng);
    const double gamma = ug(rng), lambda = ul(rng);
    try {
      const auto res = solve_fee_l2_fw(r, DecisionProblem::with_fee_l2(gamma, lambda, Portfolio(prev)));
      fw_gap = std::max(fw_gap, res.gap);
      const double got = oracle::objective(r, res.portfolio.weights(), gamma, lambda, prev);
      l2_worst = std::max(l2_worst, std::abs(got - oracle::grid_max(r, gamma, lambda, prev).value));
    } catch (const std::exception&) {
      ++fw_fail;
    }
  }

  double sharpe_worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const int n = k < 100 ? 2 : 3;
    const Eigen::MatrixXd a = oracle::uniform_vector(n * n, -1.0, 1.0, rng).reshaped(n, n);
    const Eigen::MatrixXd sigma = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd mu = oracle::uniform_vector(n, -0.05, 0.1, rng);
    const auto w = solve_max_sharpe(CovarianceEstimate{mu, sigma, 0.0});
    const bool mv = mu.maxCoeff() <= 0.0;
    const auto grid = oracle::sharpe_grid(mu, sigma, 1000, mv);
    const double got = mv ? -w.weights().dot(sigma * w.weights()) : oracle::sharpe(mu, sigma, w.weights());
    sharpe_worst = std::max(sharpe_worst, std::max(grid.value - got, 0.0));
  }

  int kkt_bad = 0;
  for (int k = 0; k < 10000; ++k) {
    const int n = 1 + k % 12;
    const Eigen::VectorXd v = oracle::uniform_vector(n, -3.0, 3.0, rng);
    const Eigen::VectorXd w = project_simplex_vector(v);
    bool ok = w.minCoeff() >= 0.0 && std::abs(w.sum() - 1.0) <= 1e-12;
    // v - w = tau 1 - mu, mu >= 0, mu_i w_i = 0
    const Eigen::VectorXd g = v - w;
    double tau = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (w(i) > 0.0) tau = std::max(tau, g(i));
    }
    for (int i = 0; i < n; ++i) ok = ok && (w(i) > 0.0 ? std::abs(g(i) - tau) <= 1e-9 : g(i) <= tau + 1e-9);
    kkt_bad += !ok;
  }

  Verdict v;
  v.pass = fee_worst <= 1e-5 && fw_fail == 0 && fw_gap <= 1e-7 && l2_worst <= 1e-5 && sharpe_worst <= 1e-4 &&
           kkt_bad == 0;
  v.detail = fmt("fee |obj-grid| %.2g; FW gap %.2g (%d failures), |obj-grid| %.2g; sharpe grid shortfall %.2g; "
                 "simplex KKT failures %d/10000",
                 fee_worst, fw_gap, fw_fail, l2_worst, sharpe_worst, kkt_bad);
  return v;
}

// ---------------------------------------------------------------------------
// 4. full switch costs exactly 1%

Verdict fee_arithmetic() {
  BacktestLedger l;
  l.holdings = Portfolio::vertex(2, 0).weights();
  l.nav_dates = {Date(2020, 1, 1)};
  l.nav = {1.0};
  // NAV is recorded per held day; one zero-return day isolates the fee.
  accrue(l, Date(2020, 1, 2), {Date(2020, 1, 2)}, Eigen::MatrixXd::Zero(1, 2), Portfolio::vertex(2, 1), 0.005);
  const double nav = l.last_nav();
  Verdict v;
  v.pass = nav == 0.99 && l.rebalances.back().turnover == 2.0;
  v.detail = fmt("NAV %.17g, turnover %.17g", nav, l.rebalances.back().turnover);
  return v;
}

// ---------------------------------------------------------------------------
// 5. poisoning the future changes no past decision

BacktestData market_from_frame(const MarketFrame& frame) {
  return prepare_backtest_data(frame, compute_indicators(frame));
}

Verdict no_leakage() {
  SyntheticSpec spec;
  spec.n_assets = 5;
  spec.n_days = 420;
  spec.seed = 55;
  const MarketFrame frame = generate_synthetic(spec).frame;
  const BacktestData clean = market_from_frame(frame);

  BacktestConfig cfg;
  cfg.lookback_months = 4;
  cfg.validation_months = 1;
  cfg.batch_size = 21;
  cfg.hidden = 8;
  cfg.search.n_trials = 2;
  cfg.search.epochs_min = 5;
  cfg.search.epochs_max = 10;
  cfg.seed = 9;
  const BacktestResult base = run_backtest(clean, cfg);

  int compared = 0, differ = 0;
  std::string failed;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> shock(0.5, 1.5);
  const auto& idx = base.rebalance_indices;
  for (std::size_t pick : {idx.size() / 3, 2 * idx.size() / 3}) {
    const std::size_t t = idx[pick];
    const Date cut = clean.dates()[t];
    Eigen::MatrixXd px = frame.adj_close(), vol = frame.volume();
    for (Eigen::Index d = 0; d < px.rows(); ++d) {
      if (frame.dates()[static_cast<std::size_t>(d)] < cut) continue;
      for (Eigen::Index i = 0; i < px.cols(); ++i) {
        px(d, i) *= shock(rng);
        vol(d, i) *= shock(rng) * 10.0;
      }
    }
    const BacktestData poisoned = market_from_frame(MarketFrame(frame.dates(), frame.tickers(), px, vol));
    const BacktestResult res = run_backtest(poisoned, cfg);
    for (std::size_t s = 0; s < base.ledgers.size(); ++s) {
      const auto& a = base.ledgers[s];
      const auto& b = res.ledgers[s];
      for (std::size_t w = 0; w < a.rebalances.size() && a.rebalances[w].date <= cut; ++w) {
        ++compared;
        const bool same = w < b.rebalances.size() && a.rebalances[w].target.weights() == b.rebalances[w].target.weights() &&
                          a.rebalances[w].pre_trade == b.rebalances[w].pre_trade;
        if (!same) {
          ++differ;
          failed = a.strategy + "@" + a.rebalances[w].date.iso();
        }
      }
    }
  }
  Verdict v;
  v.pass = base.all_ok() && base.ledgers.size() == 9 && compared > 0 && differ == 0;
  v.detail = fmt("%d decisions dated <= cut compared across 9 strategies, %d differ%s%s", compared, differ,
                 failed.empty() ? "" : ", e.g. ", failed.c_str());
  return v;
}

// ---------------------------------------------------------------------------
// 6. SPO+ vs MSE and RobustSPO vs SPO+ on planted-signal markets

std::vector<double> daily_regret(const LinearPredictor& m, const Dataset& d) {
  std::vector<double> out;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const Eigen::VectorXd w = solve_max_return(predict(m, d.features[k])).weights();
    out.push_back(oracle::vertex_max(d.targets[k]) - d.targets[k].dot(w));
  }
  return out;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double worst_decile(std::vector<double> v) {
  std::sort(v.begin(), v.end(), std::greater<>());
  const std::size_t k = std::max<std::size_t>(1, v.size() / 10);
  return std::accumulate(v.begin(), v.begin() + static_cast<long>(k), 0.0) / static_cast<double>(k);
}

Verdict decision_quality() {
  const auto t0 = Clock::now();
  const std::size_t n_train = 756, n_test = 10000;
  int spo_wins = 0, robust_wins = 0, robust_strict = 0;
  double wd_spo = 0.0, wd_rob = 0.0, mean_spo = 0.0, mean_mse = 0.0;
  for (int s = 0; s < 20; ++s) {
    SyntheticSpec spec;
    spec.seed = 1000 + static_cast<std::uint64_t>(s);
    spec.n_assets = 10;
    spec.n_days = n_train + n_test;
    spec.feature_persistence = 0.9;
    spec.hetero_feature = 0;
    spec.hetero_strength = 1.0;
    spec.noise_scale = 0.01;
    spec.market_noise_scale = 0.1;
    const auto m = generate_synthetic(spec);
    const Eigen::MatrixXd& px = m.frame.adj_close();
    Dataset tr, te;
    for (std::size_t k = 0; k + 1 < spec.n_days; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      auto& d = k < n_train ? tr : te;
      d.features.push_back(m.features.slice(k));
      d.targets.push_back((px.row(kk + 1).array() / px.row(kk).array() - 1.0).transpose());
    }
    TrainConfig c;
    c.epochs = 40;
    c.learning_rate = 2e-4;
    c.batch_size = 63;
    c.problem = DecisionProblem::max_return(spec.n_assets);
    c.seed = static_cast<std::uint64_t>(s);
    c.loss_kind = LossKind::SpoPlus;
    const auto spo = train(tr, c).model;
    c.loss_kind = LossKind::MSE;
    const auto mse = train(tr, c).model;
    c.loss_kind = LossKind::RobustSpo;
    c.robust = RobustConfig{0.1, 8, true, static_cast<std::uint64_t>(s)};
    const auto robust = train(tr, c).model;
    const auto r_spo = daily_regret(spo, te), r_mse = daily_regret(mse, te), r_rob = daily_regret(robust, te);
    spo_wins += mean_of(r_spo) <= mean_of(r_mse);
    robust_wins += worst_decile(r_rob) <= worst_decile(r_spo);
    robust_strict += worst_decile(r_rob) < worst_decile(r_spo);
    mean_spo += mean_of(r_spo) / 20.0;
    mean_mse += mean_of(r_mse) / 20.0;
    wd_spo += worst_decile(r_spo) / 20.0;
    wd_rob += worst_decile(r_rob) / 20.0;
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = spo_wins >= 15 && robust_wins >= 12 && secs < 600.0;
  v.detail = fmt("SPO+ mean regret <= MSE in %d/20 seeds (avg %.5f vs %.5f); RobustSPO(0.1) worst decile <= SPO+ "
                 "in %d/20, strictly in %d (avg %.5f vs %.5f); %.0fs",
                 spo_wins, mean_spo, mean_mse, robust_wins, robust_strict, wd_rob, wd_spo, secs);
  return v;
}

// ---------------------------------------------------------------------------
// 7. two identical CLI runs produce identical bytes

Verdict end_to_end_determinism() {
  const fs::path dir = oracle::scratch_dir("acceptance_e2e");
  SynthOptions so;
  so.spec.n_assets = 10;
  so.spec.n_days = 756;
  so.spec.seed = 2024;
  so.output_dir = dir / "data";
  std::ostringstream sink, err;
  if (cmd_synth(so, sink, err) != 0) return {false, "synthetic data generation failed: " + err.str()};
  std::ofstream(dir / "run.json") << R"({"data": "data", "output_dir": "run1", "seed": 11})" << '\n';

  double slowest = 0.0;
  for (const char* out : {"run1", "run2"}) {
    RunOverrides o;
    o.output_dir = dir / out;
    const auto t0 = Clock::now();
    const int rc = cmd_backtest(dir / "run.json", o, sink, err);
    slowest = std::max(slowest, seconds_since(t0));
    if (rc != 0) return {false, std::string("cmd_backtest exit ") + std::to_string(rc) + ": " + err.str()};
  }
  const bool nav = oracle::slurp(dir / "run1" / "nav.csv") == oracle::slurp(dir / "run2" / "nav.csv");
  const bool met = oracle::slurp(dir / "run1" / "metrics.json") == oracle::slurp(dir / "run2" / "metrics.json");
  const auto strategies = read_metrics_json(dir / "run1" / "metrics.json").size();
  Verdict v;
  v.pass = nav && met && strategies == 9 && slowest < 900.0;
  v.detail = fmt("nav.csv %s, metrics.json %s, %zu strategy rows, slowest run %.0fs", nav ? "identical" : "DIFFERS",
                 met ? "identical" : "DIFFERS", strategies, slowest);
  return v;
}

// ---------------------------------------------------------------------------
// 8. metric spot values

Verdict metric_spot_values() {
  std::vector<double> doubling{1.0};
  const double g = std::pow(2.0, 1.0 / 252.0);
  for (int d = 0; d < 252; ++d) doubling.push_back(doubling.back() * g);
  const double ret = compute_metrics(doubling).annualized_return;
  const double dd = compute_metrics(std::vector<double>{1.0, 1.2, 0.9, 1.1}).max_drawdown;
  const auto mono = compute_metrics(std::vector<double>{1.0, 1.01, 1.02, 1.05});
  Verdict v;
  v.pass = std::abs(ret - 100.0) <= 1e-9 && dd == -25.0 && mono.max_drawdown == 0.0 && !mono.sortino;
  v.detail = fmt("doubling %.12f%%, MaxDD %.17g%%, monotone MaxDD %g with Sortino %s", ret, dd, mono.max_drawdown,
                 mono.sortino ? "defined" : "undefined");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"SPO+ bound suite", spo_bound_suite},
      {"gradient checks", gradient_checks},
      {"solver oracles", solver_oracles},
      {"fee arithmetic", fee_arithmetic},
      {"no leakage", no_leakage},
      {"decision-quality benchmark", decision_quality},
      {"end-to-end determinism", end_to_end_determinism},
      {"metric spot values", metric_spot_values},
  };
  // Optional argument: a comma-free list of criterion numbers to run, e.g. "148".
  const std::string only = argc > 1 ? argv[1] : "";
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && only.find(static_cast<char>('1' + i)) == std::string::npos) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
