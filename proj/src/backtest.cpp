#include "dfolio/backtest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <thread>

#include "dfolio/errors.hpp"
#include "dfolio/features.hpp"
#include "dfolio/seed.hpp"
#include "dfolio/softmax_dfl.hpp"
#include "dfolio/spo.hpp"

namespace dfolio {

namespace {

const std::map<StrategyType, std::string>& type_names() {
  static const std::map<StrategyType, std::string> names{
      {StrategyType::SoftmaxMaxReturn, "softmax_maxreturn"},
      {StrategyType::SoftmaxMaxSharpe, "softmax_maxsharpe"},
      {StrategyType::RobustSpo, "robust_spo"},
      {StrategyType::Pto, "pto"},
      {StrategyType::SpoPlus, "spo_plus"},
      {StrategyType::SpoPlusFee, "spo_plus_fee"},
      {StrategyType::SpoPlusFeeL2, "spo_plus_fee_l2"},
      {StrategyType::MaxSharpe, "max_sharpe"},
  };
  return names;
}

}  // namespace

std::string strategy_type_name(StrategyType type) { return type_names().at(type); }

StrategyType parse_strategy_type(const std::string& name) {
  for (const auto& [type, n] : type_names()) {
    if (n == name) return type;
  }
  throw ConfigError("unknown strategy type '" + name + "'");
}

void StrategySpec::validate() const {
  if (name.empty()) throw ConfigError("strategy: empty name");
  if (!(gamma >= 0.0) || !(lambda >= 0.0)) {
    throw ConfigError("strategy " + name + ": gamma and lambda must be >= 0");
  }
  if (type == StrategyType::SpoPlusFeeL2 && !(lambda > 0.0)) {
    throw ConfigError("strategy " + name + ": lambda must be > 0");
  }
  if (type == StrategyType::RobustSpo) {
    if (!(rho > 0.0)) throw ConfigError("strategy " + name + ": rho must be > 0");
    if (robust_samples < 1) throw ConfigError("strategy " + name + ": robust_samples must be >= 1");
  }
}

std::vector<StrategySpec> table1_roster() {
  std::vector<StrategySpec> r;
  r.push_back({"softmax_maxreturn", StrategyType::SoftmaxMaxReturn});
  r.push_back({"softmax_maxsharpe", StrategyType::SoftmaxMaxSharpe});
  StrategySpec robust{"robust_spo_0.01", StrategyType::RobustSpo};
  robust.rho = 0.01;
  r.push_back(robust);
  robust.name = "robust_spo_0.1";
  robust.rho = 0.1;
  r.push_back(robust);
  r.push_back({"pto_markowitz", StrategyType::Pto});
  StrategySpec fee{"spo_plus_fee", StrategyType::SpoPlusFee};
  fee.gamma = 0.005;
  r.push_back(fee);
  StrategySpec l2{"spo_plus_fee_l2", StrategyType::SpoPlusFeeL2};
  l2.gamma = 0.005;
  l2.lambda = 0.42;
  r.push_back(l2);
  r.push_back({"spo_plus", StrategyType::SpoPlus});
  r.push_back({"max_sharpe", StrategyType::MaxSharpe});
  return r;
}

void BacktestConfig::validate() const {
  if (validation_months < 1 || lookback_months <= validation_months) {
    throw ConfigError("backtest: need 1 <= validation_months < lookback_months");
  }
  if (!(fee_rate >= 0.0) || !std::isfinite(fee_rate)) {
    throw ConfigError("backtest: fee_rate must be finite and >= 0");
  }
  if (start && end && *end < *start) throw ConfigError("backtest: end precedes start");
  if (roster.empty()) throw ConfigError("backtest: empty strategy roster");
  for (std::size_t i = 0; i < roster.size(); ++i) {
    roster[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (roster[j].name == roster[i].name) {
        throw ConfigError("backtest: duplicate strategy name " + roster[i].name);
      }
    }
  }
  search.validate();
  if (batch_size < 1) throw ConfigError("backtest: batch_size must be >= 1");
  if (hidden < 1) throw ConfigError("backtest: hidden must be >= 1");
}

BacktestData prepare_backtest_data(MarketFrame frame, FeatureTensor features) {
  if (features.tickers() != frame.tickers()) {
    throw UniverseError("backtest data: feature tickers differ from the price panel");
  }
  if (features.n_dates() == 0) throw UniverseError("backtest data: no feature dates");
  if (!features.all_finite()) throw UniverseError("backtest data: non-finite features");
  BacktestData d;
  const auto& fd = frame.dates();
  const auto n = static_cast<Eigen::Index>(frame.n_assets());
  d.returns.resize(static_cast<Eigen::Index>(features.n_dates()), n);
  std::size_t row = 0;
  for (std::size_t a = 0; a < features.n_dates(); ++a) {
    while (row < fd.size() && fd[row] < features.dates()[a]) ++row;
    if (row == fd.size() || fd[row] != features.dates()[a]) {
      throw UniverseError("backtest data: feature date " + features.dates()[a].iso() +
                          " is not a trading day of the price panel");
    }
    d.frame_row.push_back(row);
    const auto ai = static_cast<Eigen::Index>(a);
    if (row == 0) {
      d.returns.row(ai).setConstant(std::numeric_limits<double>::quiet_NaN());
    } else {
      const auto r = static_cast<Eigen::Index>(row);
      d.returns.row(ai) =
          (frame.adj_close().row(r).array() / frame.adj_close().row(r - 1).array() - 1.0).matrix();
    }
  }
  d.frame = std::move(frame);
  d.features = std::move(features);
  return d;
}

std::vector<std::size_t> rebalance_dates(const BacktestData& data, const BacktestConfig& config) {
  const auto& D = data.dates();
  const Date start = config.start.value_or(D.front());
  const Date end = config.end.value_or(D.back());
  std::vector<std::size_t> out;
  for (std::size_t a = 1; a < D.size(); ++a) {
    const bool first_of_month = D[a].year() != D[a - 1].year() || D[a].month() != D[a - 1].month();
    if (!first_of_month || D[a] < start || end < D[a]) continue;
    if (D.front() <= D[a].add_months(-config.lookback_months)) out.push_back(a);
  }
  if (out.empty()) {
    throw ConfigError("backtest: no rebalance date in range has a " +
                      std::to_string(config.lookback_months) + "-month lookback");
  }
  return out;
}

void accrue(BacktestLedger& ledger, Date rebalance_date, const std::vector<Date>& days,
            const Eigen::MatrixXd& daily_returns, const Portfolio& target, double fee_rate) {
  if (ledger.holdings.size() != static_cast<Eigen::Index>(target.size())) {
    throw AccountingError("accrue: holdings and target differ in size");
  }
  if (daily_returns.rows() != static_cast<Eigen::Index>(days.size()) ||
      daily_returns.cols() != ledger.holdings.size()) {
    throw AccountingError("accrue: return block shape mismatch");
  }
  double nav = ledger.last_nav();
  RebalanceRecord rec;
  rec.date = rebalance_date;
  rec.target = target;
  rec.pre_trade = ledger.holdings;
  rec.turnover = (target.weights() - ledger.holdings).lpNorm<1>();
  const double fee_fraction = fee_rate * rec.turnover;
  rec.fee = fee_fraction * nav;
  nav *= 1.0 - fee_fraction;
  if (!(nav > 0.0)) throw AccountingError("accrue: NAV non-positive after fee on " + rebalance_date.iso());
  ledger.rebalances.push_back(std::move(rec));

  Eigen::VectorXd w = target.weights();
  for (std::size_t d = 0; d < days.size(); ++d) {
    const Eigen::VectorXd r = daily_returns.row(static_cast<Eigen::Index>(d)).transpose();
    if (!r.allFinite()) throw AccountingError("accrue: non-finite return on " + days[d].iso());
    const double growth = 1.0 + w.dot(r);
    nav *= growth;
    if (!(nav > 0.0)) throw AccountingError("accrue: NAV non-positive on " + days[d].iso());
    w = w.cwiseProduct((Eigen::VectorXd::Ones(r.size()) + r) / growth);
    ledger.nav_dates.push_back(days[d]);
    ledger.nav.push_back(nav);
  }
  ledger.holdings = w;
}

namespace {

struct WindowSpans {
  std::size_t train_begin = 0, train_end = 0;  // sample indices k, half-open
  std::size_t val_begin = 0, val_end = 0;
  std::size_t trailing_begin = 0;              // first axis index inside the lookback
};

WindowSpans window_spans(const BacktestData& data, std::size_t t, const BacktestConfig& config) {
  const auto& D = data.dates();
  const Date lookback = D[t].add_months(-config.lookback_months);
  const Date val_start = D[t].add_months(-config.validation_months);
  WindowSpans s;
  s.trailing_begin = static_cast<std::size_t>(std::lower_bound(D.begin(), D.end(), lookback) - D.begin());
  const bool first_row_missing = !data.returns.row(0).allFinite();
  // Sample k pairs features at k with the return on k+1.
  s.train_begin = s.trailing_begin;
  s.train_end = s.train_begin;
  while (s.train_end + 1 < t && D[s.train_end + 1] < val_start) ++s.train_end;
  s.val_begin = std::max(s.train_end, static_cast<std::size_t>(
                                          std::lower_bound(D.begin(), D.end(), val_start) - D.begin()));
  s.val_end = t >= 1 ? t - 1 : 0;
  if (s.val_end < s.val_begin) s.val_end = s.val_begin;
  if (first_row_missing && s.trailing_begin == 0) s.trailing_begin = 1;
  return s;
}

Dataset make_dataset(const BacktestData& data, const FeatureScaler& scaler, std::size_t begin,
                     std::size_t end) {
  Dataset ds;
  for (std::size_t k = begin; k < end; ++k) {
    ds.features.push_back(scaler.apply(data.features.slice(k)));
    ds.targets.push_back(data.returns.row(static_cast<Eigen::Index>(k + 1)).transpose());
  }
  return ds;
}

CovarianceEstimate covariance_of(const std::vector<Eigen::VectorXd>& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  CovarianceEstimate est = estimate_covariance(m, 0.0);
  est.ridge = default_ridge(est.sigma);
  return est;
}

void collect_traces(const SearchOutcome& outcome, Date date, std::vector<TraceRecord>& out) {
  for (std::size_t i = 0; i < outcome.trials.size(); ++i) {
    const auto& trace = outcome.trials[i].trace;
    for (std::size_t e = 0; e < trace.size(); ++e) {
      out.push_back({date, i, static_cast<int>(e), trace[e]});
    }
  }
}

}  // namespace

WindowResult run_window(const StrategySpec& strategy, std::size_t window_index, std::size_t t,
                        const BacktestData& data, const Eigen::VectorXd& live_holdings,
                        const BacktestConfig& config) {
  const auto& D = data.dates();
  if (t == 0 || t >= D.size()) throw ConfigError("run_window: rebalance index out of range");
  const std::uint64_t seed = mix_seed({config.seed, fnv1a(strategy.name), window_index});
  const Portfolio live(live_holdings);
  const std::size_t n = data.frame.n_assets();
  WindowResult result;

  if (strategy.type == StrategyType::MaxSharpe) {
    const WindowSpans s = window_spans(data, t, config);
    const Eigen::MatrixXd window = data.returns.middleRows(
        static_cast<Eigen::Index>(s.trailing_begin), static_cast<Eigen::Index>(t - s.trailing_begin));
    CovarianceEstimate est = estimate_covariance(window, 0.0);
    est.ridge = default_ridge(est.sigma);
    MaxSharpeOptions opts;
    opts.seed = seed;
    result.target = solve_max_sharpe(est, opts);
    return result;
  }

  const WindowSpans s = window_spans(data, t, config);
  if (s.train_end <= s.train_begin || s.val_end <= s.val_begin) {
    throw TrainingError("window " + D[t].iso() + ": empty training or validation span");
  }
  const FeatureScaler scaler =
      FeatureScaler::fit(data.features, IndexRange{s.train_begin, s.train_end});
  const Dataset train_set = make_dataset(data, scaler, s.train_begin, s.train_end);
  const Dataset validation = make_dataset(data, scaler, s.val_begin, s.val_end);
  const Eigen::MatrixXd latest = scaler.apply(data.features.slice(t - 1));

  SearchSpace space = config.search;
  space.seed = seed;
  HparamRecord hp;
  hp.date = D[t];

  if (strategy.type == StrategyType::SoftmaxMaxReturn ||
      strategy.type == StrategyType::SoftmaxMaxSharpe) {
    DflConfig base;
    base.objective = strategy.type == StrategyType::SoftmaxMaxReturn ? DflObjective::MaxReturn
                                                                     : DflObjective::MaxSharpe;
    base.batch_size = config.batch_size;
    base.hidden = config.hidden;
    base.seed = seed;
    std::optional<CovarianceEstimate> est;
    if (base.objective == DflObjective::MaxSharpe) est = covariance_of(train_set.targets);
    const DflChoice choice = dfl_search(train_set, validation, space, base, live, config.fee_rate,
                                        est ? &*est : nullptr);
    result.target = allocate(choice.model, latest);
    hp.learning_rate = choice.config.learning_rate;
    hp.epochs = choice.config.epochs;
    hp.score = choice.outcome.best_trial().score;
    if (config.record_traces) collect_traces(choice.outcome, D[t], result.traces);
    result.hparams = hp;
    return result;
  }

  TrainConfig base;
  base.batch_size = config.batch_size;
  base.seed = seed;
  base.fit_intercept = config.fit_intercept;
  base.problem = DecisionProblem{ObjectiveKind::MaxReturn, 0.0, 0.0, live};
  switch (strategy.type) {
    case StrategyType::Pto:
      base.loss_kind = LossKind::MSE;
      break;
    case StrategyType::SpoPlus:
      base.loss_kind = LossKind::SpoPlus;
      break;
    case StrategyType::SpoPlusFee:
      base.loss_kind = LossKind::SpoPlus;
      base.problem = DecisionProblem::with_fee(strategy.gamma, live);
      break;
    case StrategyType::SpoPlusFeeL2:
      base.loss_kind = LossKind::SpoPlus;
      base.problem = DecisionProblem::with_fee_l2(strategy.gamma, strategy.lambda, live);
      break;
    case StrategyType::RobustSpo:
      base.loss_kind = LossKind::RobustSpo;
      base.robust = RobustConfig{strategy.rho, strategy.robust_samples, strategy.robust_corners, seed};
      break;
    default:
      throw ConfigError("run_window: unhandled strategy type");
  }
  if (base.problem.size() != n) throw ConfigError("run_window: holdings dimension mismatch");
  const HyperparameterChoice choice =
      hyperparameter_search(train_set, validation, space, base, config.fee_rate);
  result.target = solve_decision(predict(choice.model, latest), base.problem);
  hp.learning_rate = choice.config.learning_rate;
  hp.epochs = choice.config.epochs;
  hp.score = choice.outcome.best_trial().score;
  if (config.record_traces) collect_traces(choice.outcome, D[t], result.traces);
  result.hparams = hp;
  return result;
}

bool BacktestResult::all_ok() const {
  return std::all_of(ledgers.begin(), ledgers.end(), [](const BacktestLedger& l) { return l.ok(); });
}

int worker_count(const BacktestConfig& config, std::size_t jobs) {
  int n = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("DFOLIO_THREADS")) {
    char* endp = nullptr;
    const long cap = std::strtol(env, &endp, 10);
    if (endp != env && *endp == '\0' && cap >= 1) n = std::min<long>(n, cap);
  }
  return std::max(1, std::min(n, static_cast<int>(jobs)));
}

namespace {

BacktestLedger run_strategy(const StrategySpec& spec, const BacktestData& data,
                            const BacktestConfig& config, const std::vector<std::size_t>& rebal,
                            std::size_t end_index) {
  const auto& D = data.dates();
  const std::size_t n = data.frame.n_assets();
  BacktestLedger ledger;
  ledger.strategy = spec.name;
  ledger.holdings = Portfolio::uniform(n).weights();
  ledger.nav_dates.push_back(D[rebal.front() - 1]);
  ledger.nav.push_back(1.0);
  std::size_t w = 0;
  try {
    for (; w < rebal.size(); ++w) {
      const std::size_t t = rebal[w];
      const std::size_t next = w + 1 < rebal.size() ? rebal[w + 1] : end_index;
      WindowResult wr = run_window(spec, w, t, data, ledger.holdings, config);
      const std::vector<Date> days(D.begin() + static_cast<long>(t), D.begin() + static_cast<long>(next));
      accrue(ledger, D[t], days,
             data.returns.middleRows(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(next - t)),
             wr.target, config.fee_rate);
      if (wr.hparams) ledger.hparams.push_back(*wr.hparams);
      for (auto& tr : wr.traces) ledger.traces.push_back(std::move(tr));
    }
  } catch (const std::exception& e) {
    ledger.error = "window " + D[rebal[w]].iso() + ": " + e.what();
  }
  return ledger;
}

}  // namespace

BacktestResult run_backtest(const BacktestData& data, const BacktestConfig& config) {
  config.validate();
  BacktestResult result;
  result.rebalance_indices = rebalance_dates(data, config);
  const auto& D = data.dates();
  const Date end = config.end.value_or(D.back());
  const auto end_index = static_cast<std::size_t>(std::upper_bound(D.begin(), D.end(), end) - D.begin());

  const std::size_t jobs = config.roster.size();
  result.ledgers.resize(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      result.ledgers[j] = run_strategy(config.roster[j], data, config, result.rebalance_indices, end_index);
    }
  };
  const int workers = worker_count(config, jobs);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return result;
}

}  // namespace dfolio
