#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dfolio/calendar.hpp"
#include "dfolio/decision.hpp"
#include "dfolio/feature_tensor.hpp"
#include "dfolio/market_data.hpp"
#include "dfolio/training.hpp"

namespace dfolio {

enum class StrategyType {
  SoftmaxMaxReturn,
  SoftmaxMaxSharpe,
  RobustSpo,
  Pto,
  SpoPlus,
  SpoPlusFee,
  SpoPlusFeeL2,
  MaxSharpe,
};

std::string strategy_type_name(StrategyType type);
/// Throws ConfigError for an unknown name.
StrategyType parse_strategy_type(const std::string& name);

struct StrategySpec {
  std::string name;
  StrategyType type = StrategyType::SpoPlus;
  double gamma = 0.0;
  double lambda = 0.0;
  double rho = 0.0;
  int robust_samples = 8;
  bool robust_corners = true;

  void validate() const;
};

/// The nine compared strategies with their default parameters.
std::vector<StrategySpec> table1_roster();

struct BacktestConfig {
  int lookback_months = 12;   ///< train + validation
  int validation_months = 3;
  double fee_rate = 0.005;
  std::optional<Date> start;  ///< first candidate rebalance month (default: data start)
  std::optional<Date> end;    ///< last day accrued (default: data end)
  std::vector<StrategySpec> roster = table1_roster();
  SearchSpace search;         ///< seed is replaced per window
  int batch_size = 63;
  std::size_t hidden = 32;
  bool fit_intercept = true;
  std::uint64_t seed = 0;
  int threads = 0;            ///< 0: hardware concurrency; DFOLIO_THREADS caps either
  bool record_traces = false;

  void validate() const;
};

/// Feature axis joined to the price panel. returns.row(a) is the simple return
/// earned on feature date a (close of the previous frame day to close of a).
struct BacktestData {
  MarketFrame frame;
  FeatureTensor features;          ///< raw, unstandardized
  std::vector<std::size_t> frame_row;
  Eigen::MatrixXd returns;         ///< axis x asset; row 0 is NaN when no prior day exists

  const std::vector<Date>& dates() const { return features.dates(); }
};

/// Feature dates must be a subset of frame dates with identical tickers.
BacktestData prepare_backtest_data(MarketFrame frame, FeatureTensor features);

/// Axis indices of the first trading day of each month in [start, end] that
/// has a full lookback on the axis. Throws ConfigError if none exists.
std::vector<std::size_t> rebalance_dates(const BacktestData& data, const BacktestConfig& config);

struct RebalanceRecord {
  Date date;
  Portfolio target;
  Eigen::VectorXd pre_trade;
  double turnover = 0.0;
  double fee = 0.0;
};

struct HparamRecord {
  Date date;
  double learning_rate = 0.0;
  int epochs = 0;
  double score = 0.0;
};

struct TraceRecord {
  Date date;
  std::size_t trial = 0;
  int epoch = 0;
  double loss = 0.0;
};

struct BacktestLedger {
  std::string strategy;
  std::vector<Date> nav_dates;
  std::vector<double> nav;
  std::vector<RebalanceRecord> rebalances;
  std::vector<HparamRecord> hparams;
  std::vector<TraceRecord> traces;
  Eigen::VectorXd holdings;  ///< current drifted weights
  std::string error;         ///< empty when the strategy completed

  bool ok() const { return error.empty(); }
  double last_nav() const { return nav.empty() ? 1.0 : nav.back(); }
};

/// Rebalance to `target` (fee against the drifted holdings), then hold it
/// buy-and-hold through `daily_returns` (days x assets). Throws AccountingError
/// if NAV drops to zero or below.
void accrue(BacktestLedger& ledger, Date rebalance_date, const std::vector<Date>& days,
            const Eigen::MatrixXd& daily_returns, const Portfolio& target, double fee_rate);

struct WindowResult {
  Portfolio target;
  std::optional<HparamRecord> hparams;
  std::vector<TraceRecord> traces;
};

/// Decision for the rebalance at axis index `t` given the live holdings. Uses
/// only features up to t-1 and returns realized up to t-1.
WindowResult run_window(const StrategySpec& strategy, std::size_t window_index, std::size_t t,
                        const BacktestData& data, const Eigen::VectorXd& live_holdings,
                        const BacktestConfig& config);

struct BacktestResult {
  std::vector<std::size_t> rebalance_indices;
  std::vector<BacktestLedger> ledgers;  ///< roster order

  bool all_ok() const;
};

/// Runs every roster strategy over the same rebalance dates; strategies run in
/// parallel and a failing strategy does not stop the others.
BacktestResult run_backtest(const BacktestData& data, const BacktestConfig& config);

/// Worker count: config.threads (or hardware concurrency), capped by DFOLIO_THREADS.
int worker_count(const BacktestConfig& config, std::size_t jobs);

}  // namespace dfolio
