#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfolio/calendar.hpp"

namespace dfolio {

/// Percent units for returns, volatility and drawdown.
struct MetricsRow {
  double annualized_return = 0.0;
  double annualized_volatility = 0.0;
  std::optional<double> sharpe;   ///< undefined when daily returns have zero spread
  std::optional<double> sortino;  ///< undefined when there is no downside
  double max_drawdown = 0.0;      ///< in [-100, 0]
};

inline constexpr double kTradingDays = 252.0;

/// Metrics of a daily NAV path (at least two points).
MetricsRow compute_metrics(const std::vector<double>& nav);

/// The path restricted to `span`, rebased to 1.0 on the last point before the
/// span (or the first point inside it). Throws SpanError when the span has no
/// data or extends beyond the series.
struct NavSeries {
  std::vector<Date> dates;
  std::vector<double> nav;
};
NavSeries span_series(const NavSeries& series, const DateRange& span);
MetricsRow compute_metrics(const NavSeries& series, const std::optional<DateRange>& span);

struct NamedSpan {
  std::string name;
  DateRange range;
};

struct MetricsEntry {
  std::string strategy;
  std::string span;
  MetricsRow row;
};
using MetricsReport = std::vector<MetricsEntry>;

struct NamedSeries {
  std::string strategy;
  NavSeries series;
};

/// One row per (strategy, span), strategies outer, in input order.
MetricsReport subperiod_report(const std::vector<NamedSeries>& series,
                               const std::vector<NamedSpan>& spans);

/// `{strategy: {span: {annualized_return, annualized_volatility, sharpe, sortino, max_drawdown}}}`
/// with undefined ratios as null.
void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_metrics_json(const std::filesystem::path& path);
/// `strategy,span,Ret,Vol,Sharpe,Sortino,MaxDD`; undefined ratios are empty fields.
void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_metrics_csv(const std::filesystem::path& path);

struct MetricDelta {
  std::string strategy;
  std::string span;
  std::string metric;
  std::optional<double> a;
  std::optional<double> b;
  std::optional<double> delta;  ///< b - a when both are defined
  bool sign_flip = false;
};

struct MetricsComparison {
  std::vector<MetricDelta> deltas;
  std::vector<std::string> unmatched;  ///< "strategy/span (only in a|b)"
};
MetricsComparison compare_metrics(const MetricsReport& a, const MetricsReport& b);

}  // namespace dfolio
