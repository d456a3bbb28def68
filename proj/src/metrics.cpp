#include "dfolio/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>

#include "dfolio/csv.hpp"
#include "dfolio/errors.hpp"

namespace dfolio {

MetricsRow compute_metrics(const std::vector<double>& nav) {
  if (nav.size() < 2) throw SpanError("metrics: need at least two NAV points");
  for (double v : nav) {
    if (!(v > 0.0) || !std::isfinite(v)) throw SpanError("metrics: NAV must be positive and finite");
  }
  const std::size_t T = nav.size() - 1;
  std::vector<double> rho(T);
  for (std::size_t d = 0; d < T; ++d) rho[d] = nav[d + 1] / nav[d] - 1.0;

  double mean = 0.0;
  for (double r : rho) mean += r;
  mean /= static_cast<double>(T);
  double ss = 0.0, down = 0.0;
  for (double r : rho) {
    ss += (r - mean) * (r - mean);
    const double m = std::min(r, 0.0);
    down += m * m;
  }
  const double sd = T > 1 ? std::sqrt(ss / static_cast<double>(T - 1)) : 0.0;
  const double downside = std::sqrt(down / static_cast<double>(T));
  const double ann = std::sqrt(kTradingDays);

  MetricsRow row;
  row.annualized_return =
      (std::pow(nav.back() / nav.front(), kTradingDays / static_cast<double>(T)) - 1.0) * 100.0;
  row.annualized_volatility = sd * ann * 100.0;
  if (sd > 0.0) row.sharpe = mean / sd * ann;
  if (downside > 0.0) row.sortino = mean / downside * ann;
  double peak = nav.front(), dd = 0.0;
  for (double v : nav) {
    peak = std::max(peak, v);
    dd = std::min(dd, (v / peak - 1.0) * 100.0);
  }
  row.max_drawdown = dd;
  return row;
}

NavSeries span_series(const NavSeries& series, const DateRange& span) {
  const auto& d = series.dates;
  if (d.size() != series.nav.size() || d.empty()) throw SpanError("span: malformed NAV series");
  if (span.last < span.first) throw SpanError("span: end precedes start");
  if (span.first < d.front() || d.back() < span.last) {
    throw SpanError("span " + span.first.iso() + ".." + span.last.iso() + " lies outside the data " +
                    d.front().iso() + ".." + d.back().iso());
  }
  const auto b = static_cast<std::size_t>(std::lower_bound(d.begin(), d.end(), span.first) - d.begin());
  const auto e = static_cast<std::size_t>(std::upper_bound(d.begin(), d.end(), span.last) - d.begin());
  if (e <= b) throw SpanError("span " + span.first.iso() + ".." + span.last.iso() + " has no data");
  const std::size_t base = b > 0 ? b - 1 : b;
  NavSeries out;
  const double scale = series.nav[base];
  for (std::size_t i = base; i < e; ++i) {
    out.dates.push_back(d[i]);
    out.nav.push_back(series.nav[i] / scale);
  }
  return out;
}

MetricsRow compute_metrics(const NavSeries& series, const std::optional<DateRange>& span) {
  if (!span) return compute_metrics(series.nav);
  return compute_metrics(span_series(series, *span).nav);
}

MetricsReport subperiod_report(const std::vector<NamedSeries>& series,
                               const std::vector<NamedSpan>& spans) {
  MetricsReport out;
  for (const auto& s : series) {
    for (const auto& span : spans) {
      out.push_back({s.strategy, span.name, compute_metrics(s.series, span.range)});
    }
  }
  return out;
}

namespace {

using ojson = nlohmann::ordered_json;

ojson optional_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::optional<double> json_optional(const ojson& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw IngestError(where + ": missing key '" + key + "'");
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number()) throw IngestError(where + ": '" + key + "' is not a number");
  return v.get<double>();
}

double json_number(const ojson& j, const std::string& key, const std::string& where) {
  auto v = json_optional(j, key, where);
  if (!v) throw IngestError(where + ": '" + key + "' must not be null");
  return *v;
}

std::string optional_field(const std::optional<double>& v) {
  return v ? csv::format_double(*v) : std::string();
}

std::optional<double> parse_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return csv::parse_double(s);
}

}  // namespace

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report) {
  ojson root = ojson::object();
  for (const auto& e : report) {
    root[e.strategy][e.span] = ojson{{"annualized_return", e.row.annualized_return},
                                     {"annualized_volatility", e.row.annualized_volatility},
                                     {"sharpe", optional_json(e.row.sharpe)},
                                     {"sortino", optional_json(e.row.sortino)},
                                     {"max_drawdown", e.row.max_drawdown}};
  }
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot write file");
  out << root.dump(2) << '\n';
}

MetricsReport read_metrics_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError(path.string() + ": cannot open file");
  ojson root;
  try {
    root = ojson::parse(in);
  } catch (const std::exception& e) {
    throw IngestError(path.string() + ": invalid JSON: " + e.what());
  }
  if (!root.is_object()) throw IngestError(path.string() + ": schema mismatch: top level must be an object");
  MetricsReport out;
  for (const auto& [strategy, spans] : root.items()) {
    if (!spans.is_object()) throw IngestError(path.string() + ": schema mismatch at " + strategy);
    for (const auto& [span, row] : spans.items()) {
      const std::string where = path.string() + ": " + strategy + "/" + span;
      if (!row.is_object()) throw IngestError(where + ": schema mismatch");
      MetricsRow m;
      m.annualized_return = json_number(row, "annualized_return", where);
      m.annualized_volatility = json_number(row, "annualized_volatility", where);
      m.sharpe = json_optional(row, "sharpe", where);
      m.sortino = json_optional(row, "sortino", where);
      m.max_drawdown = json_number(row, "max_drawdown", where);
      out.push_back({strategy, span, m});
    }
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot write file");
  out << "strategy,span,Ret,Vol,Sharpe,Sortino,MaxDD\n";
  for (const auto& e : report) {
    out << csv::join({e.strategy, e.span, csv::format_double(e.row.annualized_return),
                      csv::format_double(e.row.annualized_volatility), optional_field(e.row.sharpe),
                      optional_field(e.row.sortino), csv::format_double(e.row.max_drawdown)})
        << '\n';
  }
}

MetricsReport read_metrics_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const std::vector<std::string> expected{"strategy", "span", "Ret", "Vol", "Sharpe", "Sortino", "MaxDD"};
  if (t.header != expected) throw IngestError(path.string() + ":1: unexpected metrics header");
  MetricsReport out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    try {
      MetricsRow m;
      m.annualized_return = csv::parse_double(r[2]);
      m.annualized_volatility = csv::parse_double(r[3]);
      m.sharpe = parse_optional(r[4]);
      m.sortino = parse_optional(r[5]);
      m.max_drawdown = csv::parse_double(r[6]);
      out.push_back({r[0], r[1], m});
    } catch (const std::invalid_argument& e) {
      throw IngestError(path.string() + ":" + std::to_string(t.line_numbers[i]) + ": " + e.what());
    }
  }
  return out;
}

MetricsComparison compare_metrics(const MetricsReport& a, const MetricsReport& b) {
  auto key = [](const MetricsEntry& e) { return e.strategy + "/" + e.span; };
  std::map<std::string, const MetricsEntry*> in_b;
  for (const auto& e : b) in_b[key(e)] = &e;
  std::map<std::string, bool> seen;

  MetricsComparison out;
  for (const auto& ea : a) {
    const auto it = in_b.find(key(ea));
    if (it == in_b.end()) {
      out.unmatched.push_back(key(ea) + " (only in a)");
      continue;
    }
    seen[key(ea)] = true;
    const MetricsRow& ra = ea.row;
    const MetricsRow& rb = it->second->row;
    const std::vector<std::tuple<std::string, std::optional<double>, std::optional<double>>> fields{
        {"Ret", ra.annualized_return, rb.annualized_return},
        {"Vol", ra.annualized_volatility, rb.annualized_volatility},
        {"Sharpe", ra.sharpe, rb.sharpe},
        {"Sortino", ra.sortino, rb.sortino},
        {"MaxDD", ra.max_drawdown, rb.max_drawdown},
    };
    for (const auto& [name, va, vb] : fields) {
      MetricDelta d{ea.strategy, ea.span, name, va, vb, std::nullopt, false};
      if (va && vb) {
        d.delta = *vb - *va;
        d.sign_flip = (*va > 0.0 && *vb < 0.0) || (*va < 0.0 && *vb > 0.0);
      }
      out.deltas.push_back(std::move(d));
    }
  }
  for (const auto& eb : b) {
    if (!seen.count(key(eb))) out.unmatched.push_back(key(eb) + " (only in b)");
  }
  return out;
}

}  // namespace dfolio
