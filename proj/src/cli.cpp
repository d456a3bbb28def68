#include "dfolio/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "dfolio/csv.hpp"
#include "dfolio/errors.hpp"

namespace dfolio {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Config parsing

namespace {

/// Collects every validation problem instead of stopping at the first.
class Issues {
 public:
  void add(const std::string& key, const std::string& msg) { list_.push_back(key + ": " + msg); }
  bool empty() const { return list_.empty(); }
  std::string joined() const {
    std::string s = "invalid configuration:";
    for (const auto& l : list_) s += "\n  " + l;
    return s;
  }

 private:
  std::vector<std::string> list_;
};

std::string key_of(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void check_keys(const json& obj, const std::string& prefix, const std::set<std::string>& allowed,
                Issues& issues) {
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) issues.add(key_of(prefix, k), "unknown key");
  }
}

template <class T>
void read_number(const json& obj, const std::string& prefix, const std::string& key, T& target,
                 Issues& issues) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) return issues.add(key_of(prefix, key), "must be a number");
    target = v.get<double>();
    if (!std::isfinite(target)) issues.add(key_of(prefix, key), "must be finite");
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) return issues.add(key_of(prefix, key), "must be true or false");
    target = v.get<bool>();
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) return issues.add(key_of(prefix, key), "must be a non-negative integer");
    target = v.get<T>();
  } else {
    if (!v.is_number_integer()) return issues.add(key_of(prefix, key), "must be an integer");
    target = v.get<T>();
  }
}

std::optional<std::string> read_string(const json& obj, const std::string& prefix,
                                       const std::string& key, Issues& issues) {
  if (!obj.contains(key)) return std::nullopt;
  if (!obj.at(key).is_string()) {
    issues.add(key_of(prefix, key), "must be a string");
    return std::nullopt;
  }
  return obj.at(key).get<std::string>();
}

std::optional<Date> read_date(const json& obj, const std::string& prefix, const std::string& key,
                              Issues& issues) {
  const auto s = read_string(obj, prefix, key, issues);
  if (!s) return std::nullopt;
  auto d = Date::try_parse(*s);
  if (!d) issues.add(key_of(prefix, key), "must be an ISO date YYYY-MM-DD, got '" + *s + "'");
  return d;
}

const json* read_object(const json& obj, const std::string& key, Issues& issues) {
  if (!obj.contains(key)) return nullptr;
  if (!obj.at(key).is_object()) {
    issues.add(key, "must be an object");
    return nullptr;
  }
  return &obj.at(key);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

StrategySpec parse_strategy(const json& j, const std::string& prefix, Issues& issues) {
  StrategySpec s;
  if (!j.is_object()) {
    issues.add(prefix, "must be an object");
    return s;
  }
  check_keys(j, prefix, {"name", "type", "gamma", "lambda", "rho", "robust_samples", "robust_corners"},
             issues);
  const auto type = read_string(j, prefix, "type", issues);
  if (!type) {
    issues.add(key_of(prefix, "type"), "required");
  } else {
    try {
      s.type = parse_strategy_type(*type);
    } catch (const ConfigError&) {
      issues.add(key_of(prefix, "type"),
                 "unknown strategy type '" + *type +
                     "' (expected softmax_maxreturn, softmax_maxsharpe, robust_spo, pto, spo_plus, "
                     "spo_plus_fee, spo_plus_fee_l2, max_sharpe)");
    }
  }
  s.name = read_string(j, prefix, "name", issues).value_or(type.value_or(""));
  if (s.type == StrategyType::SpoPlusFee || s.type == StrategyType::SpoPlusFeeL2) s.gamma = 0.005;
  if (s.type == StrategyType::SpoPlusFeeL2) s.lambda = 0.42;
  if (s.type == StrategyType::RobustSpo) s.rho = 0.1;
  read_number(j, prefix, "gamma", s.gamma, issues);
  read_number(j, prefix, "lambda", s.lambda, issues);
  read_number(j, prefix, "rho", s.rho, issues);
  read_number(j, prefix, "robust_samples", s.robust_samples, issues);
  read_number(j, prefix, "robust_corners", s.robust_corners, issues);
  if (s.gamma < 0.0) issues.add(key_of(prefix, "gamma"), "must be >= 0");
  if (s.lambda < 0.0) issues.add(key_of(prefix, "lambda"), "must be >= 0");
  if (s.type == StrategyType::SpoPlusFeeL2 && s.lambda == 0.0) {
    issues.add(key_of(prefix, "lambda"), "must be > 0 for spo_plus_fee_l2");
  }
  if (s.type == StrategyType::RobustSpo && !(s.rho > 0.0 && s.rho <= 1.0)) {
    issues.add(key_of(prefix, "rho"), "must be in (0, 1]");
  }
  if (s.robust_samples < 1) issues.add(key_of(prefix, "robust_samples"), "must be >= 1");
  return s;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid configuration: JSON parse error: ") + e.what());
  }
  Issues issues;
  RunConfig cfg;
  if (!root.is_object()) throw ConfigError("invalid configuration: top level must be an object");
  check_keys(root, "",
             {"data", "output_dir", "universe", "features", "indicators", "seed", "backtest", "search",
              "strategies", "spans"},
             issues);

  if (auto d = read_string(root, "", "data", issues)) {
    cfg.data = resolve(base_dir, *d);
    if (!fs::exists(cfg.data)) issues.add("data", "path does not exist: " + cfg.data.string());
  } else if (!root.contains("data")) {
    issues.add("data", "required");
  }
  cfg.output_dir = resolve(base_dir, read_string(root, "", "output_dir", issues).value_or("output"));
  if (root.contains("universe")) {
    const json& u = root.at("universe");
    if (!u.is_array()) {
      issues.add("universe", "must be an array of tickers");
    } else {
      for (const auto& t : u) {
        if (!t.is_string()) {
          issues.add("universe", "tickers must be strings");
        } else {
          cfg.universe.push_back(t.get<std::string>());
        }
      }
    }
  }
  if (auto f = read_string(root, "", "features", issues); f && *f != "indicators") {
    cfg.features_file = resolve(base_dir, *f);
    if (!fs::exists(*cfg.features_file)) {
      issues.add("features", "expected \"indicators\" or an existing features.csv path, got '" + *f + "'");
    }
  }
  if (const json* ind = read_object(root, "indicators", issues)) {
    check_keys(*ind, "indicators",
               {"sma_short", "sma_long", "rsi", "macd_fast", "macd_slow", "macd_signal", "bollinger",
                "bollinger_k", "volume_sma"},
               issues);
    auto& c = cfg.indicators;
    read_number(*ind, "indicators", "sma_short", c.sma_short, issues);
    read_number(*ind, "indicators", "sma_long", c.sma_long, issues);
    read_number(*ind, "indicators", "rsi", c.rsi, issues);
    read_number(*ind, "indicators", "macd_fast", c.macd_fast, issues);
    read_number(*ind, "indicators", "macd_slow", c.macd_slow, issues);
    read_number(*ind, "indicators", "macd_signal", c.macd_signal, issues);
    read_number(*ind, "indicators", "bollinger", c.bollinger, issues);
    read_number(*ind, "indicators", "bollinger_k", c.bollinger_k, issues);
    read_number(*ind, "indicators", "volume_sma", c.volume_sma, issues);
    try {
      c.validate();
    } catch (const ConfigError& e) {
      issues.add("indicators", e.what());
    }
  }
  BacktestConfig& bt = cfg.backtest;
  read_number(root, "", "seed", bt.seed, issues);
  if (const json* b = read_object(root, "backtest", issues)) {
    const std::string p = "backtest";
    check_keys(*b, p,
               {"start", "end", "lookback_months", "validation_months", "fee_rate", "batch_size",
                "hidden", "fit_intercept", "threads", "record_traces"},
               issues);
    bt.start = read_date(*b, p, "start", issues);
    bt.end = read_date(*b, p, "end", issues);
    read_number(*b, p, "lookback_months", bt.lookback_months, issues);
    read_number(*b, p, "validation_months", bt.validation_months, issues);
    read_number(*b, p, "fee_rate", bt.fee_rate, issues);
    read_number(*b, p, "batch_size", bt.batch_size, issues);
    read_number(*b, p, "hidden", bt.hidden, issues);
    read_number(*b, p, "fit_intercept", bt.fit_intercept, issues);
    read_number(*b, p, "threads", bt.threads, issues);
    read_number(*b, p, "record_traces", bt.record_traces, issues);
    if (bt.fee_rate < 0.0) issues.add("backtest.fee_rate", "must be >= 0");
    if (bt.validation_months < 1) issues.add("backtest.validation_months", "must be >= 1");
    if (bt.lookback_months <= bt.validation_months) {
      issues.add("backtest.lookback_months", "must exceed validation_months");
    }
    if (bt.batch_size < 1) issues.add("backtest.batch_size", "must be >= 1");
    if (bt.hidden < 1) issues.add("backtest.hidden", "must be >= 1");
    if (bt.threads < 0) issues.add("backtest.threads", "must be >= 0");
    if (bt.start && bt.end && *bt.end < *bt.start) issues.add("backtest.end", "precedes backtest.start");
  }
  if (const json* s = read_object(root, "search", issues)) {
    const std::string p = "search";
    check_keys(*s, p, {"lr_min", "lr_max", "epochs_min", "epochs_max", "n_trials"}, issues);
    auto& sp = bt.search;
    read_number(*s, p, "lr_min", sp.lr_min, issues);
    read_number(*s, p, "lr_max", sp.lr_max, issues);
    read_number(*s, p, "epochs_min", sp.epochs_min, issues);
    read_number(*s, p, "epochs_max", sp.epochs_max, issues);
    read_number(*s, p, "n_trials", sp.n_trials, issues);
    if (!(sp.lr_min > 0.0)) issues.add("search.lr_min", "must be > 0");
    if (sp.lr_max < sp.lr_min) issues.add("search.lr_max", "must be >= lr_min");
    if (sp.epochs_min < 1 || sp.epochs_min > 1000) issues.add("search.epochs_min", "must be in [1, 1000]");
    if (sp.epochs_max < sp.epochs_min || sp.epochs_max > 1000) {
      issues.add("search.epochs_max", "must be in [epochs_min, 1000]");
    }
    if (sp.n_trials < 1) issues.add("search.n_trials", "must be >= 1");
  }
  if (root.contains("strategies")) {
    const json& s = root.at("strategies");
    if (!s.is_array() || s.empty()) {
      issues.add("strategies", "must be a non-empty array");
    } else {
      bt.roster.clear();
      std::set<std::string> names;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const std::string p = "strategies[" + std::to_string(i) + "]";
        StrategySpec spec = parse_strategy(s[i], p, issues);
        if (!spec.name.empty() && !names.insert(spec.name).second) {
          issues.add(p + ".name", "duplicate strategy name '" + spec.name + "'");
        }
        bt.roster.push_back(std::move(spec));
      }
    }
  }
  if (root.contains("spans")) {
    const json& s = root.at("spans");
    if (!s.is_array()) {
      issues.add("spans", "must be an array");
    } else {
      for (std::size_t i = 0; i < s.size(); ++i) {
        const std::string p = "spans[" + std::to_string(i) + "]";
        if (!s[i].is_object()) {
          issues.add(p, "must be an object");
          continue;
        }
        check_keys(s[i], p, {"name", "start", "end"}, issues);
        const auto name = read_string(s[i], p, "name", issues);
        const auto a = read_date(s[i], p, "start", issues);
        const auto b = read_date(s[i], p, "end", issues);
        if (!name || name->empty() || *name == "full") issues.add(p + ".name", "required, not 'full'");
        if (!s[i].contains("start")) issues.add(p + ".start", "required");
        if (!s[i].contains("end")) issues.add(p + ".end", "required");
        if (a && b && *b < *a) issues.add(p + ".end", "precedes start");
        if (name && a && b) cfg.spans.push_back({*name, DateRange{*a, *b}});
      }
    }
  }
  if (!issues.empty()) throw ConfigError(issues.joined());
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open configuration");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

void apply_overrides(RunConfig& config, const RunOverrides& overrides) {
  if (overrides.seed) config.backtest.seed = *overrides.seed;
  if (overrides.output_dir) config.output_dir = *overrides.output_dir;
  if (overrides.strategies) {
    std::vector<StrategySpec> picked;
    std::vector<std::string> unknown;
    for (const auto& name : *overrides.strategies) {
      auto it = std::find_if(config.backtest.roster.begin(), config.backtest.roster.end(),
                             [&](const StrategySpec& s) { return s.name == name; });
      if (it == config.backtest.roster.end()) {
        unknown.push_back(name);
      } else {
        picked.push_back(*it);
      }
    }
    if (!unknown.empty()) {
      std::string msg = "--strategies: not in the configured roster:";
      for (const auto& u : unknown) msg += " " + u;
      throw ConfigError(msg);
    }
    if (picked.empty()) throw ConfigError("--strategies: empty selection");
    config.backtest.roster = std::move(picked);
  }
}

// ---------------------------------------------------------------------------
// File formats

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot write file");
  return out;
}

}  // namespace

void write_panel_csv(const fs::path& path, const MarketFrame& frame) {
  auto out = open_out(path);
  out << "date,ticker,adj_close,volume\n";
  for (std::size_t t = 0; t < frame.n_dates(); ++t) {
    for (std::size_t i = 0; i < frame.n_assets(); ++i) {
      const auto tt = static_cast<Eigen::Index>(t);
      const auto ii = static_cast<Eigen::Index>(i);
      out << csv::join({frame.dates()[t].iso(), frame.tickers()[i],
                        csv::format_double(frame.adj_close()(tt, ii)),
                        csv::format_double(frame.volume()(tt, ii))})
          << '\n';
    }
  }
}

MarketFrame read_panel_csv(const fs::path& path) {
  const csv::Table t = csv::read(path);
  if (t.header != std::vector<std::string>{"date", "ticker", "adj_close", "volume"}) {
    throw IngestError(path.string() + ":1: expected header date,ticker,adj_close,volume");
  }
  std::vector<Date> dates;
  std::vector<std::string> tickers;
  std::vector<std::vector<std::pair<double, double>>> cells;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = path.string() + ":" + std::to_string(t.line_numbers[r]);
    const auto d = Date::try_parse(row[0]);
    if (!d) throw IngestError(where + ": invalid date '" + row[0] + "'");
    if (dates.empty() || dates.back() != *d) {
      if (!dates.empty() && *d < dates.back()) throw IngestError(where + ": dates not increasing");
      if (!cells.empty() && cells.back().size() != tickers.size()) {
        throw IngestError(where + ": previous date block is incomplete");
      }
      dates.push_back(*d);
      cells.emplace_back();
    }
    const std::size_t pos = cells.back().size();
    if (dates.size() == 1) {
      tickers.push_back(row[1]);
    } else if (pos >= tickers.size() || tickers[pos] != row[1]) {
      throw IngestError(where + ": ticker order differs from the first date block");
    }
    try {
      cells.back().emplace_back(csv::parse_double(row[2]), csv::parse_double(row[3]));
    } catch (const std::invalid_argument& e) {
      throw IngestError(where + ": " + e.what());
    }
  }
  if (dates.empty()) throw IngestError(path.string() + ": no rows");
  if (cells.back().size() != tickers.size()) throw IngestError(path.string() + ": last date block is incomplete");
  const auto T = static_cast<Eigen::Index>(dates.size());
  const auto N = static_cast<Eigen::Index>(tickers.size());
  Eigen::MatrixXd px(T, N), vol(T, N);
  for (Eigen::Index i = 0; i < T; ++i)
    for (Eigen::Index j = 0; j < N; ++j) {
      px(i, j) = cells[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].first;
      vol(i, j) = cells[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].second;
    }
  return MarketFrame(std::move(dates), std::move(tickers), std::move(px), std::move(vol));
}

void write_nav_csv(const fs::path& path, const std::vector<BacktestLedger>& ledgers) {
  auto out = open_out(path);
  out << "date,strategy,nav\n";
  for (const auto& l : ledgers) {
    for (std::size_t i = 0; i < l.nav.size(); ++i) {
      out << csv::join({l.nav_dates[i].iso(), l.strategy, csv::format_double(l.nav[i])}) << '\n';
    }
  }
}

NamedSeries read_nav_series(const fs::path& path, const std::string& strategy) {
  const csv::Table t = csv::read(path);
  if (t.header != std::vector<std::string>{"date", "strategy", "nav"}) {
    throw IngestError(path.string() + ":1: expected header date,strategy,nav");
  }
  NamedSeries s{strategy, {}};
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r][1] != strategy) continue;
    const auto d = Date::try_parse(t.rows[r][0]);
    if (!d) throw IngestError(path.string() + ":" + std::to_string(t.line_numbers[r]) + ": invalid date");
    s.series.dates.push_back(*d);
    s.series.nav.push_back(csv::parse_double(t.rows[r][2]));
  }
  return s;
}

void write_weights_csv(const fs::path& path, const std::vector<BacktestLedger>& ledgers,
                       const std::vector<std::string>& tickers) {
  auto out = open_out(path);
  out << "rebalance_date,strategy,ticker,weight,turnover,fee\n";
  for (const auto& l : ledgers) {
    for (const auto& r : l.rebalances) {
      for (std::size_t i = 0; i < tickers.size(); ++i) {
        out << csv::join({r.date.iso(), l.strategy, tickers[i], csv::format_double(r.target[i]),
                          csv::format_double(r.turnover), csv::format_double(r.fee)})
            << '\n';
      }
    }
  }
}

void write_hparams_csv(const fs::path& path, const std::vector<BacktestLedger>& ledgers) {
  auto out = open_out(path);
  out << "rebalance_date,strategy,lr,epochs,score\n";
  for (const auto& l : ledgers) {
    for (const auto& h : l.hparams) {
      out << csv::join({h.date.iso(), l.strategy, csv::format_double(h.learning_rate),
                        std::to_string(h.epochs), csv::format_double(h.score)})
          << '\n';
    }
  }
}

namespace {

void write_wide_nav(const fs::path& path, const std::vector<NamedSeries>& series) {
  std::set<Date> all;
  for (const auto& s : series) all.insert(s.series.dates.begin(), s.series.dates.end());
  std::vector<std::map<Date, double>> lookup;
  for (const auto& s : series) {
    std::map<Date, double> m;
    for (std::size_t i = 0; i < s.series.dates.size(); ++i) m[s.series.dates[i]] = s.series.nav[i];
    lookup.push_back(std::move(m));
  }
  auto out = open_out(path);
  std::vector<std::string> header{"date"};
  for (const auto& s : series) header.push_back(s.strategy);
  out << csv::join(header) << '\n';
  for (const Date& d : all) {
    std::vector<std::string> row{d.iso()};
    for (const auto& m : lookup) {
      auto it = m.find(d);
      row.push_back(it == m.end() ? std::string() : csv::format_double(it->second));
    }
    out << csv::join(row) << '\n';
  }
}

}  // namespace

BacktestData load_backtest_data(const RunConfig& config) {
  MarketFrame frame = fs::is_directory(config.data) ? ingest_csv_dir(config.data)
                                                     : read_panel_csv(config.data);
  if (!config.universe.empty()) {
    std::vector<std::string> wanted = config.universe;
    std::sort(wanted.begin(), wanted.end());
    std::vector<Eigen::Index> cols;
    for (const auto& t : wanted) {
      auto it = std::find(frame.tickers().begin(), frame.tickers().end(), t);
      if (it == frame.tickers().end()) throw UniverseError("universe: ticker " + t + " not in data");
      cols.push_back(static_cast<Eigen::Index>(it - frame.tickers().begin()));
    }
    Eigen::MatrixXd px(frame.adj_close().rows(), static_cast<Eigen::Index>(cols.size()));
    Eigen::MatrixXd vol(px.rows(), px.cols());
    for (std::size_t j = 0; j < cols.size(); ++j) {
      px.col(static_cast<Eigen::Index>(j)) = frame.adj_close().col(cols[j]);
      vol.col(static_cast<Eigen::Index>(j)) = frame.volume().col(cols[j]);
    }
    frame = MarketFrame(frame.dates(), wanted, std::move(px), std::move(vol));
  }
  if (frame.n_assets() < 2) throw UniverseError("universe: need at least 2 assets");
  FeatureTensor features;
  if (config.features_file) {
    FeatureTensor all = read_features_csv(*config.features_file);
    if (all.tickers() == frame.tickers()) {
      features = std::move(all);
    } else {
      std::vector<Eigen::Index> rows;
      for (const auto& t : frame.tickers()) {
        auto it = std::find(all.tickers().begin(), all.tickers().end(), t);
        if (it == all.tickers().end()) throw UniverseError("features: ticker " + t + " missing");
        rows.push_back(static_cast<Eigen::Index>(it - all.tickers().begin()));
      }
      std::vector<Eigen::MatrixXd> slices;
      for (std::size_t d = 0; d < all.n_dates(); ++d) {
        Eigen::MatrixXd s(static_cast<Eigen::Index>(rows.size()), all.slice(d).cols());
        for (std::size_t i = 0; i < rows.size(); ++i) s.row(static_cast<Eigen::Index>(i)) = all.slice(d).row(rows[i]);
        slices.push_back(std::move(s));
      }
      features = FeatureTensor(all.dates(), frame.tickers(), all.feature_names(), std::move(slices));
    }
  } else {
    features = compute_indicators(frame, config.indicators);
  }
  return prepare_backtest_data(std::move(frame), std::move(features));
}

RunOutputs write_run_outputs(const fs::path& dir, const BacktestData& data, BacktestResult result,
                             const RunConfig& config) {
  fs::create_directories(dir / "plotdata");
  RunOutputs out;
  write_nav_csv(dir / "nav.csv", result.ledgers);
  write_weights_csv(dir / "weights.csv", result.ledgers, data.frame.tickers());
  write_hparams_csv(dir / "hparams.csv", result.ledgers);

  std::vector<NamedSeries> series;
  for (const auto& l : result.ledgers) {
    if (l.nav.size() >= 2) series.push_back({l.strategy, {l.nav_dates, l.nav}});
  }
  for (const auto& s : series) {
    std::vector<NamedSpan> spans{{"full", {s.series.dates.front(), s.series.dates.back()}}};
    for (const auto& sp : config.spans) spans.push_back(sp);
    for (const auto& sp : spans) {
      try {
        out.metrics.push_back({s.strategy, sp.name, compute_metrics(s.series, sp.range)});
      } catch (const SpanError& e) {
        out.messages.push_back(s.strategy + "/" + sp.name + ": " + e.what());
      }
    }
  }
  write_metrics_json(dir / "metrics.json", out.metrics);
  write_metrics_csv(dir / "metrics.csv", out.metrics);

  write_wide_nav(dir / "plotdata" / "cumulative_nav.csv", series);
  for (const auto& sp : config.spans) {
    std::vector<NamedSeries> clipped;
    for (const auto& s : series) {
      try {
        clipped.push_back({s.strategy, span_series(s.series, sp.range)});
      } catch (const SpanError&) {
      }
    }
    write_wide_nav(dir / "plotdata" / ("span_" + sp.name + "_nav.csv"), clipped);
  }

  if (config.backtest.record_traces) {
    fs::create_directories(dir / "traces");
    for (const auto& l : result.ledgers) {
      std::map<Date, std::vector<const TraceRecord*>> by_date;
      for (const auto& tr : l.traces) by_date[tr.date].push_back(&tr);
      for (const auto& [date, rows] : by_date) {
        auto f = open_out(dir / "traces" / (l.strategy + "_" + date.iso() + "_train_trace.csv"));
        f << "trial,epoch,loss\n";
        for (const auto* tr : rows) {
          f << csv::join({std::to_string(tr->trial), std::to_string(tr->epoch), csv::format_double(tr->loss)})
            << '\n';
        }
      }
    }
  }
  out.result = std::move(result);
  return out;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_ingest(const fs::path& data_dir, const fs::path& output_dir, std::ostream& out,
               std::ostream& err) {
  try {
    if (!fs::is_directory(data_dir)) throw IngestError(data_dir.string() + ": not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(data_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".csv" && e.path().filename() != "features.csv" &&
          e.path().filename() != "panel.csv") {
        files.push_back(e.path());
      }
    }
    if (files.empty()) throw IngestError(data_dir.string() + ": no input files");
    std::sort(files.begin(), files.end());
    std::vector<AssetSeries> series;
    std::set<Date> all_dates;
    for (const auto& f : files) {
      series.push_back(read_asset_csv(f));
      for (const auto& b : series.back().bars) all_dates.insert(b.date);
    }
    const MarketFrame frame = align(std::move(series));
    fs::create_directories(output_dir);
    write_panel_csv(output_dir / "panel.csv", frame);
    const FeatureTensor features = compute_indicators(frame);
    write_features_csv(output_dir / "features.csv", features);
    out << "assets: " << frame.n_assets() << " (";
    for (std::size_t i = 0; i < frame.n_assets(); ++i) out << (i ? " " : "") << frame.tickers()[i];
    out << ")\n"
        << "dates: " << frame.n_dates() << " (" << frame.dates().front().iso() << " .. "
        << frame.dates().back().iso() << ")\n"
        << "dropped dates: " << all_dates.size() - frame.n_dates() << "\n"
        << "feature dates: " << features.n_dates() << "\n";
    if (!frame.usable()) out << "warning: fewer than 2 assets or 252 dates\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_backtest(const fs::path& config_path, const RunOverrides& overrides, std::ostream& out,
                 std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
    apply_overrides(cfg, overrides);
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return 2;
  }
  try {
    const BacktestData data = load_backtest_data(cfg);
    BacktestResult result = run_backtest(data, cfg.backtest);
    const RunOutputs outputs = write_run_outputs(cfg.output_dir, data, std::move(result), cfg);
    out << std::left << std::setw(24) << "strategy" << std::setw(10) << "status" << "final_nav\n";
    for (const auto& l : outputs.result.ledgers) {
      out << std::setw(24) << l.strategy << std::setw(10) << (l.ok() ? "ok" : "FAILED")
          << csv::format_double(l.last_nav()) << '\n';
      if (!l.ok()) err << l.strategy << ": " << l.error << '\n';
    }
    for (const auto& m : outputs.messages) err << "metrics: " << m << '\n';
    out << "outputs written to " << cfg.output_dir.string() << '\n';
    return outputs.result.all_ok() && outputs.messages.empty() ? 0 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_compare(const fs::path& a, const fs::path& b, std::ostream& out, std::ostream& err) {
  try {
    const MetricsComparison cmp = compare_metrics(read_metrics_json(a), read_metrics_json(b));
    auto fmt = [](const std::optional<double>& v) {
      if (!v) return std::string("undef");
      std::ostringstream s;
      s << std::fixed << std::setprecision(4) << *v;
      return s.str();
    };
    out << std::left << std::setw(22) << "strategy" << std::setw(12) << "span" << std::setw(9) << "metric"
        << std::right << std::setw(12) << "a" << std::setw(12) << "b" << std::setw(12) << "delta" << "\n";
    for (const auto& d : cmp.deltas) {
      out << std::left << std::setw(22) << d.strategy << std::setw(12) << d.span << std::setw(9) << d.metric
          << std::right << std::setw(12) << fmt(d.a) << std::setw(12) << fmt(d.b) << std::setw(12)
          << fmt(d.delta) << (d.sign_flip ? "  SIGN FLIP" : "") << '\n';
    }
    if (!cmp.unmatched.empty()) {
      out << "unmatched:\n";
      for (const auto& u : cmp.unmatched) out << "  " << u << '\n';
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_synth(const SynthOptions& options, std::ostream& out, std::ostream& err) {
  try {
    const SyntheticMarket m = generate_synthetic(options.spec);
    fs::create_directories(options.output_dir);
    for (const auto& s : m.series) write_asset_csv(options.output_dir / (s.ticker + ".csv"), s);
    write_features_csv(options.output_dir / "features.csv", m.features);
    out << "wrote " << m.series.size() << " assets x " << m.frame.n_dates() << " days to "
        << options.output_dir.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace dfolio
