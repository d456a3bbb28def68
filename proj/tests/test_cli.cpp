#include <doctest.h>

#include <fstream>
#include <sstream>

#include "dfolio/cli.hpp"
#include "dfolio/errors.hpp"
#include "oracles.hpp"

using namespace dfolio;
namespace fs = std::filesystem;

namespace {

std::string config_error(const std::string& text, const fs::path& base) {
  try {
    parse_run_config(text, base);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path synth_dir(const std::string& name, std::size_t days) {
  const fs::path dir = oracle::scratch_dir(name);
  SynthOptions opts;
  opts.spec.n_assets = 4;
  opts.spec.n_days = days;
  opts.spec.seed = 7;
  opts.output_dir = dir / "data";
  std::ostringstream out, err;
  REQUIRE(cmd_synth(opts, out, err) == 0);
  return dir;
}

void write_config(const fs::path& path, const std::string& extra) {
  std::ofstream(path) << R"({
  "data": "data",
  "features": "data/features.csv",
  "output_dir": "out",
  "seed": 3,
  "backtest": {"lookback_months": 4, "validation_months": 1, "batch_size": 21, "hidden": 8,
               "threads": 1, "record_traces": true},
  "search": {"n_trials": 1, "epochs_min": 3, "epochs_max": 4},
  "spans": [{"name": "late", "start": "2015-09-01", "end": "2015-12-15"}],
  "strategies": [{"type": "max_sharpe"}, {"type": "spo_plus"}])"
                      << extra << "\n}\n";
}

}  // namespace

TEST_CASE("parse_run_config") {
  const fs::path base = oracle::scratch_dir("config");
  SUBCASE("defaults") {
    const auto cfg = parse_run_config(R"({"data": "."})", base);
    CHECK(cfg.backtest.roster.size() == 9);
    CHECK(cfg.backtest.fee_rate == 0.005);
    CHECK(cfg.output_dir == base / "output");
    CHECK_FALSE(cfg.features_file.has_value());
  }
  SUBCASE("every issue is listed with its key") {
    const std::string msg = config_error(R"({
      "bogus": 1,
      "backtest": {"fee_rate": -1, "lookback_months": 2, "validation_months": 3},
      "search": {"n_trials": 0},
      "strategies": [{"type": "spo_plus_fee", "gamma": -0.1}, {"type": "wat"}],
      "spans": [{"name": "full", "start": "2020-13-01", "end": "2020-01-01"}]
    })",
                                         base);
    for (const char* key : {"data: required", "bogus: unknown key", "backtest.fee_rate", "backtest.lookback_months",
                            "search.n_trials", "strategies[0].gamma", "strategies[1].type", "spans[0].name",
                            "spans[0].start"}) {
      CAPTURE(key);
      CHECK(msg.find(key) != std::string::npos);
    }
  }
  SUBCASE("duplicate names and type errors") {
    const std::string msg = config_error(
        R"({"data": ".", "seed": "x", "strategies": [{"type": "pto", "name": "a"}, {"type": "pto", "name": "a"}]})",
        base);
    CHECK(msg.find("seed: must be a non-negative integer") != std::string::npos);
    CHECK(msg.find("strategies[1].name: duplicate") != std::string::npos);
  }
  SUBCASE("missing data path and bad JSON") {
    CHECK(config_error(R"({"data": "nowhere"})", base).find("data: path does not exist") != std::string::npos);
    CHECK(config_error("{", base).find("JSON parse error") != std::string::npos);
  }
  SUBCASE("strategy defaults follow the type") {
    const auto cfg = parse_run_config(
        R"({"data": ".", "strategies": [{"type": "spo_plus_fee_l2"}, {"type": "robust_spo", "rho": 0.01}]})", base);
    CHECK(cfg.backtest.roster[0].gamma == 0.005);
    CHECK(cfg.backtest.roster[0].lambda == 0.42);
    CHECK(cfg.backtest.roster[1].rho == 0.01);
    CHECK(cfg.backtest.roster[1].name == "robust_spo");
  }
}

TEST_CASE("apply_overrides") {
  const fs::path base = oracle::scratch_dir("overrides");
  auto cfg = parse_run_config(R"({"data": "."})", base);
  RunOverrides o;
  o.seed = 42;
  o.strategies = std::vector<std::string>{"max_sharpe", "spo_plus"};
  apply_overrides(cfg, o);
  CHECK(cfg.backtest.seed == 42);
  REQUIRE(cfg.backtest.roster.size() == 2);
  CHECK(cfg.backtest.roster[0].name == "max_sharpe");
  o.strategies = std::vector<std::string>{"nope"};
  CHECK_THROWS_AS(apply_overrides(cfg, o), ConfigError);
}

TEST_CASE("panel and NAV files round trip") {
  const fs::path dir = oracle::scratch_dir("files");
  SyntheticSpec spec;
  spec.n_assets = 3;
  spec.n_days = 50;
  const auto m = generate_synthetic(spec);
  write_panel_csv(dir / "panel.csv", m.frame);
  const MarketFrame back = read_panel_csv(dir / "panel.csv");
  CHECK(back.dates() == m.frame.dates());
  CHECK(back.tickers() == m.frame.tickers());
  CHECK(back.adj_close() == m.frame.adj_close());

  BacktestLedger l;
  l.strategy = "x";
  l.nav_dates = {Date(2020, 1, 1), Date(2020, 1, 2)};
  l.nav = {1.0, 1.0 / 3.0};
  write_nav_csv(dir / "nav.csv", {l});
  const auto s = read_nav_series(dir / "nav.csv", "x");
  CHECK(s.series.nav == l.nav);
  CHECK(s.series.dates == l.nav_dates);

  std::ofstream(dir / "broken.csv") << "date,ticker,adj_close,volume\n2020-01-01,A,1,1\n2020-01-02,B,1,1\n";
  CHECK_THROWS_AS(read_panel_csv(dir / "broken.csv"), IngestError);
}

TEST_CASE("cmd_ingest") {
  const fs::path dir = oracle::scratch_dir("ingest");
  SUBCASE("two tickers") {
    SyntheticSpec spec;
    spec.n_assets = 2;
    spec.n_days = 60;
    const auto m = generate_synthetic(spec);
    fs::create_directories(dir / "in");
    for (const auto& s : m.series) write_asset_csv(dir / "in" / (s.ticker + ".csv"), s);
    std::ostringstream out, err;
    REQUIRE(cmd_ingest(dir / "in", dir / "out", out, err) == 0);
    CHECK(out.str().find("assets: 2") != std::string::npos);
    CHECK(fs::exists(dir / "out" / "panel.csv"));
    CHECK(read_features_csv(dir / "out" / "features.csv").n_dates() == 60 - IndicatorConfig{}.warmup());
  }
  SUBCASE("empty directory") {
    fs::create_directories(dir / "empty");
    std::ostringstream out, err;
    CHECK(cmd_ingest(dir / "empty", dir / "out", out, err) == 1);
    CHECK(err.str().find("no input files") != std::string::npos);
  }
  SUBCASE("malformed file is cited") {
    fs::create_directories(dir / "bad");
    std::ofstream(dir / "bad" / "AAA.csv") << "date,open,high,low,close,adj_close,volume\n2020-01-02,1,1,1,1,abc,5\n";
    std::ostringstream out, err;
    CHECK(cmd_ingest(dir / "bad", dir / "out", out, err) != 0);
    CHECK(err.str().find("AAA.csv") != std::string::npos);
  }
}

TEST_CASE("cmd_backtest end to end") {
  const fs::path dir = synth_dir("backtest", 260);
  write_config(dir / "run.json", "");
  std::ostringstream out, err;
  REQUIRE(cmd_backtest(dir / "run.json", {}, out, err) == 0);
  for (const char* f : {"nav.csv", "weights.csv", "hparams.csv", "metrics.json", "metrics.csv",
                        "plotdata/cumulative_nav.csv", "plotdata/span_late_nav.csv"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / "out" / f));
  }
  bool trace = false;
  for (const auto& e : fs::directory_iterator(dir / "out" / "traces")) {
    trace = trace || e.path().filename().string().rfind("spo_plus_", 0) == 0;
  }
  CHECK(trace);
  const auto metrics = read_metrics_json(dir / "out" / "metrics.json");
  CHECK(metrics.size() == 4);

  SUBCASE("a second run reproduces every output byte") {
    RunOverrides o;
    o.output_dir = dir / "out2";
    std::ostringstream out2, err2;
    REQUIRE(cmd_backtest(dir / "run.json", o, out2, err2) == 0);
    for (const char* f : {"nav.csv", "weights.csv", "hparams.csv", "metrics.json"}) {
      CAPTURE(f);
      CHECK(oracle::slurp(dir / "out" / f) == oracle::slurp(dir / "out2" / f));
    }
  }
  SUBCASE("compare against itself") {
    std::ostringstream cmp, cerr;
    const auto m = (dir / "out" / "metrics.json").string();
    REQUIRE(cmd_compare(m, m, cmp, cerr) == 0);
    CHECK(cmp.str().find("SIGN FLIP") == std::string::npos);
    CHECK(cmp.str().find("unmatched") == std::string::npos);
    for (const auto& d : compare_metrics(metrics, metrics).deltas) {
      if (d.delta) CHECK(*d.delta == 0.0);
    }
  }
  SUBCASE("a config error exits with 2") {
    write_config(dir / "bad.json", R"(, "backtest": {"fee_rate": -1})");
    std::ostringstream o2, e2;
    CHECK(cmd_backtest(dir / "bad.json", {}, o2, e2) == 2);
    CHECK(e2.str().find("backtest.fee_rate") != std::string::npos);
  }
}
