#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dfolio/backtest.hpp"
#include "dfolio/features.hpp"
#include "dfolio/market_data.hpp"
#include "dfolio/metrics.hpp"

namespace dfolio {

/// Parsed run configuration. Relative paths are resolved against the config
/// file's directory.
struct RunConfig {
  std::filesystem::path data;       ///< ticker CSV directory or a panel.csv file
  std::filesystem::path output_dir;
  std::vector<std::string> universe;  ///< empty: every ingested ticker
  std::optional<std::filesystem::path> features_file;  ///< unset: computed indicators
  IndicatorConfig indicators;
  BacktestConfig backtest;
  std::vector<NamedSpan> spans;     ///< reported in addition to "full"
};

/// Parses and validates a JSON document; every problem found is listed in
/// the ConfigError message, one per line.
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::vector<std::string>> strategies;
};
void apply_overrides(RunConfig& config, const RunOverrides& overrides);

/// `date,ticker,adj_close,volume`, dates outer and tickers in frame order.
void write_panel_csv(const std::filesystem::path& path, const MarketFrame& frame);
MarketFrame read_panel_csv(const std::filesystem::path& path);

void write_nav_csv(const std::filesystem::path& path, const std::vector<BacktestLedger>& ledgers);
NamedSeries read_nav_series(const std::filesystem::path& path, const std::string& strategy);
void write_weights_csv(const std::filesystem::path& path, const std::vector<BacktestLedger>& ledgers,
                       const std::vector<std::string>& tickers);
void write_hparams_csv(const std::filesystem::path& path, const std::vector<BacktestLedger>& ledgers);

/// Loads prices (and features) and restricts to the configured universe.
BacktestData load_backtest_data(const RunConfig& config);

/// Outputs of one run, written beneath `dir`.
struct RunOutputs {
  BacktestResult result;
  MetricsReport metrics;
  std::vector<std::string> messages;
};
RunOutputs write_run_outputs(const std::filesystem::path& dir, const BacktestData& data,
                             BacktestResult result, const RunConfig& config);

/// Command entry points. Each returns a process exit code and writes a
/// human-readable summary to `out` and diagnostics to `err`.
int cmd_ingest(const std::filesystem::path& data_dir, const std::filesystem::path& output_dir,
               std::ostream& out, std::ostream& err);
int cmd_backtest(const std::filesystem::path& config_path, const RunOverrides& overrides,
                 std::ostream& out, std::ostream& err);
int cmd_compare(const std::filesystem::path& a, const std::filesystem::path& b, std::ostream& out,
                std::ostream& err);

struct SynthOptions {
  SyntheticSpec spec;
  std::filesystem::path output_dir;
};
int cmd_synth(const SynthOptions& options, std::ostream& out, std::ostream& err);

}  // namespace dfolio
