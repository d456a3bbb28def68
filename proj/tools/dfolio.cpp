// Batch entry point: ingest, backtest, compare, synth.

#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "dfolio/cli.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dfolio: decision-focused portfolio backtests"};
  app.require_subcommand(1);

  std::string data_dir, out_dir, config_path, strategies;
  std::uint64_t seed = 0;

  auto* ingest = app.add_subcommand("ingest", "Align ticker CSVs; write panel.csv and features.csv");
  ingest->add_option("data_dir", data_dir, "Directory of <TICKER>.csv files")->required();
  ingest->add_option("--out", out_dir, "Output directory (default: data_dir)");

  auto* backtest = app.add_subcommand("backtest", "Run the configured rolling backtest");
  backtest->add_option("--config", config_path, "JSON run configuration")->required();
  auto* seed_opt = backtest->add_option("--seed", seed, "Override the configured seed");
  auto* out_opt = backtest->add_option("--out", out_dir, "Override the output directory");
  auto* strat_opt = backtest->add_option("--strategies", strategies, "Comma list of roster names to run");

  std::string metrics_a, metrics_b;
  auto* compare = app.add_subcommand("compare", "Per-metric deltas between two metrics.json files");
  compare->add_option("a", metrics_a)->required();
  compare->add_option("b", metrics_b)->required();

  dfolio::SynthOptions synth_opts;
  std::size_t assets = synth_opts.spec.n_assets, days = synth_opts.spec.n_days;
  double noise = synth_opts.spec.noise_scale;
  auto* synth = app.add_subcommand("synth", "Write a seeded planted-signal market");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--seed", seed, "Generator seed");
  synth->add_option("--assets", assets, "Number of assets")->check(CLI::PositiveNumber);
  synth->add_option("--days", days, "Number of trading days")->check(CLI::PositiveNumber);
  synth->add_option("--noise", noise, "Idiosyncratic noise scale");

  CLI11_PARSE(app, argc, argv);

  if (*ingest) {
    return dfolio::cmd_ingest(data_dir, out_dir.empty() ? data_dir : out_dir, std::cout, std::cerr);
  }
  if (*backtest) {
    dfolio::RunOverrides ov;
    if (*seed_opt) ov.seed = seed;
    if (*out_opt) ov.output_dir = out_dir;
    if (*strat_opt) ov.strategies = split_list(strategies);
    return dfolio::cmd_backtest(config_path, ov, std::cout, std::cerr);
  }
  if (*compare) return dfolio::cmd_compare(metrics_a, metrics_b, std::cout, std::cerr);
  if (*synth) {
    synth_opts.spec.seed = seed;
    synth_opts.spec.n_assets = assets;
    synth_opts.spec.n_days = days;
    synth_opts.spec.noise_scale = noise;
    synth_opts.output_dir = out_dir;
    return dfolio::cmd_synth(synth_opts, std::cout, std::cerr);
  }
  return 1;
}
