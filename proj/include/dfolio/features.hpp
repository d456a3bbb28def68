#pragma once

#include <filesystem>

#include "dfolio/feature_tensor.hpp"
#include "dfolio/market_data.hpp"

namespace dfolio {

/// Indicator window lengths. Defaults are the conventional TA values.
struct IndicatorConfig {
  int sma_short = 5;
  int sma_long = 20;
  int rsi = 14;
  int macd_fast = 12;
  int macd_slow = 26;
  int macd_signal = 9;
  int bollinger = 20;
  double bollinger_k = 2.0;
  int volume_sma = 20;

  /// Index of the first row at which every indicator is defined.
  std::size_t warmup() const;
  void validate() const;
};

/// Feature columns, in output order.
std::vector<std::string> indicator_names();

/// Per-asset technical indicators from adjusted closes and volumes. Rows
/// before the warm-up are dropped for all assets. Throws WarmupError when the
/// frame is shorter than warmup() + 1 rows.
FeatureTensor compute_indicators(const MarketFrame& frame, const IndicatorConfig& config = {});

/// Half-open index range of dates.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

/// Per-(asset, feature) mean and standard deviation (population).
struct FeatureScaler {
  Eigen::MatrixXd mean;  ///< asset x feature
  Eigen::MatrixXd std;   ///< asset x feature; entries below the floor mark degenerate columns

  static constexpr double kStdFloor = 1e-8;

  static FeatureScaler fit(const FeatureTensor& tensor, IndexRange fit_range);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& slice) const;
};

/// z-scores every (asset, feature) with statistics from `fit_range` only, and
/// applies them to the whole tensor. Degenerate columns (std <= 1e-8) become 0.
FeatureTensor standardize(const FeatureTensor& tensor, IndexRange fit_range);
FeatureTensor standardize(const FeatureTensor& tensor, const DateRange& fit_range);

/// `date,ticker,<feature_name>...`
void write_features_csv(const std::filesystem::path& path, const FeatureTensor& tensor);
FeatureTensor read_features_csv(const std::filesystem::path& path);

}  // namespace dfolio
