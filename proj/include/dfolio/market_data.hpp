#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dfolio/calendar.hpp"
#include "dfolio/feature_tensor.hpp"

namespace dfolio {

/// One daily OHLCV row of a single asset.
struct AssetBar {
  Date date;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  double adj_close = 0.0;
  double volume = 0.0;
};

struct AssetSeries {
  std::string ticker;
  std::vector<AssetBar> bars;
};

/// Aligned date x asset panel. Every cell is populated; dates strictly increase.
class MarketFrame {
 public:
  MarketFrame() = default;
  /// Validates shape, ordering and positivity; throws UniverseError.
  MarketFrame(std::vector<Date> dates, std::vector<std::string> tickers, Eigen::MatrixXd adj_close,
              Eigen::MatrixXd volume);

  std::size_t n_dates() const { return dates_.size(); }
  std::size_t n_assets() const { return tickers_.size(); }
  const std::vector<Date>& dates() const { return dates_; }
  const std::vector<std::string>& tickers() const { return tickers_; }
  const Eigen::MatrixXd& adj_close() const { return adj_close_; }
  const Eigen::MatrixXd& volume() const { return volume_; }

  /// Date indices [begin, end).
  MarketFrame rows(std::size_t begin, std::size_t end) const;
  /// True when the panel meets the minimum usable size (2 assets, 252 dates).
  bool usable() const { return n_assets() >= 2 && n_dates() >= 252; }

 private:
  std::vector<Date> dates_;
  std::vector<std::string> tickers_;
  Eigen::MatrixXd adj_close_;
  Eigen::MatrixXd volume_;
};

/// Simple and log returns; row t is the move from frame date t to t+1 and is
/// labelled with the later date.
struct ReturnPanel {
  std::vector<Date> dates;
  Eigen::MatrixXd simple_returns;
  Eigen::MatrixXd log_returns;
};

inline constexpr const char* kCsvHeader = "date,open,high,low,close,adj_close,volume";

/// Parses one ticker file; the ticker is the file stem.
AssetSeries read_asset_csv(const std::filesystem::path& path);
void write_asset_csv(const std::filesystem::path& path, const AssetSeries& series);

/// Intersects the trading calendars; tickers sorted lexicographically.
MarketFrame align(std::vector<AssetSeries> series);

/// Reads every `*.csv` in `dir` and aligns them.
MarketFrame ingest_csv_dir(const std::filesystem::path& dir);

ReturnPanel compute_returns(const MarketFrame& frame);

struct RegimeBreak {
  std::size_t day = 0;            ///< first return day the multiplier applies to
  double volatility_multiplier = 1.0;
};

/// Planted-signal market: r[t+1,i] = beta' x[t,i] + eps[t,i].
struct SyntheticSpec {
  std::size_t n_assets = 10;
  std::size_t n_days = 756;
  std::uint64_t seed = 0;
  std::vector<double> signal_coefficients{0.004, -0.002, 0.001};
  double noise_scale = 0.01;
  std::vector<RegimeBreak> regime_breaks;

  /// AR(1) coefficient of each feature path (0 = i.i.d. draws).
  double feature_persistence = 0.0;
  /// Noise scale multiplier 1 + strength * |x[hetero_feature]| (strength 0 disables).
  std::size_t hetero_feature = 0;
  double hetero_strength = 0.0;
  /// Student-t degrees of freedom for the noise, rescaled to unit variance; 0 = Gaussian.
  double noise_dof = 0.0;
  /// Scale of a shock shared by all assets on a day (same distribution as the
  /// idiosyncratic noise, regime multiplier applied); 0 disables.
  double market_noise_scale = 0.0;
  Date start_date{2015, 1, 2};

  void validate() const;
};

struct SyntheticMarket {
  MarketFrame frame;
  FeatureTensor features;
  Eigen::VectorXd true_coefficients;
  std::vector<AssetSeries> series;  ///< full OHLCV bars, e.g. for writing CSVs
};

SyntheticMarket generate_synthetic(const SyntheticSpec& spec);

}  // namespace dfolio
