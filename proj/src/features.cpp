#include "dfolio/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "dfolio/csv.hpp"
#include "dfolio/errors.hpp"

namespace dfolio {

FeatureTensor::FeatureTensor(std::vector<Date> dates, std::vector<std::string> tickers,
                             std::vector<std::string> feature_names,
                             std::vector<Eigen::MatrixXd> slices)
    : dates_(std::move(dates)),
      tickers_(std::move(tickers)),
      names_(std::move(feature_names)),
      slices_(std::move(slices)) {
  if (slices_.size() != dates_.size()) {
    throw Error("feature tensor: one slice per date required");
  }
  for (const auto& s : slices_) {
    if (s.rows() != static_cast<Eigen::Index>(tickers_.size()) ||
        s.cols() != static_cast<Eigen::Index>(names_.size())) {
      throw Error("feature tensor: slice shape must be assets x features");
    }
  }
}

FeatureTensor FeatureTensor::rows(std::size_t begin, std::size_t end) const {
  return FeatureTensor(std::vector<Date>(dates_.begin() + static_cast<long>(begin),
                                         dates_.begin() + static_cast<long>(end)),
                       tickers_, names_,
                       std::vector<Eigen::MatrixXd>(slices_.begin() + static_cast<long>(begin),
                                                    slices_.begin() + static_cast<long>(end)));
}

bool FeatureTensor::all_finite() const {
  return std::all_of(slices_.begin(), slices_.end(),
                     [](const Eigen::MatrixXd& s) { return s.allFinite(); });
}

std::size_t IndicatorConfig::warmup() const {
  const int macd = macd_slow - 1 + macd_signal - 1;
  const int w = std::max({1, sma_short - 1, sma_long - 1, rsi, macd, bollinger - 1,
                          volume_sma - 1});
  return static_cast<std::size_t>(w);
}

void IndicatorConfig::validate() const {
  if (sma_short < 1 || sma_long < 1 || rsi < 1 || macd_fast < 1 || macd_slow < 1 ||
      macd_signal < 1 || bollinger < 2 || volume_sma < 1) {
    throw ConfigError("indicator windows must be positive (bollinger >= 2)");
  }
  if (macd_fast >= macd_slow) throw ConfigError("macd_fast must be < macd_slow");
  if (!(bollinger_k > 0.0)) throw ConfigError("bollinger_k must be > 0");
}

std::vector<std::string> indicator_names() {
  return {"log_return", "sma_short_ratio", "sma_long_ratio", "price_bias",
          "rsi",        "macd_hist",       "bollinger_width", "volume_ratio"};
}

namespace {

using Series = std::vector<double>;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Trailing simple moving average; NaN until `window` values are available.
Series sma(const Series& x, int window) {
  Series out(x.size(), kNaN);
  double sum = 0.0;
  const auto w = static_cast<std::size_t>(window);
  for (std::size_t t = 0; t < x.size(); ++t) {
    sum += x[t];
    if (t >= w) sum -= x[t - w];
    if (t + 1 >= w) out[t] = sum / window;
  }
  return out;
}

/// Exponential moving average seeded with the SMA of its first `span` valid inputs.
Series ema(const Series& x, int span) {
  Series out(x.size(), kNaN);
  const double alpha = 2.0 / (span + 1.0);
  std::size_t first = 0;
  while (first < x.size() && std::isnan(x[first])) ++first;
  const auto w = static_cast<std::size_t>(span);
  if (first + w > x.size()) return out;
  double seed = 0.0;
  for (std::size_t t = first; t < first + w; ++t) seed += x[t];
  double prev = seed / span;
  out[first + w - 1] = prev;
  for (std::size_t t = first + w; t < x.size(); ++t) {
    prev = alpha * x[t] + (1.0 - alpha) * prev;
    out[t] = prev;
  }
  return out;
}

/// Wilder RSI on [0, 100]. Flat history (no gains, no losses) maps to 50.
Series rsi(const Series& px, int period) {
  Series out(px.size(), kNaN);
  const auto p = static_cast<std::size_t>(period);
  if (px.size() <= p) return out;
  double gain = 0.0, loss = 0.0;
  for (std::size_t t = 1; t <= p; ++t) {
    const double d = px[t] - px[t - 1];
    gain += std::max(d, 0.0);
    loss += std::max(-d, 0.0);
  }
  gain /= period;
  loss /= period;
  auto value = [](double g, double l) {
    if (l == 0.0) return g == 0.0 ? 50.0 : 100.0;
    return 100.0 - 100.0 / (1.0 + g / l);
  };
  out[p] = value(gain, loss);
  for (std::size_t t = p + 1; t < px.size(); ++t) {
    const double d = px[t] - px[t - 1];
    gain = (gain * (period - 1) + std::max(d, 0.0)) / period;
    loss = (loss * (period - 1) + std::max(-d, 0.0)) / period;
    out[t] = value(gain, loss);
  }
  return out;
}

/// Trailing population standard deviation.
Series rolling_std(const Series& x, int window) {
  Series out(x.size(), kNaN);
  const auto w = static_cast<std::size_t>(window);
  for (std::size_t t = w - 1; t < x.size(); ++t) {
    double mean = 0.0;
    for (std::size_t k = t + 1 - w; k <= t; ++k) mean += x[k];
    mean /= window;
    double ss = 0.0;
    for (std::size_t k = t + 1 - w; k <= t; ++k) ss += (x[k] - mean) * (x[k] - mean);
    out[t] = std::sqrt(ss / window);
  }
  return out;
}

}  // namespace

FeatureTensor compute_indicators(const MarketFrame& frame, const IndicatorConfig& config) {
  config.validate();
  const std::size_t warm = config.warmup();
  const std::size_t T = frame.n_dates();
  if (T < warm + 1) {
    throw WarmupError("compute_indicators: need at least " + std::to_string(warm + 1) +
                      " dates of history, got " + std::to_string(T));
  }
  const std::size_t N = frame.n_assets();
  const auto names = indicator_names();
  const std::size_t F = names.size();
  std::vector<Eigen::MatrixXd> slices(T - warm, Eigen::MatrixXd(N, F));

  for (std::size_t i = 0; i < N; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    Series px(T), vol(T);
    for (std::size_t t = 0; t < T; ++t) {
      px[t] = frame.adj_close()(static_cast<Eigen::Index>(t), ii);
      vol[t] = frame.volume()(static_cast<Eigen::Index>(t), ii);
    }
    const Series s_short = sma(px, config.sma_short);
    const Series s_long = sma(px, config.sma_long);
    const Series r = rsi(px, config.rsi);
    const Series fast = ema(px, config.macd_fast);
    const Series slow = ema(px, config.macd_slow);
    Series macd(T, kNaN);
    for (std::size_t t = 0; t < T; ++t) macd[t] = fast[t] - slow[t];
    const Series signal = ema(macd, config.macd_signal);
    const Series bb_mid = sma(px, config.bollinger);
    const Series bb_sd = rolling_std(px, config.bollinger);
    const Series v_avg = sma(vol, config.volume_sma);

    for (std::size_t t = warm; t < T; ++t) {
      auto& row = slices[t - warm];
      const double p = px[t];
      row(ii, 0) = std::log(p / px[t - 1]);
      row(ii, 1) = s_short[t] / p;
      row(ii, 2) = s_long[t] / p;
      row(ii, 3) = (p - s_long[t]) / s_long[t];
      row(ii, 4) = (r[t] - 50.0) / 50.0;
      row(ii, 5) = (macd[t] - signal[t]) / p;
      row(ii, 6) = 2.0 * config.bollinger_k * bb_sd[t] / bb_mid[t];
      row(ii, 7) = v_avg[t] > 0.0 ? vol[t] / v_avg[t] - 1.0 : 0.0;
    }
  }
  std::vector<Date> dates(frame.dates().begin() + static_cast<long>(warm), frame.dates().end());
  return FeatureTensor(std::move(dates), frame.tickers(), names, std::move(slices));
}

FeatureScaler FeatureScaler::fit(const FeatureTensor& tensor, IndexRange fit_range) {
  if (fit_range.size() == 0 || fit_range.end > tensor.n_dates()) {
    throw Error("standardize: fit range empty or outside tensor");
  }
  const auto N = static_cast<Eigen::Index>(tensor.n_assets());
  const auto F = static_cast<Eigen::Index>(tensor.n_features());
  FeatureScaler s;
  s.mean = Eigen::MatrixXd::Zero(N, F);
  for (std::size_t t = fit_range.begin; t < fit_range.end; ++t) s.mean += tensor.slice(t);
  s.mean /= static_cast<double>(fit_range.size());
  Eigen::MatrixXd ss = Eigen::MatrixXd::Zero(N, F);
  for (std::size_t t = fit_range.begin; t < fit_range.end; ++t) {
    ss.array() += (tensor.slice(t) - s.mean).array().square();
  }
  s.std = (ss / static_cast<double>(fit_range.size())).array().sqrt();
  return s;
}

Eigen::MatrixXd FeatureScaler::apply(const Eigen::MatrixXd& slice) const {
  Eigen::MatrixXd out(slice.rows(), slice.cols());
  for (Eigen::Index i = 0; i < slice.rows(); ++i) {
    for (Eigen::Index k = 0; k < slice.cols(); ++k) {
      out(i, k) = std(i, k) > kStdFloor ? (slice(i, k) - mean(i, k)) / std(i, k) : 0.0;
    }
  }
  return out;
}

FeatureTensor standardize(const FeatureTensor& tensor, IndexRange fit_range) {
  const auto scaler = FeatureScaler::fit(tensor, fit_range);
  std::vector<Eigen::MatrixXd> slices;
  slices.reserve(tensor.n_dates());
  for (std::size_t t = 0; t < tensor.n_dates(); ++t) slices.push_back(scaler.apply(tensor.slice(t)));
  return FeatureTensor(tensor.dates(), tensor.tickers(), tensor.feature_names(), std::move(slices));
}

FeatureTensor standardize(const FeatureTensor& tensor, const DateRange& fit_range) {
  const auto& d = tensor.dates();
  const auto b = std::lower_bound(d.begin(), d.end(), fit_range.first);
  const auto e = std::upper_bound(d.begin(), d.end(), fit_range.last);
  return standardize(tensor, IndexRange{static_cast<std::size_t>(b - d.begin()),
                                        static_cast<std::size_t>(e - d.begin())});
}

void write_features_csv(const std::filesystem::path& path, const FeatureTensor& tensor) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot write file");
  out << "date,ticker";
  for (const auto& n : tensor.feature_names()) out << ',' << n;
  out << '\n';
  for (std::size_t t = 0; t < tensor.n_dates(); ++t) {
    const std::string date = tensor.dates()[t].iso();
    for (std::size_t i = 0; i < tensor.n_assets(); ++i) {
      out << date << ',' << tensor.tickers()[i];
      for (std::size_t k = 0; k < tensor.n_features(); ++k) {
        out << ',' << csv::format_double(tensor.at(t, i, k));
      }
      out << '\n';
    }
  }
}

FeatureTensor read_features_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  if (table.header.size() < 3 || table.header[0] != "date" || table.header[1] != "ticker") {
    throw IngestError(path.string() + ": header must be date,ticker,<features...>");
  }
  std::vector<std::string> names(table.header.begin() + 2, table.header.end());
  std::vector<Date> dates;
  std::vector<std::string> tickers;
  std::map<std::string, std::size_t> ticker_index;
  // First date block fixes the ticker order.
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (!dates.empty() && row[0] != dates.front().iso()) break;
    if (dates.empty()) dates.push_back(Date::parse(row[0]));
    ticker_index.emplace(row[1], tickers.size());
    tickers.push_back(row[1]);
  }
  const std::size_t N = tickers.size();
  if (N == 0 || table.rows.size() % N != 0) {
    throw IngestError(path.string() + ": every date must list the same tickers");
  }
  dates.clear();
  std::vector<Eigen::MatrixXd> slices;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t i = r % N;
    if (i == 0) {
      auto d = Date::try_parse(row[0]);
      if (!d) {
        throw IngestError(path.string() + ":" + std::to_string(table.line_numbers[r]) +
                          ": bad date");
      }
      dates.push_back(*d);
      slices.emplace_back(N, names.size());
    } else if (row[0] != dates.back().iso()) {
      throw IngestError(path.string() + ":" + std::to_string(table.line_numbers[r]) +
                        ": incomplete date block");
    }
    if (row[1] != tickers[i]) {
      throw IngestError(path.string() + ":" + std::to_string(table.line_numbers[r]) +
                        ": ticker order differs from first date block");
    }
    for (std::size_t k = 0; k < names.size(); ++k) {
      try {
        slices.back()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
            csv::parse_double(row[k + 2]);
      } catch (const std::invalid_argument& e) {
        throw IngestError(path.string() + ":" + std::to_string(table.line_numbers[r]) + ": " +
                          e.what());
      }
    }
  }
  return FeatureTensor(std::move(dates), std::move(tickers), std::move(names), std::move(slices));
}

}  // namespace dfolio
