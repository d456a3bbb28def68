#include "dfolio/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "dfolio/csv.hpp"
#include "dfolio/errors.hpp"

namespace dfolio {

MarketFrame::MarketFrame(std::vector<Date> dates, std::vector<std::string> tickers,
                         Eigen::MatrixXd adj_close, Eigen::MatrixXd volume)
    : dates_(std::move(dates)),
      tickers_(std::move(tickers)),
      adj_close_(std::move(adj_close)),
      volume_(std::move(volume)) {
  const auto T = static_cast<Eigen::Index>(dates_.size());
  const auto N = static_cast<Eigen::Index>(tickers_.size());
  if (adj_close_.rows() != T || adj_close_.cols() != N || volume_.rows() != T ||
      volume_.cols() != N) {
    throw UniverseError("market frame: matrix shape does not match dates x tickers");
  }
  for (std::size_t t = 1; t < dates_.size(); ++t) {
    if (!(dates_[t - 1] < dates_[t])) {
      throw UniverseError("market frame: dates not strictly increasing at " + dates_[t].iso());
    }
  }
  if (!(adj_close_.array() > 0.0).all() || !adj_close_.allFinite()) {
    throw UniverseError("market frame: adj_close must be finite and > 0");
  }
  if (!(volume_.array() >= 0.0).all()) {
    throw UniverseError("market frame: volume must be >= 0");
  }
}

MarketFrame MarketFrame::rows(std::size_t begin, std::size_t end) const {
  const auto b = static_cast<Eigen::Index>(begin);
  const auto n = static_cast<Eigen::Index>(end - begin);
  return MarketFrame(std::vector<Date>(dates_.begin() + b, dates_.begin() + b + n), tickers_,
                     adj_close_.middleRows(b, n), volume_.middleRows(b, n));
}

namespace {

[[noreturn]] void row_error(const std::filesystem::path& path, std::size_t line,
                            const std::string& msg) {
  throw IngestError(path.string() + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace

AssetSeries read_asset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError(path.string() + ": cannot open file");
  AssetSeries series;
  series.ticker = path.stem().string();

  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (line != kCsvHeader) {
        row_error(path, lineno, std::string("missing header '") + kCsvHeader + "'");
      }
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 7) row_error(path, lineno, "expected 7 fields");
    AssetBar bar;
    auto d = Date::try_parse(f[0]);
    if (!d) row_error(path, lineno, "unparsable date '" + f[0] + "'");
    bar.date = *d;
    try {
      bar.open = csv::parse_double(f[1]);
      bar.high = csv::parse_double(f[2]);
      bar.low = csv::parse_double(f[3]);
      bar.close = csv::parse_double(f[4]);
      bar.adj_close = csv::parse_double(f[5]);
      bar.volume = csv::parse_double(f[6]);
    } catch (const std::invalid_argument& e) {
      row_error(path, lineno, e.what());
    }
    const double fields[] = {bar.open, bar.high, bar.low, bar.close, bar.adj_close, bar.volume};
    for (double v : fields) {
      if (!std::isfinite(v)) row_error(path, lineno, "non-finite value");
    }
    if (!(bar.adj_close > 0.0)) row_error(path, lineno, "adj_close must be > 0");
    if (!(bar.open > 0.0 && bar.close > 0.0 && bar.low > 0.0)) {
      row_error(path, lineno, "prices must be > 0");
    }
    if (bar.volume < 0.0) row_error(path, lineno, "volume must be >= 0");
    const double lo = std::min(bar.open, bar.close);
    const double hi = std::max(bar.open, bar.close);
    if (bar.low > lo || hi > bar.high) {
      row_error(path, lineno, "inconsistent OHLC (need low <= open,close <= high)");
    }
    if (!series.bars.empty() && !(series.bars.back().date < bar.date)) {
      row_error(path, lineno, "dates not strictly increasing");
    }
    series.bars.push_back(bar);
  }
  if (!have_header) row_error(path, 1, std::string("missing header '") + kCsvHeader + "'");
  return series;
}

void write_asset_csv(const std::filesystem::path& path, const AssetSeries& series) {
  std::ofstream out(path);
  if (!out) throw IngestError(path.string() + ": cannot write file");
  out << kCsvHeader << '\n';
  for (const auto& b : series.bars) {
    out << b.date.iso() << ',' << csv::format_double(b.open) << ',' << csv::format_double(b.high)
        << ',' << csv::format_double(b.low) << ',' << csv::format_double(b.close) << ','
        << csv::format_double(b.adj_close) << ',' << csv::format_double(b.volume) << '\n';
  }
}

MarketFrame align(std::vector<AssetSeries> series) {
  if (series.empty()) throw UniverseError("no input files");
  std::sort(series.begin(), series.end(),
            [](const AssetSeries& a, const AssetSeries& b) { return a.ticker < b.ticker; });
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series[i].ticker == series[i - 1].ticker) {
      throw UniverseError("duplicate ticker '" + series[i].ticker + "'");
    }
  }

  std::vector<Date> common;
  for (const auto& b : series.front().bars) common.push_back(b.date);
  for (std::size_t i = 1; i < series.size(); ++i) {
    std::vector<Date> mine;
    for (const auto& b : series[i].bars) mine.push_back(b.date);
    std::vector<Date> next;
    std::set_intersection(common.begin(), common.end(), mine.begin(), mine.end(),
                          std::back_inserter(next));
    common = std::move(next);
  }
  if (common.empty()) throw UniverseError("empty date intersection across assets");

  const auto T = static_cast<Eigen::Index>(common.size());
  const auto N = static_cast<Eigen::Index>(series.size());
  Eigen::MatrixXd px(T, N), vol(T, N);
  std::vector<std::string> tickers;
  for (Eigen::Index j = 0; j < N; ++j) {
    const auto& s = series[static_cast<std::size_t>(j)];
    tickers.push_back(s.ticker);
    std::size_t k = 0;
    for (Eigen::Index t = 0; t < T; ++t) {
      while (s.bars[k].date < common[static_cast<std::size_t>(t)]) ++k;
      px(t, j) = s.bars[k].adj_close;
      vol(t, j) = s.bars[k].volume;
    }
  }
  return MarketFrame(std::move(common), std::move(tickers), std::move(px), std::move(vol));
}

MarketFrame ingest_csv_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IngestError(dir.string() + ": not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
        entry.path().filename() != "features.csv" && entry.path().filename() != "panel.csv") {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) throw IngestError(dir.string() + ": no input files");
  std::sort(files.begin(), files.end());
  std::vector<AssetSeries> series;
  series.reserve(files.size());
  for (const auto& f : files) series.push_back(read_asset_csv(f));
  return align(std::move(series));
}

ReturnPanel compute_returns(const MarketFrame& frame) {
  if (frame.n_dates() < 2) throw UniverseError("compute_returns: need at least 2 dates");
  const auto& px = frame.adj_close();
  const auto T = px.rows();
  ReturnPanel out;
  out.dates.assign(frame.dates().begin() + 1, frame.dates().end());
  out.simple_returns = px.bottomRows(T - 1).array() / px.topRows(T - 1).array() - 1.0;
  out.log_returns = out.simple_returns.array().log1p();
  return out;
}

void SyntheticSpec::validate() const {
  if (n_assets < 1) throw ConfigError("synthetic: n_assets must be >= 1");
  if (n_days < 2) throw ConfigError("synthetic: n_days must be >= 2");
  if (!(noise_scale > 0.0)) throw ConfigError("synthetic: noise_scale must be > 0");
  if (signal_coefficients.empty()) throw ConfigError("synthetic: need >= 1 signal coefficient");
  if (feature_persistence < 0.0 || feature_persistence >= 1.0) {
    throw ConfigError("synthetic: feature_persistence must be in [0, 1)");
  }
  if (market_noise_scale < 0.0) throw ConfigError("synthetic: market_noise_scale must be >= 0");
  if (hetero_strength < 0.0) throw ConfigError("synthetic: hetero_strength must be >= 0");
  if (hetero_strength > 0.0 && hetero_feature >= signal_coefficients.size()) {
    throw ConfigError("synthetic: hetero_feature out of range");
  }
  if (noise_dof != 0.0 && !(noise_dof > 2.0)) {
    throw ConfigError("synthetic: noise_dof must be 0 (Gaussian) or > 2");
  }
  for (const auto& b : regime_breaks) {
    if (b.day >= n_days) throw ConfigError("synthetic: regime break day outside [0, n_days)");
    if (!(b.volatility_multiplier > 0.0)) {
      throw ConfigError("synthetic: regime multiplier must be > 0");
    }
  }
}

SyntheticMarket generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t T = spec.n_days;
  const std::size_t N = spec.n_assets;
  const std::size_t F = spec.signal_coefficients.size();

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::VectorXd beta(static_cast<Eigen::Index>(F));
  for (std::size_t k = 0; k < F; ++k) beta(static_cast<Eigen::Index>(k)) = spec.signal_coefficients[k];

  const double phi = spec.feature_persistence;
  const double innov = std::sqrt(1.0 - phi * phi);
  std::vector<Eigen::MatrixXd> x(T, Eigen::MatrixXd(N, F));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t k = 0; k < F; ++k) {
        const double z = normal(rng);
        const auto ii = static_cast<Eigen::Index>(i);
        const auto kk = static_cast<Eigen::Index>(k);
        x[t](ii, kk) = t == 0 ? z : phi * x[t - 1](ii, kk) + innov * z;
      }
    }
  }

  auto regime_multiplier = [&](std::size_t day) {
    double m = 1.0;
    std::size_t best = 0;
    bool found = false;
    for (const auto& b : spec.regime_breaks) {
      if (b.day <= day && (!found || b.day >= best)) {
        m = b.volatility_multiplier;
        best = b.day;
        found = true;
      }
    }
    return m;
  };

  std::chi_squared_distribution<double> chi2(spec.noise_dof > 0.0 ? spec.noise_dof : 1.0);
  auto draw_noise = [&]() {
    const double z = normal(rng);
    if (spec.noise_dof <= 0.0) return z;
    const double nu = spec.noise_dof;
    return z / std::sqrt(chi2(rng) / nu) * std::sqrt((nu - 2.0) / nu);
  };

  Eigen::MatrixXd px(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(N));
  px.row(0).setConstant(100.0);
  for (std::size_t t = 1; t < T; ++t) {
    const double m = regime_multiplier(t);
    const double common = spec.market_noise_scale > 0.0 ? spec.market_noise_scale * m * draw_noise() : 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const Eigen::VectorXd xi = x[t - 1].row(ii).transpose();
      double scale = spec.noise_scale * m;
      if (spec.hetero_strength > 0.0) {
        scale *= 1.0 + spec.hetero_strength *
                           std::abs(xi(static_cast<Eigen::Index>(spec.hetero_feature)));
      }
      double r = beta.dot(xi) + common + scale * draw_noise();
      r = std::max(r, -0.95);
      px(static_cast<Eigen::Index>(t), ii) = px(static_cast<Eigen::Index>(t - 1), ii) * (1.0 + r);
    }
  }

  std::vector<Date> dates = business_days(spec.start_date, T);
  std::vector<std::string> tickers;
  for (std::size_t i = 0; i < N; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "SYN%02zu", i);
    tickers.emplace_back(buf);
  }

  Eigen::MatrixXd vol(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(N));
  std::vector<AssetSeries> series(N);
  for (std::size_t i = 0; i < N; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    series[i].ticker = tickers[i];
    for (std::size_t t = 0; t < T; ++t) {
      const auto tt = static_cast<Eigen::Index>(t);
      AssetBar b;
      b.date = dates[t];
      b.close = px(tt, ii);
      b.adj_close = b.close;
      b.open = t == 0 ? b.close : px(tt - 1, ii);
      b.high = std::max(b.open, b.close) * (1.0 + 0.002 * std::abs(normal(rng)));
      b.low = std::min(b.open, b.close) * (1.0 - 0.002 * std::abs(normal(rng)));
      b.volume = std::round(1.0e6 * std::exp(0.25 * normal(rng)));
      vol(tt, ii) = b.volume;
      series[i].bars.push_back(b);
    }
  }

  std::vector<std::string> names;
  for (std::size_t k = 0; k < F; ++k) names.push_back("x" + std::to_string(k));

  SyntheticMarket out;
  out.frame = MarketFrame(dates, tickers, px, vol);
  out.features = FeatureTensor(dates, tickers, std::move(names), std::move(x));
  out.true_coefficients = beta;
  out.series = std::move(series);
  return out;
}

}  // namespace dfolio
