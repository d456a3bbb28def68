#include <doctest.h>

#include <cmath>
#include <random>

#include "dfolio/errors.hpp"
#include "dfolio/features.hpp"
#include "oracles.hpp"

using namespace dfolio;

namespace {

MarketFrame frame_from(const Eigen::MatrixXd& px, const Eigen::MatrixXd& vol) {
  std::vector<std::string> tickers;
  for (Eigen::Index i = 0; i < px.cols(); ++i) tickers.push_back("T" + std::to_string(i));
  return MarketFrame(business_days(Date(2019, 1, 1), static_cast<std::size_t>(px.rows())), tickers, px,
                     vol);
}

MarketFrame random_walk(std::size_t T, std::size_t N, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 0.01);
  std::uniform_real_distribution<double> v(1e5, 2e5);
  Eigen::MatrixXd px(T, N), vol(T, N);
  for (std::size_t i = 0; i < N; ++i) {
    double p = 100.0;
    for (std::size_t t = 0; t < T; ++t) {
      p *= std::exp(z(rng));
      px(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = p;
      vol(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = v(rng);
    }
  }
  return frame_from(px, vol);
}

constexpr std::size_t kLogRet = 0, kSmaShort = 1, kBias = 3, kRsi = 4, kMacd = 5, kBoll = 6, kVol = 7;

}  // namespace

TEST_CASE("strictly increasing prices give RSI 100 (rescaled 1)") {
  Eigen::MatrixXd px(60, 1);
  for (Eigen::Index t = 0; t < 60; ++t) px(t, 0) = 50.0 * std::pow(1.003, static_cast<double>(t));
  auto f = compute_indicators(frame_from(px, Eigen::MatrixXd::Constant(60, 1, 10.0)));
  for (std::size_t t = 0; t < f.n_dates(); ++t) CHECK(f.at(t, 0, kRsi) == 1.0);
}

TEST_CASE("constant series are flat in every oscillator") {
  auto f = compute_indicators(frame_from(Eigen::MatrixXd::Constant(50, 2, 20.0),
                                         Eigen::MatrixXd::Constant(50, 2, 500.0)));
  for (std::size_t t = 0; t < f.n_dates(); ++t) {
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(f.at(t, i, kLogRet) == 0.0);
      CHECK(f.at(t, i, kBias) == 0.0);
      CHECK(std::abs(f.at(t, i, kMacd)) <= 1e-15);
      CHECK(f.at(t, i, kBoll) == 0.0);
      CHECK(f.at(t, i, kVol) == 0.0);
    }
  }
}

TEST_CASE("linear ramp SMA hand value") {
  IndicatorConfig c;
  c.sma_short = 5;
  c.sma_long = 10;
  c.rsi = 5;
  c.macd_fast = 3;
  c.macd_slow = 6;
  c.macd_signal = 3;
  c.bollinger = 10;
  c.volume_sma = 10;
  REQUIRE(c.warmup() == 9);
  Eigen::MatrixXd px(30, 1);
  for (Eigen::Index t = 0; t < 30; ++t) px(t, 0) = static_cast<double>(t + 1);
  auto f = compute_indicators(frame_from(px, Eigen::MatrixXd::Ones(30, 1)), c);
  // Day 30 is frame row 29, feature row 29 - warmup.
  CHECK(f.at(29 - 9, 0, kSmaShort) == doctest::Approx(28.0 / 30.0).epsilon(1e-14));
  CHECK(f.at(29 - 9, 0, kLogRet) == doctest::Approx(std::log(30.0 / 29.0)).epsilon(1e-14));
}

TEST_CASE("short history raises a warm-up error naming the length") {
  IndicatorConfig c;
  const std::string need = std::to_string(c.warmup() + 1);
  CHECK_THROWS_WITH_AS(compute_indicators(random_walk(c.warmup(), 2, 1)), doctest::Contains(need.c_str()),
                       WarmupError);
  CHECK_NOTHROW(compute_indicators(random_walk(c.warmup() + 1, 2, 1)));
}

TEST_CASE("indicator ranges") {
  auto f = compute_indicators(random_walk(400, 4, 9));
  CHECK(f.all_finite());
  CHECK(f.n_features() == indicator_names().size());
  for (std::size_t t = 0; t < f.n_dates(); ++t) {
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(f.at(t, i, kRsi) >= -1.0);
      CHECK(f.at(t, i, kRsi) <= 1.0);
      CHECK(f.at(t, i, kBoll) >= 0.0);
    }
  }
}

TEST_CASE("features at t ignore data after t") {
  const auto frame = random_walk(200, 3, 21);
  const auto base = compute_indicators(frame);
  const std::size_t cut = 120;  // frame row
  Eigen::MatrixXd px = frame.adj_close(), vol = frame.volume();
  for (Eigen::Index t = cut + 1; t < px.rows(); ++t) {
    px.row(t) *= 3.0;
    vol.row(t) *= 0.01;
  }
  const auto poisoned = compute_indicators(MarketFrame(frame.dates(), frame.tickers(), px, vol));
  const std::size_t warm = IndicatorConfig{}.warmup();
  for (std::size_t t = 0; t + warm <= cut; ++t) CHECK(poisoned.slice(t) == base.slice(t));
  CHECK(poisoned.slice(cut + 1 - warm) != base.slice(cut + 1 - warm));
}

TEST_CASE("warm-up leaves the feature axis as a suffix of the frame axis") {
  const auto frame = random_walk(100, 2, 3);
  const auto f = compute_indicators(frame);
  const std::size_t warm = IndicatorConfig{}.warmup();
  REQUIRE(f.n_dates() == frame.n_dates() - warm);
  for (std::size_t t = 0; t < f.n_dates(); ++t) CHECK(f.dates()[t] == frame.dates()[t + warm]);
}

TEST_CASE("standardization") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 1.0);
  const std::size_t T = 2000, N = 3, F = 2;
  std::vector<Eigen::MatrixXd> slices(T, Eigen::MatrixXd(N, F));
  for (auto& s : slices) {
    for (Eigen::Index i = 0; i < 3; ++i) {
      s(i, 0) = 5.0 + 2.0 * z(rng);
      s(i, 1) = 7.0;  // constant column
    }
  }
  FeatureTensor tensor(business_days(Date(2015, 1, 1), T), {"A", "B", "C"}, {"x", "c"}, slices);

  SUBCASE("fit on the full range centers and scales") {
    auto s = standardize(tensor, IndexRange{0, T});
    for (Eigen::Index i = 0; i < 3; ++i) {
      double m = 0.0, ss = 0.0;
      for (std::size_t t = 0; t < T; ++t) m += s.slice(t)(i, 0);
      m /= T;
      for (std::size_t t = 0; t < T; ++t) ss += std::pow(s.slice(t)(i, 0) - m, 2);
      CHECK(std::abs(m) <= 1e-12);
      CHECK(std::sqrt(ss / T) == doctest::Approx(1.0).epsilon(1e-12));
      for (std::size_t t = 0; t < T; ++t) CHECK(s.slice(t)(i, 1) == 0.0);
    }
  }

  SUBCASE("fit on a prefix only uses that prefix") {
    auto s1 = standardize(tensor, IndexRange{0, 500});
    auto t2 = tensor;
    for (std::size_t t = 500; t < T; ++t) t2.slice(t).array() += 100.0;
    auto s2 = standardize(t2, IndexRange{0, 500});
    for (std::size_t t = 0; t < 500; ++t) CHECK(s1.slice(t) == s2.slice(t));
    // Raw draws have mean 5, std 2: the out-of-range mean stays within 3 std / sqrt(n).
    double m = 0.0;
    for (std::size_t t = 500; t < T; ++t) m += s1.slice(t)(0, 0);
    m /= static_cast<double>(T - 500);
    CHECK(std::abs(m) <= 3.0 / std::sqrt(500.0) + 3.0 / std::sqrt(1500.0));
  }

  SUBCASE("standardizing twice is idempotent") {
    auto once = standardize(tensor, IndexRange{100, 900});
    auto twice = standardize(once, IndexRange{100, 900});
    for (std::size_t t = 0; t < T; ++t) CHECK((once.slice(t) - twice.slice(t)).cwiseAbs().maxCoeff() <= 1e-9);
  }

  SUBCASE("date-range overload matches the index overload") {
    const DateRange dr{tensor.dates()[10], tensor.dates()[59]};
    auto a = standardize(tensor, dr);
    auto b = standardize(tensor, IndexRange{10, 60});
    for (std::size_t t = 0; t < T; t += 97) CHECK(a.slice(t) == b.slice(t));
  }

  CHECK_THROWS_AS(standardize(tensor, IndexRange{5, 5}), Error);
}

TEST_CASE("features csv round trip") {
  const auto f = compute_indicators(random_walk(80, 3, 12));
  const auto dir = oracle::scratch_dir("features_csv");
  write_features_csv(dir / "features.csv", f);
  const auto g = read_features_csv(dir / "features.csv");
  CHECK(g.dates() == f.dates());
  CHECK(g.tickers() == f.tickers());
  CHECK(g.feature_names() == f.feature_names());
  for (std::size_t t = 0; t < f.n_dates(); ++t) CHECK(g.slice(t) == f.slice(t));
}
