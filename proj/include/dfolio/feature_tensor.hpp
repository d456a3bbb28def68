#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dfolio/calendar.hpp"

namespace dfolio {

/// Date x asset x feature array, stored as one asset x feature slice per date.
class FeatureTensor {
 public:
  FeatureTensor() = default;
  FeatureTensor(std::vector<Date> dates, std::vector<std::string> tickers,
                std::vector<std::string> feature_names, std::vector<Eigen::MatrixXd> slices);

  std::size_t n_dates() const { return dates_.size(); }
  std::size_t n_assets() const { return tickers_.size(); }
  std::size_t n_features() const { return names_.size(); }

  const std::vector<Date>& dates() const { return dates_; }
  const std::vector<std::string>& tickers() const { return tickers_; }
  const std::vector<std::string>& feature_names() const { return names_; }

  /// asset x feature matrix for date index t.
  const Eigen::MatrixXd& slice(std::size_t t) const { return slices_[t]; }
  Eigen::MatrixXd& slice(std::size_t t) { return slices_[t]; }
  double at(std::size_t t, std::size_t asset, std::size_t feature) const {
    return slices_[t](static_cast<Eigen::Index>(asset), static_cast<Eigen::Index>(feature));
  }

  /// Date indices [begin, end).
  FeatureTensor rows(std::size_t begin, std::size_t end) const;
  bool all_finite() const;

 private:
  std::vector<Date> dates_;
  std::vector<std::string> tickers_;
  std::vector<std::string> names_;
  std::vector<Eigen::MatrixXd> slices_;
};

}  // namespace dfolio
