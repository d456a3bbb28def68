#pragma once

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dfolio {

/// A calendar day. Thin value wrapper over std::chrono::sys_days.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::chrono::sys_days days) : days_(days) {}
  Date(int year, unsigned month, unsigned day);

  /// Parses strict ISO-8601 `YYYY-MM-DD`; throws std::invalid_argument.
  static Date parse(std::string_view iso);
  static std::optional<Date> try_parse(std::string_view iso) noexcept;

  std::string iso() const;
  std::chrono::year_month_day ymd() const { return std::chrono::year_month_day{days_}; }
  std::chrono::sys_days sys() const { return days_; }
  int year() const { return static_cast<int>(ymd().year()); }
  unsigned month() const { return static_cast<unsigned>(ymd().month()); }
  unsigned day() const { return static_cast<unsigned>(ymd().day()); }

  Date add_days(int n) const { return Date{days_ + std::chrono::days{n}}; }
  /// Calendar month arithmetic; the day is clamped to the target month's length.
  Date add_months(int n) const;
  bool is_weekday() const;

  friend constexpr auto operator<=>(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days days_{};
};

/// Inclusive date span [first, last].
struct DateRange {
  Date first;
  Date last;

  bool contains(Date d) const { return first <= d && d <= last; }
};

/// Mon-Fri calendar with `count` days starting at the first weekday >= `start`.
std::vector<Date> business_days(Date start, std::size_t count);

}  // namespace dfolio
