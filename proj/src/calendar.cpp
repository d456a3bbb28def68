#include "dfolio/calendar.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace dfolio {

namespace {

bool parse_uint(std::string_view s, unsigned& out) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

Date::Date(int year, unsigned month, unsigned day) {
  std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                  std::chrono::day{day}};
  if (!ymd.ok()) {
    throw std::invalid_argument("invalid calendar date");
  }
  days_ = std::chrono::sys_days{ymd};
}

std::optional<Date> Date::try_parse(std::string_view iso) noexcept {
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') return std::nullopt;
  unsigned y = 0, m = 0, d = 0;
  if (!parse_uint(iso.substr(0, 4), y) || !parse_uint(iso.substr(5, 2), m) ||
      !parse_uint(iso.substr(8, 2), d)) {
    return std::nullopt;
  }
  std::chrono::year_month_day ymd{std::chrono::year{static_cast<int>(y)}, std::chrono::month{m},
                                  std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return Date{std::chrono::sys_days{ymd}};
}

Date Date::parse(std::string_view iso) {
  auto d = try_parse(iso);
  if (!d) {
    throw std::invalid_argument("not an ISO-8601 date: '" + std::string(iso) + "'");
  }
  return *d;
}

std::string Date::iso() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
  return buf;
}

Date Date::add_months(int n) const {
  using namespace std::chrono;
  year_month_day ymd = this->ymd();
  year_month ym = year_month{ymd.year(), ymd.month()} + months{n};
  const auto last = year_month_day_last{ym.year(), month_day_last{ym.month()}}.day();
  const auto d = ymd.day() > last ? last : ymd.day();
  return Date{sys_days{year_month_day{ym.year(), ym.month(), d}}};
}

bool Date::is_weekday() const {
  const std::chrono::weekday wd{days_};
  return wd != std::chrono::Saturday && wd != std::chrono::Sunday;
}

std::vector<Date> business_days(Date start, std::size_t count) {
  std::vector<Date> out;
  out.reserve(count);
  Date d = start;
  while (out.size() < count) {
    if (d.is_weekday()) out.push_back(d);
    d = d.add_days(1);
  }
  return out;
}

}  // namespace dfolio
