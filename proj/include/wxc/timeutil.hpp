#pragma once

#include <chrono>
#include <cstdio>
#include <string>

#include "wxc/tensor.hpp"

namespace wxc {

/// UTC timestamp with calendar helpers. Internally seconds since the Unix
/// epoch; all datasets use whole-hour cadences.
class DateTime {
 public:
  DateTime() = default;
  explicit DateTime(int64_t unix_seconds) : secs_(unix_seconds) {}

  static DateTime from_ymdh(int year, int month, int day, int hour, int minute = 0, int second = 0) {
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                             std::chrono::day{static_cast<unsigned>(day)}};
    require(ymd.ok(), "invalid calendar date");
    const sys_days sd{ymd};
    return DateTime(duration_cast<seconds>(sd.time_since_epoch()).count() + hour * 3600LL + minute * 60LL + second);
  }

  static DateTime parse_iso(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    const int n = std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &se);
    require(n >= 3, "cannot parse ISO-8601 timestamp: " + s);
    return from_ymdh(y, mo, d, h, mi, se);
  }

  std::string iso() const {
    using namespace std::chrono;
    const sys_days sd{floor<days>(sys_seconds{seconds(secs_)})};
    const year_month_day ymd{sd};
    const int64_t rem = secs_ - duration_cast<seconds>(sd.time_since_epoch()).count();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60), static_cast<int>(rem % 60));
    return std::string(buf);
  }

  int64_t unix_seconds() const { return secs_; }

  /// 1-based Julian day within the calendar year (1..366).
  int day_of_year() const {
    using namespace std::chrono;
    const sys_days sd{floor<days>(sys_seconds{seconds(secs_)})};
    const year_month_day ymd{sd};
    const sys_days jan1{year_month_day{ymd.year(), January, std::chrono::day{1}}};
    return static_cast<int>((sd - jan1).count()) + 1;
  }

  int year() const {
    using namespace std::chrono;
    const year_month_day ymd{floor<days>(sys_seconds{seconds(secs_)})};
    return static_cast<int>(ymd.year());
  }

  /// Hour of day as a real (fractional for non-hour timestamps).
  double hour_of_day() const {
    int64_t rem = secs_ % 86400;
    if (rem < 0) rem += 86400;
    return static_cast<double>(rem) / 3600.0;
  }

  DateTime plus_hours(int64_t h) const { return DateTime(secs_ + h * 3600LL); }

  friend bool operator==(const DateTime& a, const DateTime& b) { return a.secs_ == b.secs_; }
  friend bool operator<(const DateTime& a, const DateTime& b) { return a.secs_ < b.secs_; }

 private:
  int64_t secs_ = 0;
};

/// cos/sin of day-of-year and hour-of-day, the 4 broadcast time channels.
struct TimeEncoding {
  double cos_doy, sin_doy, cos_hod, sin_hod;
};

inline TimeEncoding time_encoding_of(const DateTime& t) {
  const double doy_angle = 2.0 * M_PI * static_cast<double>(t.day_of_year() - 1) / 365.25;
  const double hod_angle = 2.0 * M_PI * t.hour_of_day() / 24.0;
  return {std::cos(doy_angle), std::sin(doy_angle), std::cos(hod_angle), std::sin(hod_angle)};
}

}  // namespace wxc
