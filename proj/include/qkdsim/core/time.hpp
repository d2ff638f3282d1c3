#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include "qkdsim/core/error.hpp"

namespace qkdsim {

/// UTC instant as a two-part Julian date (whole days + fraction) so that
/// second-level arithmetic keeps full double precision.
struct UtcTime {
  double jd = 2451545.0;  // day part, always ends in .5
  double fraction = 0.0;  // [0, 1)

  static UtcTime from_julian(double jd, double fraction = 0.0) {
    UtcTime t{jd, fraction};
    t.normalize();
    return t;
  }

  /// Civil date/time; valid for the Gregorian calendar.
  static UtcTime from_calendar(int year, int month, int day, int hour = 0, int minute = 0,
                               double second = 0.0) {
    // days_from_civil (proleptic Gregorian), counted from 1970-01-01.
    const int y = year - (month <= 2 ? 1 : 0);
    const int era = (y >= 0 ? y : y - 399) / 400;
    const int yoe = y - era * 400;
    const int mp = (month + 9) % 12;
    const int doy = (153 * mp + 2) / 5 + day - 1;
    const int doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    const long days = static_cast<long>(era) * 146097 + doe - 719468;
    UtcTime t{2440587.5 + static_cast<double>(days), (hour * 3600.0 + minute * 60.0 + second) / 86400.0};
    t.normalize();
    return t;
  }

  /// TLE-style epoch: full year plus fractional day of year (1.0 = Jan 1 00:00).
  static UtcTime from_year_day(int year, double day_of_year) {
    UtcTime t = from_calendar(year, 1, 1);
    const double whole = std::floor(day_of_year);
    t.jd += whole - 1.0;
    t.fraction += day_of_year - whole;
    t.normalize();
    return t;
  }

  /// Parses "YYYY-MM-DDTHH:MM:SS[.fff][Z]" (a space may replace the T).
  static UtcTime parse_iso8601(const std::string& text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0;
    double s = 0.0;
    char sep = 'T';
    const int n = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%lf", &y, &mo, &d, &sep, &h, &mi, &s);
    if (n == 3) return from_calendar(y, mo, d);
    if (n != 7 || (sep != 'T' && sep != ' ') || mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 ||
        h > 23 || mi < 0 || mi > 59 || s < 0.0 || s >= 61.0)
      throw Error(ErrorCode::InvalidConfig, "time", "cannot parse UTC timestamp '" + text + "'");
    return from_calendar(y, mo, d, h, mi, s);
  }

  double julian() const { return jd + fraction; }

  UtcTime plus_seconds(double seconds) const {
    UtcTime t{jd, fraction + seconds / 86400.0};
    t.normalize();
    return t;
  }

  /// Seconds from `other` to this instant.
  double seconds_since(const UtcTime& other) const {
    return ((jd - other.jd) + (fraction - other.fraction)) * 86400.0;
  }

  std::string iso8601() const {
    // civil_from_days
    double frac = fraction;
    long days = static_cast<long>(std::llround(jd - 2440587.5));
    double secs = std::round(frac * 86400.0 * 1000.0) / 1000.0;
    if (secs >= 86400.0) {
      secs -= 86400.0;
      ++days;
    }
    const long z = days + 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const long doe = z - era * 146097;
    const long yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    long y = yoe + era * 400;
    const long doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const long mp = (5 * doy + 2) / 153;
    const long d = doy - (153 * mp + 2) / 5 + 1;
    const long m = mp < 10 ? mp + 3 : mp - 9;
    if (m <= 2) ++y;
    const int hh = static_cast<int>(secs / 3600.0);
    const int mm = static_cast<int>((secs - hh * 3600.0) / 60.0);
    const double ss = secs - hh * 3600.0 - mm * 60.0;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%04ld-%02ld-%02ldT%02d:%02d:%06.3fZ", y, m, d, hh, mm, ss);
    return buf;
  }

  friend bool operator<(const UtcTime& a, const UtcTime& b) { return a.seconds_since(b) < 0.0; }
  friend bool operator==(const UtcTime& a, const UtcTime& b) {
    return a.jd == b.jd && a.fraction == b.fraction;
  }

 private:
  void normalize() {
    const double shift = std::floor(fraction);
    jd += shift;
    fraction -= shift;
    // keep the day part on a half-integer boundary
    const double day_frac = jd - 0.5 - std::floor(jd - 0.5);
    if (day_frac != 0.0) {
      jd -= day_frac;
      fraction += day_frac;
      const double again = std::floor(fraction);
      jd += again;
      fraction -= again;
    }
  }
};

/// Greenwich mean sidereal time in radians (IAU-82 polynomial, UT1 taken as UTC).
inline double gmst(const UtcTime& t) {
  const double tut1 = ((t.jd - 2451545.0) + t.fraction) / 36525.0;
  double temp = -6.2e-6 * tut1 * tut1 * tut1 + 0.093104 * tut1 * tut1 +
                (876600.0 * 3600.0 + 8640184.812866) * tut1 + 67310.54841;
  constexpr double two_pi = 6.28318530717958647692;
  temp = std::fmod(temp * (3.14159265358979323846 / 180.0) / 240.0, two_pi);
  if (temp < 0.0) temp += two_pi;
  return temp;
}

}  // namespace qkdsim
