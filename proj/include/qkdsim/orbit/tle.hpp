#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qkdsim/core/error.hpp"
#include "qkdsim/core/time.hpp"

namespace qkdsim::orbit {

/// Mean orbital elements of one two-line element set. Angles in degrees,
/// mean motion in revolutions/day, bstar in 1/earth-radii.
struct TwoLineElement {
  std::string name;
  int satellite_number = 0;
  char classification = 'U';
  std::string intl_designator;  // columns 10-17, trailing blanks removed
  int epoch_year = 2000;         // four-digit year
  double epoch_day = 1.0;        // fractional day of year, 1.0 = Jan 1 00:00 UTC
  double mean_motion_dot = 0.0;  // rev/day^2 (the TLE field: ndot/2)
  double mean_motion_ddot = 0.0; // rev/day^3 (the TLE field: nddot/6)
  double bstar = 0.0;
  int ephemeris_type = 0;
  int element_set_number = 0;
  double inclination = 0.0;
  double raan = 0.0;
  double eccentricity = 0.0;
  double arg_perigee = 0.0;
  double mean_anomaly = 0.0;
  double mean_motion = 0.0;
  int revolution_number = 0;
  std::array<int, 2> line_checksums{0, 0};

  UtcTime epoch() const { return UtcTime::from_year_day(epoch_year, epoch_day); }
};

/// Modulo-10 checksum over the first 68 columns: digits count their value,
/// '-' counts one, everything else zero.
inline int tle_checksum(std::string_view line) {
  int sum = 0;
  for (std::size_t i = 0; i < line.size() && i < 68; ++i) {
    const char c = line[i];
    if (c >= '0' && c <= '9') sum += c - '0';
    else if (c == '-') sum += 1;
  }
  return sum % 10;
}

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] inline void malformed(int line, int first_col, int last_col, std::string_view field,
                                   std::string_view text) {
  throw Error(ErrorCode::MalformedField, "orbit_dynamics",
              "line " + std::to_string(line) + " columns " + std::to_string(first_col) + "-" +
                  std::to_string(last_col) + " (" + std::string(field) + "): '" + std::string(text) + "'");
}

// Columns are 1-based and inclusive, matching the published format tables.
inline std::string columns(const std::string& line, int first, int last) {
  return line.substr(static_cast<std::size_t>(first - 1), static_cast<std::size_t>(last - first + 1));
}

inline double parse_real(const std::string& line, int ln, int first, int last, std::string_view field,
                         bool blank_is_zero = false) {
  const std::string raw = columns(line, first, last);
  std::string t = trim(raw);
  if (t.empty()) {
    if (blank_is_zero) return 0.0;
    malformed(ln, first, last, field, raw);
  }
  // "+.123" and "-.123" are legal in TLEs
  const char* begin = t.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + t.size()) malformed(ln, first, last, field, raw);
  return v;
}

inline int parse_int(const std::string& line, int ln, int first, int last, std::string_view field,
                     bool blank_is_zero = false) {
  const std::string raw = columns(line, first, last);
  const std::string t = trim(raw);
  if (t.empty()) {
    if (blank_is_zero) return 0;
    malformed(ln, first, last, field, raw);
  }
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!(t[i] >= '0' && t[i] <= '9') && !(i == 0 && (t[i] == '-' || t[i] == '+')))
      malformed(ln, first, last, field, raw);
  return std::atoi(t.c_str());
}

// Implied-decimal exponential field such as " 12345-4" meaning 0.12345e-4.
inline double parse_exponential(const std::string& line, int ln, int first, int last,
                                std::string_view field) {
  const std::string raw = columns(line, first, last);
  std::string t = trim(raw);
  if (t.empty()) return 0.0;
  double sign = 1.0;
  if (t[0] == '-' || t[0] == '+') {
    if (t[0] == '-') sign = -1.0;
    t.erase(0, 1);
  }
  if (t.size() < 3) malformed(ln, first, last, field, raw);
  const char exp_sign = t[t.size() - 2];
  const char exp_digit = t.back();
  const std::string mantissa = t.substr(0, t.size() - 2);
  if ((exp_sign != '-' && exp_sign != '+') || exp_digit < '0' || exp_digit > '9' || mantissa.empty())
    malformed(ln, first, last, field, raw);
  for (char c : mantissa)
    if (c < '0' || c > '9') malformed(ln, first, last, field, raw);
  const int exponent = (exp_sign == '-' ? -1 : 1) * (exp_digit - '0');
  const double m = std::atof(("0." + mantissa).c_str());
  return sign * m * std::pow(10.0, exponent);
}

inline std::string format_exponential(double value) {
  char buf[48];
  if (value == 0.0) return " 00000-0";
  const char sign = value < 0.0 ? '-' : ' ';
  const double a = std::fabs(value);
  int e = static_cast<int>(std::floor(std::log10(a))) + 1;
  long m = std::lround(a / std::pow(10.0, e) * 1e5);
  if (m >= 100000) {
    m /= 10;
    ++e;
  }
  std::snprintf(buf, sizeof buf, "%c%05ld%c%d", sign, m, e > 0 ? '+' : '-', std::abs(e));
  return buf;
}

inline void check_line(const std::string& line, int ln) {
  if (line.size() != 69)
    throw Error(ErrorCode::WrongLineLength, "orbit_dynamics",
                "line " + std::to_string(ln) + " has " + std::to_string(line.size()) +
                    " characters, expected 69");
  const char last = line[68];
  if (last < '0' || last > '9') malformed(ln, 69, 69, "checksum", line.substr(68));
  const int expected = tle_checksum(line);
  if (expected != last - '0')
    throw Error(ErrorCode::ChecksumMismatch, "orbit_dynamics",
                "line " + std::to_string(ln) + " checksum digit is " + std::string(1, last) +
                    ", expected " + std::to_string(expected));
}

}  // namespace detail

/// Parses the two data lines of an element set (an optional name is stored
/// verbatim). Leading and trailing whitespace on each line is ignored.
inline TwoLineElement parse_tle(std::string_view line1_in, std::string_view line2_in,
                                std::string_view name = {}) {
  using namespace detail;
  const std::string l1 = trim(line1_in);
  const std::string l2 = trim(line2_in);
  check_line(l1, 1);
  check_line(l2, 2);
  if (l1[0] != '1') malformed(1, 1, 1, "line number", l1.substr(0, 1));
  if (l2[0] != '2') malformed(2, 1, 1, "line number", l2.substr(0, 1));

  TwoLineElement tle;
  std::string nm = trim(name);
  if (nm.rfind("0 ", 0) == 0) nm = trim(nm.substr(2));
  tle.name = nm;

  tle.satellite_number = parse_int(l1, 1, 3, 7, "satellite number");
  tle.classification = l1[7];
  tle.intl_designator = trim(columns(l1, 10, 17));
  const int yy = parse_int(l1, 1, 19, 20, "epoch year");
  tle.epoch_year = yy < 57 ? 2000 + yy : 1900 + yy;
  tle.epoch_day = parse_real(l1, 1, 21, 32, "epoch day");
  if (tle.epoch_day < 1.0 || tle.epoch_day >= 367.0) malformed(1, 21, 32, "epoch day", columns(l1, 21, 32));
  tle.mean_motion_dot = parse_real(l1, 1, 34, 43, "first derivative of mean motion", true);
  tle.mean_motion_ddot = parse_exponential(l1, 1, 45, 52, "second derivative of mean motion");
  tle.bstar = parse_exponential(l1, 1, 54, 61, "bstar");
  tle.ephemeris_type = parse_int(l1, 1, 63, 63, "ephemeris type", true);
  tle.element_set_number = parse_int(l1, 1, 65, 68, "element set number", true);

  const int satnum2 = parse_int(l2, 2, 3, 7, "satellite number");
  if (satnum2 != tle.satellite_number) malformed(2, 3, 7, "satellite number differs from line 1", columns(l2, 3, 7));
  tle.inclination = parse_real(l2, 2, 9, 16, "inclination");
  tle.raan = parse_real(l2, 2, 18, 25, "right ascension of ascending node");
  const int ecc = parse_int(l2, 2, 27, 33, "eccentricity");
  if (ecc < 0) malformed(2, 27, 33, "eccentricity", columns(l2, 27, 33));
  tle.eccentricity = ecc * 1e-7;
  tle.arg_perigee = parse_real(l2, 2, 35, 42, "argument of perigee");
  tle.mean_anomaly = parse_real(l2, 2, 44, 51, "mean anomaly");
  tle.mean_motion = parse_real(l2, 2, 53, 63, "mean motion");
  if (!(tle.mean_motion > 0.0)) malformed(2, 53, 63, "mean motion must be positive", columns(l2, 53, 63));
  tle.revolution_number = parse_int(l2, 2, 64, 68, "revolution number", true);
  tle.line_checksums = {l1[68] - '0', l2[68] - '0'};
  return tle;
}

/// Parses "line1\nline2" or "name\nline1\nline2".
inline TwoLineElement parse_tle(std::string_view text) {
  std::vector<std::string> lines;
  std::istringstream in{std::string(text)};
  for (std::string l; std::getline(in, l);)
    if (!detail::trim(l).empty()) lines.push_back(l);
  if (lines.size() == 2) return parse_tle(lines[0], lines[1]);
  if (lines.size() == 3) return parse_tle(lines[1], lines[2], lines[0]);
  throw Error(ErrorCode::MalformedField, "orbit_dynamics",
              "expected 2 or 3 non-empty lines, got " + std::to_string(lines.size()));
}

/// Canonical fixed-column rendering of both data lines, checksums recomputed.
inline std::array<std::string, 2> format_tle(const TwoLineElement& tle) {
  char buf[160];
  const double ndot = tle.mean_motion_dot;
  std::snprintf(buf, sizeof buf, "1 %05d%c %-8.8s %02d%012.8f %c.%08ld %s %s %1d %4d",
                tle.satellite_number, tle.classification, tle.intl_designator.c_str(), tle.epoch_year % 100,
                tle.epoch_day, ndot < 0.0 ? '-' : ' ', std::lround(std::fabs(ndot) * 1e8),
                detail::format_exponential(tle.mean_motion_ddot).c_str(),
                detail::format_exponential(tle.bstar).c_str(), tle.ephemeris_type,
                tle.element_set_number % 10000);
  std::string l1 = buf;
  l1 += static_cast<char>('0' + tle_checksum(l1));

  std::snprintf(buf, sizeof buf, "2 %05d %8.4f %8.4f %07ld %8.4f %8.4f %11.8f%5d", tle.satellite_number,
                tle.inclination, tle.raan, std::lround(tle.eccentricity * 1e7), tle.arg_perigee,
                tle.mean_anomaly, tle.mean_motion, tle.revolution_number % 100000);
  std::string l2 = buf;
  l2 += static_cast<char>('0' + tle_checksum(l2));
  return {l1, l2};
}

/// Reads every element set from a 2-line or 3-line formatted file.
inline std::vector<TwoLineElement> read_tle_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "orbit_dynamics", "cannot open TLE file '" + path + "'");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);)
    if (!detail::trim(l).empty()) lines.push_back(detail::trim(l));
  std::vector<TwoLineElement> out;
  std::string pending_name;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& l = lines[i];
    if (l.rfind("1 ", 0) == 0 && i + 1 < lines.size() && lines[i + 1].rfind("2 ", 0) == 0) {
      out.push_back(parse_tle(l, lines[i + 1], pending_name));
      pending_name.clear();
      ++i;
    } else if (l.rfind("1 ", 0) == 0 || l.rfind("2 ", 0) == 0) {
      detail::check_line(l, l[0] - '0');
      throw Error(ErrorCode::MalformedField, "orbit_dynamics", "unpaired TLE line: '" + l + "'");
    } else {
      pending_name = l;
    }
  }
  if (out.empty()) throw Error(ErrorCode::MalformedField, "orbit_dynamics", "no element sets in '" + path + "'");
  return out;
}

}  // namespace qkdsim::orbit
