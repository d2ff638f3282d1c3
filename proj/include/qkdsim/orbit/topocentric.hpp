#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "qkdsim/core/error.hpp"
#include "qkdsim/core/time.hpp"
#include "qkdsim/core/vec.hpp"
#include "qkdsim/orbit/sgp4.hpp"

namespace qkdsim::orbit {

/// Geodetic ground station location on the WGS-84 ellipsoid.
struct GroundSite {
  double latitude = 1.2966;    // degrees, default: NUS campus, Singapore
  double longitude = 103.7764; // degrees
  double altitude = 20.0;      // metres above the ellipsoid

  void validate() const {
    if (!(latitude >= -90.0 && latitude <= 90.0))
      throw Error(ErrorCode::InvalidConfig, "orbit_dynamics", "site latitude outside [-90, 90]");
    if (!(longitude >= -180.0 && longitude <= 180.0))
      throw Error(ErrorCode::InvalidConfig, "orbit_dynamics", "site longitude outside [-180, 180]");
    if (!std::isfinite(altitude))
      throw Error(ErrorCode::InvalidConfig, "orbit_dynamics", "site altitude must be finite");
  }

  friend bool operator==(const GroundSite&, const GroundSite&) = default;
};

namespace wgs84 {
inline constexpr double a_km = 6378.137;
inline constexpr double f = 1.0 / 298.257223563;
inline constexpr double e2 = f * (2.0 - f);
}  // namespace wgs84

inline Vec3 site_ecef_km(const GroundSite& site) {
  const double phi = site.latitude * kDeg;
  const double lam = site.longitude * kDeg;
  const double h = site.altitude / 1000.0;
  const double n = wgs84::a_km / std::sqrt(1.0 - wgs84::e2 * std::sin(phi) * std::sin(phi));
  return {(n + h) * std::cos(phi) * std::cos(lam), (n + h) * std::cos(phi) * std::sin(lam),
          (n * (1.0 - wgs84::e2) + h) * std::sin(phi)};
}

/// Local east/north/up unit vectors of the site, expressed in ECEF.
struct EnuBasis {
  Vec3 east, north, up;
};

inline EnuBasis site_enu_basis(const GroundSite& site) {
  const double phi = site.latitude * kDeg;
  const double lam = site.longitude * kDeg;
  return {{-std::sin(lam), std::cos(lam), 0.0},
          {-std::sin(phi) * std::cos(lam), -std::sin(phi) * std::sin(lam), std::cos(phi)},
          {std::cos(phi) * std::cos(lam), std::cos(phi) * std::sin(lam), std::sin(phi)}};
}

/// Rotates a TEME vector into the Earth-fixed frame (polar motion ignored).
inline Vec3 teme_to_ecef(Vec3 r, const UtcTime& t) {
  const double g = gmst(t);
  const double c = std::cos(g), s = std::sin(g);
  return {c * r.x + s * r.y, -s * r.x + c * r.y, r.z};
}

inline Vec3 ecef_to_teme(Vec3 r, const UtcTime& t) {
  const double g = gmst(t);
  const double c = std::cos(g), s = std::sin(g);
  return {c * r.x - s * r.y, s * r.x + c * r.y, r.z};
}

struct TopocentricState {
  UtcTime time;
  double azimuth = 0.0;         // degrees clockwise from north, [0, 360)
  double elevation = 0.0;       // degrees above the local horizon
  double range = 0.0;           // km
  double azimuth_rate = 0.0;    // degrees/s
  double elevation_rate = 0.0;  // degrees/s
  double angular_rate = 0.0;    // degrees/s, magnitude of line-of-sight rotation
  Vec3 los_enu;                 // unit line of sight (east, north, up)
};

namespace detail {

struct Look {
  double az, el, range;
  Vec3 enu;
};

inline Look look_angles(Vec3 r_teme, const EnuBasis& b, Vec3 site_ecef, const UtcTime& t) {
  const Vec3 d = teme_to_ecef(r_teme, t) - site_ecef;
  const Vec3 enu{dot(d, b.east), dot(d, b.north), dot(d, b.up)};
  const double rho = enu.norm();
  double az = std::atan2(enu.x, enu.y) / kDeg;
  if (az < 0.0) az += 360.0;
  if (az >= 360.0) az -= 360.0;
  const double el = std::asin(std::clamp(enu.z / rho, -1.0, 1.0)) / kDeg;
  return {az, el, rho, (1.0 / rho) * enu};
}

}  // namespace detail

/// Half-span of the symmetric finite difference used for angular rates
/// (total baseline 100 ms).
inline constexpr double kRateHalfSpan = 0.05;

/// Look angles and rates of an inertial state seen from `site` at `t`.
/// Rates come from a symmetric finite difference over 100 ms, with the state
/// carried along its velocity vector for the two offset samples.
inline TopocentricState eci_to_topocentric(const StateVector& state, const GroundSite& site, const UtcTime& t) {
  const EnuBasis b = site_enu_basis(site);
  const Vec3 s = site_ecef_km(site);
  const double h = kRateHalfSpan;
  const auto mid = detail::look_angles(state.position_km, b, s, t);
  const auto lo = detail::look_angles(state.position_km - h * state.velocity_km_s, b, s, t.plus_seconds(-h));
  const auto hi = detail::look_angles(state.position_km + h * state.velocity_km_s, b, s, t.plus_seconds(h));

  TopocentricState out;
  out.time = t;
  out.azimuth = mid.az;
  out.elevation = mid.el;
  out.range = mid.range;
  out.los_enu = mid.enu;
  double daz = hi.az - lo.az;
  if (daz > 180.0) daz -= 360.0;
  if (daz < -180.0) daz += 360.0;
  out.azimuth_rate = daz / (2.0 * h);
  out.elevation_rate = (hi.el - lo.el) / (2.0 * h);
  const double ang = std::atan2(cross(lo.enu, hi.enu).norm(), dot(lo.enu, hi.enu));
  out.angular_rate = ang / kDeg / (2.0 * h);
  return out;
}

}  // namespace qkdsim::orbit
