#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "qkdsim/core/error.hpp"
#include "qkdsim/orbit/sgp4.hpp"
#include "qkdsim/orbit/tle.hpp"
#include "qkdsim/orbit/topocentric.hpp"

namespace qkdsim::orbit {

struct PassWindow {
  UtcTime aos;
  UtcTime los;
  UtcTime culmination;
  double max_elevation = 0.0;     // degrees
  double max_angular_rate = 0.0;  // degrees/s

  double duration() const { return los.seconds_since(aos); }
};

/// Line-of-sight geometry at one instant of a pass.
struct PassSample {
  double t = 0.0;  // seconds since the first sample
  TopocentricState topo;
  Vec3 sat_ecef_km;     // satellite position, Earth-fixed
  Vec3 sat_vel_axes;    // inertial velocity expressed in Earth-fixed axes, km/s
};

/// Geometry of one pass sampled at a fixed step.
struct PassGeometry {
  UtcTime start;
  double step = 1.0;
  GroundSite site;
  std::vector<PassSample> samples;

  double duration() const { return samples.empty() ? 0.0 : samples.back().t; }

  /// Linear interpolation of elevation, range and rates at pass-relative time t
  /// (clamped to the sampled span).
  TopocentricState at(double t) const {
    if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "orbit_dynamics", "empty pass geometry");
    if (t <= samples.front().t) return samples.front().topo;
    if (t >= samples.back().t) return samples.back().topo;
    const auto i = static_cast<std::size_t>(std::min<double>(std::floor(t / step), samples.size() - 2));
    const double w = (t - samples[i].t) / (samples[i + 1].t - samples[i].t);
    const auto& a = samples[i].topo;
    const auto& b = samples[i + 1].topo;
    TopocentricState s = a;
    s.time = start.plus_seconds(t);
    s.elevation = a.elevation + w * (b.elevation - a.elevation);
    s.range = a.range + w * (b.range - a.range);
    s.azimuth_rate = a.azimuth_rate + w * (b.azimuth_rate - a.azimuth_rate);
    s.elevation_rate = a.elevation_rate + w * (b.elevation_rate - a.elevation_rate);
    s.angular_rate = a.angular_rate + w * (b.angular_rate - a.angular_rate);
    double daz = b.azimuth - a.azimuth;
    if (daz > 180.0) daz -= 360.0;
    if (daz < -180.0) daz += 360.0;
    s.azimuth = std::fmod(a.azimuth + w * daz + 360.0, 360.0);
    s.los_enu = (a.los_enu + w * (b.los_enu - a.los_enu)).unit();
    return s;
  }
};

inline PassGeometry sample_pass(const Sgp4& sat, const GroundSite& site, const UtcTime& begin, const UtcTime& end,
                                double step = 1.0) {
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidArgument, "orbit_dynamics", "sample step must be positive");
  PassGeometry g;
  g.start = begin;
  g.step = step;
  g.site = site;
  const double span = end.seconds_since(begin);
  const auto n = static_cast<std::size_t>(std::floor(span / step + 1e-9)) + 1;
  g.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * step;
    const UtcTime ti = begin.plus_seconds(t);
    const StateVector sv = sat.propagate(ti);
    g.samples.push_back({t, eci_to_topocentric(sv, site, ti), teme_to_ecef(sv.position_km, ti),
                         teme_to_ecef(sv.velocity_km_s, ti)});
  }
  return g;
}

namespace detail {

inline double elevation_at(const Sgp4& sat, const GroundSite& site, const UtcTime& t) {
  return eci_to_topocentric(sat.propagate(t), site, t).elevation;
}

// Bisection on the sign of elevation between a (sign sa) and b.
inline UtcTime refine_horizon(const Sgp4& sat, const GroundSite& site, UtcTime a, UtcTime b) {
  const bool rising = elevation_at(sat, site, a) < 0.0;
  while (b.seconds_since(a) > 0.05) {
    const UtcTime m = a.plus_seconds(0.5 * b.seconds_since(a));
    const bool above = elevation_at(sat, site, m) >= 0.0;
    if (above == rising) b = m;
    else a = m;
  }
  return a.plus_seconds(0.5 * b.seconds_since(a));
}

}  // namespace detail

/// Maximum line-of-sight angular rate over a pass, sampled at <= 1 s.
inline double max_angular_rate(const PassWindow& pass, const Sgp4& sat, const GroundSite& site) {
  const double dur = pass.duration();
  const int n = std::max(1, static_cast<int>(std::ceil(dur)));
  double best = 0.0;
  for (int i = 0; i <= n; ++i) {
    const UtcTime t = pass.aos.plus_seconds(dur * i / n);
    best = std::max(best, eci_to_topocentric(sat.propagate(t), site, t).angular_rate);
  }
  const UtcTime c = pass.culmination;
  best = std::max(best, eci_to_topocentric(sat.propagate(c), site, c).angular_rate);
  return best;
}

inline double max_angular_rate(const PassWindow& pass, const TwoLineElement& tle, const GroundSite& site) {
  return max_angular_rate(pass, Sgp4(tle), site);
}

/// Passes over `site` within [begin, end] whose culmination reaches
/// `min_elevation`. Horizon crossings are bracketed on a coarse grid and
/// refined by bisection to 0.05 s; passes cut by the window edges are clipped.
inline std::vector<PassWindow> predict_passes(const TwoLineElement& tle, const GroundSite& site, const UtcTime& begin,
                                              const UtcTime& end, double min_elevation, double coarse_step = 20.0) {
  site.validate();
  const double span = end.seconds_since(begin);
  if (!(span > 0.0)) throw Error(ErrorCode::InvalidArgument, "orbit_dynamics", "search window is empty");
  if (span > 7.0 * 86400.0 + 1e-6)
    throw Error(ErrorCode::InvalidArgument, "orbit_dynamics", "search window exceeds 7 days");

  const Sgp4 sat(tle);
  std::vector<PassWindow> passes;
  const auto n = static_cast<long>(std::ceil(span / coarse_step));
  auto time_at = [&](long i) { return i >= n ? end : begin.plus_seconds(static_cast<double>(i) * coarse_step); };

  const double first_el = detail::elevation_at(sat, site, begin);
  bool in_pass = first_el >= 0.0;
  UtcTime aos = begin;
  UtcTime best_t = begin;
  double best_el = first_el;

  auto close_pass = [&](const UtcTime& los) {
    // golden-section refinement of the culmination around the best sample
    UtcTime a = std::max(aos, best_t.plus_seconds(-coarse_step));
    UtcTime b = std::min(los, best_t.plus_seconds(coarse_step));
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    while (b.seconds_since(a) > 0.05) {
      const double w = b.seconds_since(a);
      const UtcTime c = a.plus_seconds((1.0 - gr) * w);
      const UtcTime d = a.plus_seconds(gr * w);
      if (detail::elevation_at(sat, site, c) > detail::elevation_at(sat, site, d)) b = d;
      else a = c;
    }
    const UtcTime culm = a.plus_seconds(0.5 * b.seconds_since(a));
    const double culm_el = std::max(best_el, detail::elevation_at(sat, site, culm));
    if (culm_el >= min_elevation) {
      PassWindow p{aos, los, culm, culm_el, 0.0};
      p.max_angular_rate = max_angular_rate(p, sat, site);
      passes.push_back(p);
    }
  };

  for (long i = 1; i <= n; ++i) {
    const UtcTime t = time_at(i);
    const double el = detail::elevation_at(sat, site, t);
    if (!in_pass && el >= 0.0) {
      aos = detail::refine_horizon(sat, site, time_at(i - 1), t);
      in_pass = true;
      best_el = el;
      best_t = t;
    } else if (in_pass && el < 0.0) {
      close_pass(detail::refine_horizon(sat, site, time_at(i - 1), t));
      in_pass = false;
    } else if (in_pass && el > best_el) {
      best_el = el;
      best_t = t;
    }
  }
  if (in_pass) close_pass(end);
  return passes;
}

/// Element set for a near-circular orbit at `altitude_km` whose ground track
/// passes through `site` at `culmination` (the satellite is at the site's
/// zenith to within the 1e-4 degree resolution of the TLE angle fields).
inline TwoLineElement make_circular_tle(double altitude_km, double inclination_deg, const GroundSite& site,
                                        const UtcTime& culmination, int satellite_number = 99001) {
  const EnuBasis enu = site_enu_basis(site);
  const Vec3 target_ecef = site_ecef_km(site) + altitude_km * enu.up;
  const Vec3 target = ecef_to_teme(target_ecef, culmination);
  const Vec3 u_hat = target.unit();
  const double radius = target.norm();
  const double inc = inclination_deg * kDeg;
  const double decl = std::asin(u_hat.z);
  if (std::fabs(std::sin(decl)) > std::sin(inc) + 1e-12)
    throw Error(ErrorCode::InvalidArgument, "orbit_dynamics", "inclination too low to overfly the site");

  // epoch = culmination; fractional day of year to 8 decimals
  TwoLineElement tle;
  tle.name = "SYNTHETIC";
  tle.satellite_number = satellite_number;
  tle.intl_designator = "24001A";
  {
    const double jd = culmination.julian();
    int year = 2000;
    while (UtcTime::from_calendar(year + 1, 1, 1).julian() <= jd) ++year;
    while (UtcTime::from_calendar(year, 1, 1).julian() > jd) --year;
    const UtcTime jan1 = UtcTime::from_calendar(year, 1, 1);
    tle.epoch_year = year;
    tle.epoch_day = std::round((1.0 + culmination.seconds_since(jan1) / 86400.0) * 1e8) / 1e8;
  }
  tle.inclination = inclination_deg;
  tle.eccentricity = 0.0;
  tle.arg_perigee = 0.0;
  const double a_er = radius / wgs72::radius_km;
  tle.mean_motion = std::round(wgs72::xke / std::pow(a_er, 1.5) * 1440.0 / kTwoPi * 1e8) / 1e8;

  // spherical first guess (ascending branch), then Newton on (raan, mean anomaly)
  const double arg_lat = std::asin(std::clamp(std::sin(decl) / std::sin(inc), -1.0, 1.0));
  const double ra = std::atan2(u_hat.y, u_hat.x);
  double raan = ra - std::atan2(std::cos(inc) * std::sin(arg_lat), std::cos(arg_lat));
  double ma = arg_lat;
  auto wrap360 = [](double deg) { return std::fmod(std::fmod(deg, 360.0) + 360.0, 360.0); };
  auto residual = [&](double r, double m) {
    TwoLineElement t = tle;
    t.raan = wrap360(r / kDeg);
    t.mean_anomaly = wrap360(m / kDeg);
    const Vec3 p = Sgp4(t).propagate_minutes(0.0).position_km.unit();
    const Vec3 d = p - u_hat;
    return Vec2{dot(d, ecef_to_teme(enu.east, culmination)), dot(d, ecef_to_teme(enu.north, culmination))};
  };
  for (int it = 0; it < 8; ++it) {
    const Vec2 f = residual(raan, ma);
    const double h = 1e-6;
    const Vec2 fr = residual(raan + h, ma) - f;
    const Vec2 fm = residual(raan, ma + h) - f;
    const double det = (fr.x * fm.y - fm.x * fr.y) / (h * h);
    if (det == 0.0) break;
    const double dr = (f.x * fm.y - fm.x * f.y) / h / det;
    const double dm = (fr.x * f.y - f.x * fr.y) / h / det;
    raan -= dr;
    ma -= dm;
    if (std::fabs(dr) + std::fabs(dm) < 1e-12) break;
  }
  tle.raan = std::round(wrap360(raan / kDeg) * 1e4) / 1e4;
  tle.mean_anomaly = std::round(wrap360(ma / kDeg) * 1e4) / 1e4;
  if (tle.raan >= 360.0) tle.raan -= 360.0;
  if (tle.mean_anomaly >= 360.0) tle.mean_anomaly -= 360.0;
  const auto lines = format_tle(tle);
  tle.line_checksums = {lines[0][68] - '0', lines[1][68] - '0'};
  return tle;
}

}  // namespace qkdsim::orbit
