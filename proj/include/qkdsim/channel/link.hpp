#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "qkdsim/core/error.hpp"
#include "qkdsim/core/random.hpp"
#include "qkdsim/core/vec.hpp"
#include "qkdsim/source/photon_source.hpp"

namespace qkdsim::channel {

struct LinkConfig {
  double tx_divergence = 20e-6;         // rad, full angle at 1/e^2
  double rx_aperture_diameter = 0.5;    // m
  double rx_obstruction_fraction = 0.1; // share of aperture area blocked
  double zenith_atmospheric_loss = 2.0; // dB
  double optics_efficiency = 0.5;
  double qfov = 15.0;                   // arcsec, full field stop
  double spot_radius_fraction = 1.0;    // spot 1/e^2 radius relative to the stop radius
  double sky_background_rate_zenith = 500.0;  // counts/s into the QFOV

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, "channel_link", what); };
    if (!(tx_divergence > 0.0)) bad("tx_divergence must be positive");
    if (!(rx_aperture_diameter > 0.0)) bad("rx_aperture_diameter must be positive");
    if (!(rx_obstruction_fraction >= 0.0 && rx_obstruction_fraction < 1.0))
      bad("rx_obstruction_fraction must lie in [0, 1)");
    if (!(zenith_atmospheric_loss >= 0.0)) bad("zenith_atmospheric_loss must be non-negative");
    if (!(optics_efficiency > 0.0 && optics_efficiency <= 1.0)) bad("optics_efficiency must lie in (0, 1]");
    if (!(qfov > 0.0)) bad("qfov must be positive");
    if (!(spot_radius_fraction > 0.0)) bad("spot_radius_fraction must be positive");
    if (!(sky_background_rate_zenith >= 0.0)) bad("sky_background_rate_zenith must be non-negative");
  }

  friend bool operator==(const LinkConfig&, const LinkConfig&) = default;
};

struct LinkState {
  double time = 0.0;
  double elevation = 0.0;  // degrees
  double range = 0.0;      // km
  double geometric_loss_db = 0.0;
  double atmospheric_loss_db = 0.0;
  double pointing_loss_db = 0.0;
  double optics_loss_db = 0.0;
  double total_transmittance = 0.0;
  double background_rate = 0.0;  // counts/s
};

inline constexpr double kMinTransmittance = 1e-30;
inline constexpr double kMinValidElevation = 5.0;

inline double to_db(double transmittance) { return -10.0 * std::log10(std::max(transmittance, kMinTransmittance)); }
inline double from_db(double db) { return std::pow(10.0, -db / 10.0); }

/// Far-field capture of a Gaussian beam by the (obstructed) receive aperture.
inline double geometric_loss(double range_km, const LinkConfig& c) {
  if (!(range_km > 0.0)) throw Error(ErrorCode::InvalidArgument, "channel_link", "range must be positive");
  const double beam_radius = range_km * 1000.0 * c.tx_divergence / 2.0;
  const double r_ap = c.rx_aperture_diameter / 2.0;
  const double captured = (r_ap * r_ap * (1.0 - c.rx_obstruction_fraction)) / (beam_radius * beam_radius);
  return to_db(std::min(1.0, captured));
}

/// Zenith loss scaled by the flat-Earth airmass 1/sin(el). Below 5 degrees the
/// 5-degree value is returned and a LowElevation warning is raised.
inline double airmass(double elevation_deg) {
  if (!(elevation_deg > 0.0))
    throw Error(ErrorCode::NonpositiveElevation, "channel_link",
                "elevation " + std::to_string(elevation_deg) + " deg is not above the horizon");
  if (elevation_deg < kMinValidElevation) {
    warn("LowElevation", "elevation " + std::to_string(elevation_deg) + " deg below 5 deg; airmass capped");
    elevation_deg = kMinValidElevation;
  }
  return 1.0 / std::sin(elevation_deg * kDeg);
}

inline double atmospheric_loss(double elevation_deg, const LinkConfig& c) {
  return c.zenith_atmospheric_loss * airmass(elevation_deg);
}

namespace detail {

// I0(x)·exp(-x) for x >= 0, polynomial approximations of Abramowitz & Stegun
// 9.8.1-9.8.2 (relative error below 2e-7, far inside what the quadrature needs).
inline double bessel_i0e(double x) {
  if (x < 3.75) {
    const double t = (x / 3.75) * (x / 3.75);
    return (1.0 + t * (3.5156229 + t * (3.0899424 + t * (1.2067492 + t * (0.2659732 + t * (0.0360768 + t * 0.0045813)))))) *
           std::exp(-x);
  }
  const double t = 3.75 / x;
  return (0.39894228 + t * (0.01328592 + t * (0.00225319 + t * (-0.00157565 + t * (0.00916281 +
          t * (-0.02057706 + t * (0.02635537 + t * (-0.01647633 + t * 0.00392377)))))))) / std::sqrt(x);
}

}  // namespace detail

/// Fraction of a Gaussian spot (1/e^2 radius w) displaced by d that falls
/// inside a centred circular stop of radius R. Integrated over radius with the
/// angular part in closed form (a Bessel I0), composite Simpson in r.
inline double encircled_fraction(double d, double w, double stop_radius) {
  // spot entirely outside the stop: below the transmittance floor anyway
  if (d > stop_radius + 6.0 * w) return 0.0;
  // the integrand is a bump of width ~w/2 around r = d; 64 Simpson panels per w
  const int n = 2 * static_cast<int>(std::clamp(std::ceil(32.0 * stop_radius / w), 32.0, 32768.0));
  const double h = stop_radius / n;
  const double k = 4.0 / (w * w);
  auto f = [&](double r) {
    const double dr = r - d;
    return k * r * std::exp(-2.0 * dr * dr / (w * w)) * detail::bessel_i0e(k * r * d);
  };
  double s = f(0.0) + f(stop_radius);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return std::clamp(s * h / 3.0, 0.0, 1.0);
}

inline double pointing_transmittance(double residual_error_arcsec, const LinkConfig& c) {
  if (!(residual_error_arcsec >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "channel_link", "residual error must be non-negative");
  const double stop = c.qfov / 2.0;
  return std::max(encircled_fraction(residual_error_arcsec, c.spot_radius_fraction * stop, stop), kMinTransmittance);
}

inline double pointing_loss(double residual_error_arcsec, const LinkConfig& c) {
  return to_db(pointing_transmittance(residual_error_arcsec, c));
}

inline LinkState total_transmittance(double range_km, double elevation_deg, double residual_error_arcsec,
                                     const LinkConfig& c, double time = 0.0) {
  LinkState s;
  s.time = time;
  s.elevation = elevation_deg;
  s.range = range_km;
  s.geometric_loss_db = geometric_loss(range_km, c);
  s.atmospheric_loss_db = atmospheric_loss(elevation_deg, c);
  s.pointing_loss_db = pointing_loss(residual_error_arcsec, c);
  s.optics_loss_db = -10.0 * std::log10(c.optics_efficiency);
  s.total_transmittance =
      from_db(s.geometric_loss_db) * from_db(s.atmospheric_loss_db) * from_db(s.pointing_loss_db) * c.optics_efficiency;
  s.background_rate = c.sky_background_rate_zenith * airmass(elevation_deg);
  return s;
}

/// Result of pushing a pair stream through the downlink: indices of the
/// signal photons that reach the receiver and the arrival times of background
/// photons (which carry no pair identity).
struct ChannelOutput {
  std::vector<std::size_t> survivors;
  std::vector<double> background_times;
};

/// Bernoulli thinning at the time-local transmittance (times `launch_fraction`,
/// the share of signal photons routed to the downlink) plus Poisson background.
/// The profile is sample-and-hold and must span [0, stream.duration].
inline ChannelOutput apply_channel(const source::PairEventStream& stream, const std::vector<LinkState>& profile,
                                   std::uint64_t seed, double launch_fraction = 1.0) {
  if (profile.empty() || profile.front().time > 0.0 || profile.back().time < stream.duration)
    throw Error(ErrorCode::ProfileGap, "channel_link", "link profile does not cover [0, " +
                                                         std::to_string(stream.duration) + "] s");
  for (std::size_t i = 1; i < profile.size(); ++i)
    if (!(profile[i].time > profile[i - 1].time))
      throw Error(ErrorCode::ProfileGap, "channel_link", "link profile times must be strictly increasing");

  Rng rng(seed);
  ChannelOutput out;
  std::size_t k = 0;
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const double t = stream.events[i].emission_time;
    while (k + 1 < profile.size() && profile[k + 1].time <= t) ++k;
    if (rng.bernoulli(launch_fraction * profile[k].total_transmittance)) out.survivors.push_back(i);
  }

  for (std::size_t j = 0; j < profile.size(); ++j) {
    const double a = std::max(0.0, profile[j].time);
    const double b = j + 1 < profile.size() ? std::min(profile[j + 1].time, stream.duration) : stream.duration;
    if (!(b > a) || profile[j].background_rate <= 0.0) continue;
    const auto n = rng.poisson(profile[j].background_rate * (b - a));
    for (std::uint64_t m = 0; m < n; ++m) out.background_times.push_back(rng.uniform(a, b));
  }
  std::sort(out.background_times.begin(), out.background_times.end());
  return out;
}

inline void write_link_csv(std::ostream& os, const std::vector<LinkState>& profile) {
  os << "time_s,elevation_deg,range_km,geometric_loss_db,atmospheric_loss_db,pointing_loss_db,optics_loss_db,"
        "transmittance,background_rate\n";
  char buf[256];
  for (const auto& s : profile) {
    std::snprintf(buf, sizeof buf, "%.3f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.9e,%.6f\n", s.time, s.elevation, s.range,
                  s.geometric_loss_db, s.atmospheric_loss_db, s.pointing_loss_db, s.optics_loss_db,
                  s.total_transmittance, s.background_rate);
    os << buf;
  }
}

}  // namespace qkdsim::channel
