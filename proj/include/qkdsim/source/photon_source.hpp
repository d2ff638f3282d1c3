#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qkdsim/core/error.hpp"
#include "qkdsim/core/random.hpp"
#include "qkdsim/core/vec.hpp"

namespace qkdsim::source {

enum class Basis : std::uint8_t { HV = 0, AD = 1 };

/// Which Bell state the source emits. Under PhiPlus both photons give equal
/// outcomes in HV and AD; under PsiMinus they give opposite outcomes.
enum class StateConvention { PhiPlus, PsiMinus };

inline bool anticorrelated(StateConvention c) { return c == StateConvention::PsiMinus; }

struct SourceConfig {
  double brightness = 13.6e6;       // pairs/s/mW
  double pump_power = 1.84;         // mW
  double visibility = 0.98;
  double downlink_fraction = 0.9;   // share of signal photons sent to ground
  double beacon_frequency = 10e3;   // Hz, 0 disables the beacon
  double beacon_pulse_width = 5e-9; // s
  double intensity_imbalance = 0.1;
  double signal_wavelength_nm = 785.0;
  double idler_wavelength_nm = 837.0;
  StateConvention convention = StateConvention::PhiPlus;
  std::uint64_t rng_seed = 1;

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, "photon_source", what); };
    if (!(brightness > 0.0)) bad("brightness must be positive");
    if (!(pump_power >= 0.0)) bad("pump_power must be non-negative");
    if (!(visibility >= 0.0 && visibility <= 1.0)) bad("visibility must lie in [0, 1]");
    if (!(downlink_fraction > 0.0 && downlink_fraction <= 1.0)) bad("downlink_fraction must lie in (0, 1]");
    if (beacon_frequency != 0.0 && !(beacon_frequency >= 1e3 && beacon_frequency <= 50e3))
      bad("beacon_frequency must lie in [1 kHz, 50 kHz] (0 disables the beacon)");
    if (!(beacon_pulse_width > 0.0)) bad("beacon_pulse_width must be positive");
    if (!(intensity_imbalance >= 0.0 && intensity_imbalance < 1.0)) bad("intensity_imbalance must lie in [0, 1)");
  }

  friend bool operator==(const SourceConfig&, const SourceConfig&) = default;
};

/// One emitted pair. The idler is measured on board; the signal's state is
/// carried as `latent_bit`, the outcome a ground detector would see in the
/// idler's basis if the pair were perfect. `error_flag` marks pairs whose
/// correlation is broken by source imperfection.
struct PairEvent {
  double emission_time = 0.0;
  Basis idler_basis = Basis::HV;
  bool idler_outcome = false;
  bool latent_bit = false;
  bool error_flag = false;

  friend bool operator==(const PairEvent&, const PairEvent&) = default;
};

struct PairEventStream {
  std::vector<PairEvent> events;
  std::vector<double> beacon_times;
  double duration = 0.0;
  SourceConfig config_snapshot;
};

inline double pair_rate(const SourceConfig& c) { return c.brightness * c.pump_power; }

inline double required_pump_power(double target_rate, double brightness) {
  if (!(brightness > 0.0))
    throw Error(ErrorCode::NonpositiveBrightness, "photon_source", "brightness must be positive");
  return target_rate / brightness;
}

inline double visibility_from_extrema(double c_max, double c_min) {
  if (!(c_min >= 0.0) || !(c_max >= c_min) || !(c_max > 0.0))
    throw Error(ErrorCode::InvalidExtrema, "photon_source",
                "need c_max >= c_min >= 0 and c_max > 0, got " + std::to_string(c_max) + ", " +
                    std::to_string(c_min));
  return (c_max - c_min) / (c_max + c_min);
}

inline double qber_from_visibility(double vis) {
  if (!(vis >= 0.0 && vis <= 1.0))
    throw Error(ErrorCode::OutOfRange, "photon_source", "visibility " + std::to_string(vis) + " outside [0, 1]");
  return (1.0 - vis) / 2.0;
}

inline double visibility_from_qber(double qber) {
  if (!(qber >= 0.0 && qber <= 0.5))
    throw Error(ErrorCode::OutOfRange, "photon_source", "qber " + std::to_string(qber) + " outside [0, 0.5]");
  return 1.0 - 2.0 * qber;
}

/// Pulse times k/f for k = 0 .. floor(duration*f).
inline std::vector<double> beacon_schedule(double frequency, double duration) {
  std::vector<double> times;
  if (frequency <= 0.0) return times;
  const auto n = static_cast<std::size_t>(std::floor(duration * frequency + 1e-9)) + 1;
  times.reserve(n);
  for (std::size_t k = 0; k < n; ++k) times.push_back(static_cast<double>(k) / frequency);
  return times;
}

/// Homogeneous Poisson pair emission over [0, duration]. `stream` selects an
/// independent random stream for the same seed (used for photon slices).
inline PairEventStream generate_pair_stream(const SourceConfig& config, double duration, std::uint64_t stream = 0) {
  config.validate();
  if (!(duration > 0.0)) throw Error(ErrorCode::InvalidArgument, "photon_source", "duration must be positive");
  PairEventStream out;
  out.duration = duration;
  out.config_snapshot = config;
  out.beacon_times = beacon_schedule(config.beacon_frequency, duration);

  const double rate = pair_rate(config);
  if (rate <= 0.0) return out;
  Rng rng(sub_seed(config.rng_seed, "photon_source", stream));
  const double p_err = qber_from_visibility(config.visibility);
  const bool anti = anticorrelated(config.convention);
  out.events.reserve(static_cast<std::size_t>(rate * duration * 1.01) + 16);
  double t = 0.0;
  for (;;) {
    const double next = t + rng.exponential(rate);
    if (next > duration) break;
    t = next > t ? next : std::nextafter(t, duration + 1.0);
    PairEvent e;
    e.emission_time = t;
    e.idler_basis = rng.coin() ? Basis::AD : Basis::HV;
    e.idler_outcome = rng.coin();
    e.latent_bit = e.idler_outcome != anti;
    e.error_flag = rng.bernoulli(p_err);
    out.events.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single-polarizer fringe

/// Expected coincidence fraction at polarizer angle theta (degrees). Maxima at
/// 0 and 90 deg (HH, VV), minima at 45 and 135 deg (DD, AA); the imbalance
/// tilts the two maxima against each other without touching the minima.
inline double fringe_shape(double theta_deg, double visibility, double imbalance) {
  const double th = theta_deg * kDeg;
  return 0.25 * (1.0 + imbalance * std::cos(2.0 * th)) * (1.0 + visibility * std::cos(4.0 * th));
}

struct ScanParams {
  double start = 0.0;       // degrees
  double stop = 180.0;      // degrees, inclusive
  double step = 5.0;        // degrees
  double integration = 1.0; // s per angle
  double efficiency = 1.0;  // coincidence detection efficiency of the test bench
  bool noise = true;

  std::vector<double> angles() const {
    std::vector<double> a;
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i) a.push_back(start + static_cast<double>(i) * step);
    return a;
  }

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, "photon_source", what); };
    if (!(integration > 0.0)) bad("scan integration must be positive");
    if (!(step > 0.0)) bad("scan step must be positive");
    if (!(stop > start)) bad("scan stop must exceed start");
    if (!(efficiency > 0.0 && efficiency <= 1.0)) bad("scan efficiency must lie in (0, 1]");
  }
};

/// Coincidence counts per polarizer angle. With `noise` the counts are Poisson
/// draws around the expectation; otherwise the expectation itself.
inline std::vector<double> polarizer_scan(const SourceConfig& config, const std::vector<double>& angles,
                                          double integration, double efficiency = 1.0, bool noise = true) {
  config.validate();
  if (!(integration > 0.0)) throw Error(ErrorCode::InvalidArgument, "photon_source", "integration must be positive");
  Rng rng(sub_seed(config.rng_seed, "photon_source.scan"));
  const double scale = pair_rate(config) * integration * efficiency;
  std::vector<double> counts;
  counts.reserve(angles.size());
  for (double a : angles) {
    const double mean = scale * fringe_shape(a, config.visibility, config.intensity_imbalance);
    counts.push_back(noise ? static_cast<double>(rng.poisson(mean)) : mean);
  }
  return counts;
}

struct FringeFit {
  std::array<double, 7> coeffs{};  // 1, cos2, sin2, cos4, sin4, cos6, sin6
  double c_max = 0.0;              // mean of the two fitted maxima
  double c_min = 0.0;              // mean of the two fitted minima
  double peak_ratio = 1.0;         // larger/smaller of the two maxima
  double visibility = 0.0;

  double eval(double theta_deg) const {
    const double th = theta_deg * kDeg;
    double v = coeffs[0];
    for (int k = 1; k <= 3; ++k) {
      v += coeffs[2 * k - 1] * std::cos(2.0 * k * th) + coeffs[2 * k] * std::sin(2.0 * k * th);
    }
    return v;
  }
};

namespace detail {

// Gaussian elimination with partial pivoting on a small dense system.
template <std::size_t N>
std::array<double, N> solve(std::array<std::array<double, N>, N> a, std::array<double, N> b) {
  for (std::size_t c = 0; c < N; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < N; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[p][c])) p = r;
    if (std::fabs(a[p][c]) < 1e-300)
      throw Error(ErrorCode::InvalidArgument, "photon_source", "fringe fit is singular (too few distinct angles)");
    std::swap(a[p], a[c]);
    std::swap(b[p], b[c]);
    for (std::size_t r = c + 1; r < N; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < N; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::array<double, N> x{};
  for (std::size_t i = N; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < N; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

}  // namespace detail

/// Least-squares fit of a 180-degree periodic curve (harmonics up to 6 theta)
/// to scan data, then visibility from the fitted extrema. The two maxima and
/// the two minima are averaged so that a peak imbalance does not bias the
/// contrast.
inline FringeFit fit_fringe(const std::vector<double>& angles, const std::vector<double>& counts) {
  if (angles.size() != counts.size())
    throw Error(ErrorCode::InvalidArgument, "photon_source", "angles and counts differ in length");
  if (angles.size() < 7)
    throw Error(ErrorCode::InvalidArgument, "photon_source", "fringe fit needs at least 7 angles");
  std::array<std::array<double, 7>, 7> ata{};
  std::array<double, 7> atb{};
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const double th = angles[i] * kDeg;
    std::array<double, 7> row{1.0};
    for (int k = 1; k <= 3; ++k) {
      row[2 * k - 1] = std::cos(2.0 * k * th);
      row[2 * k] = std::sin(2.0 * k * th);
    }
    for (int r = 0; r < 7; ++r) {
      atb[r] += row[r] * counts[i];
      for (int c = 0; c < 7; ++c) ata[r][c] += row[r] * row[c];
    }
  }
  FringeFit fit;
  fit.coeffs = detail::solve(ata, atb);

  // Extrema on a 0.01 degree grid: maxima near 0 and 90, minima near 45 and 135.
  // Coarse grid, then golden-section polish around the best grid point.
  auto extreme = [&](double lo, double hi, bool want_max) {
    const double sign = want_max ? -1.0 : 1.0;
    auto f = [&](double a) { return sign * fit.eval(a); };
    const int n = static_cast<int>(std::lround((hi - lo) / 0.01));
    double best_a = lo, best = f(lo);
    for (int i = 1; i <= n; ++i) {
      const double a = lo + (hi - lo) * i / n;
      if (const double v = f(a); v < best) best = v, best_a = a;
    }
    double a = best_a - 0.01, b = best_a + 0.01;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - g * (b - a), x2 = a + g * (b - a), f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 60; ++it) {
      if (f1 < f2) {
        b = x2, x2 = x1, f2 = f1, x1 = b - g * (b - a), f1 = f(x1);
      } else {
        a = x1, x1 = x2, f1 = f2, x2 = a + g * (b - a), f2 = f(x2);
      }
    }
    return sign * std::min({best, f1, f2});
  };
  const double m1 = extreme(-45.0, 45.0, true);
  const double m2 = extreme(45.0, 135.0, true);
  const double n1 = extreme(0.0, 90.0, false);
  const double n2 = extreme(90.0, 180.0, false);
  fit.c_max = 0.5 * (m1 + m2);
  double c_min = 0.5 * (n1 + n2);
  // round-off of an exact fit to a perfect fringe
  if (c_min < 1e-9 * fit.c_max) c_min = 0.0;
  fit.c_min = c_min;
  fit.peak_ratio = std::max(m1, m2) / std::max(std::min(m1, m2), 1e-300);
  fit.visibility = visibility_from_extrema(fit.c_max, fit.c_min);
  return fit;
}

// ---------------------------------------------------------------------------
// Stream serialization: CSV or little-endian binary records.

inline void write_events_csv(std::ostream& os, const PairEventStream& s) {
  os << "time_s,basis,outcome,error_flag\n";
  char buf[64];
  for (const auto& e : s.events) {
    std::snprintf(buf, sizeof buf, "%.15g", e.emission_time);
    os << buf << ',' << (e.idler_basis == Basis::HV ? "HV" : "AD") << ',' << int(e.idler_outcome) << ','
       << int(e.error_flag) << '\n';
  }
}

inline void write_beacons_csv(std::ostream& os, const PairEventStream& s) {
  os << "beacon_time_s\n";
  char buf[64];
  for (double t : s.beacon_times) {
    std::snprintf(buf, sizeof buf, "%.15g", t);
    os << buf << '\n';
  }
}

namespace detail {

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline bool get_f64(std::istream& is, double& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  std::memcpy(&v, &bits, sizeof v);
  return true;
}

}  // namespace detail

/// Binary record: f64 time, u8 basis (0 HV, 1 AD), u8 outcome, u8 error flag.
inline void write_events_binary(std::ostream& os, const PairEventStream& s) {
  for (const auto& e : s.events) {
    detail::put_f64(os, e.emission_time);
    const char rest[3] = {static_cast<char>(e.idler_basis), static_cast<char>(e.idler_outcome),
                          static_cast<char>(e.error_flag)};
    os.write(rest, 3);
  }
}

/// Reads records written by write_events_binary. Latent bits are rebuilt from
/// the outcome and `convention`.
inline std::vector<PairEvent> read_events_binary(std::istream& is,
                                                 StateConvention convention = StateConvention::PhiPlus) {
  std::vector<PairEvent> out;
  double t;
  while (detail::get_f64(is, t)) {
    char rest[3];
    if (!is.read(rest, 3)) throw Error(ErrorCode::Io, "photon_source", "truncated binary event record");
    PairEvent e;
    e.emission_time = t;
    e.idler_basis = rest[0] ? Basis::AD : Basis::HV;
    e.idler_outcome = rest[1] != 0;
    e.error_flag = rest[2] != 0;
    e.latent_bit = e.idler_outcome != anticorrelated(convention);
    out.push_back(e);
  }
  return out;
}

inline std::vector<PairEvent> read_events_csv(std::istream& is, StateConvention convention = StateConvention::PhiPlus) {
  std::vector<PairEvent> out;
  std::string line;
  if (!std::getline(is, line)) return out;  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string t, basis, outcome, flag;
    if (!std::getline(ss, t, ',') || !std::getline(ss, basis, ',') || !std::getline(ss, outcome, ',') ||
        !std::getline(ss, flag, ','))
      throw Error(ErrorCode::Io, "photon_source", "malformed event row '" + line + "'");
    PairEvent e;
    e.emission_time = std::stod(t);
    if (basis != "HV" && basis != "AD") throw Error(ErrorCode::Io, "photon_source", "unknown basis '" + basis + "'");
    e.idler_basis = basis == "AD" ? Basis::AD : Basis::HV;
    e.idler_outcome = outcome == "1";
    e.error_flag = flag == "1";
    e.latent_bit = e.idler_outcome != anticorrelated(convention);
    out.push_back(e);
  }
  return out;
}

}  // namespace qkdsim::source
