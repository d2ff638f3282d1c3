#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "qkdsim/core/error.hpp"
#include "qkdsim/core/random.hpp"
#include "qkdsim/core/vec.hpp"
#include "qkdsim/orbit/passes.hpp"
#include "qkdsim/pat/pat.hpp"

namespace qkdsim::pcs {

/// Maps an angle to the linear-polarization half turn (-90, 90].
inline double wrap_half_turn(double deg) {
  double r = std::fmod(deg, 180.0);
  if (r <= -90.0) r += 180.0;
  if (r > 90.0) r -= 180.0;
  return r;
}

struct OffsetSample {
  double time = 0.0;   // s
  double theta = 0.0;  // deg
};

/// Rotation of the satellite's polarization frame as seen at the ground.
struct FrameOffsetProfile {
  std::vector<OffsetSample> samples;

  /// Linear interpolation, clamped at the ends.
  double at(double t) const {
    if (samples.empty()) throw Error(ErrorCode::ProfileGap, "polarization_correction", "empty frame offset profile");
    if (t <= samples.front().time) return samples.front().theta;
    if (t >= samples.back().time) return samples.back().theta;
    auto it = std::upper_bound(samples.begin(), samples.end(), t,
                               [](double v, const OffsetSample& s) { return v < s.time; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    return a.theta + (t - a.time) / (b.time - a.time) * (b.theta - a.theta);
  }
};

/// Scripted profile taken as given. It must start at or before 0, reach
/// `duration`, have increasing times and no spacing wider than `max_spacing`.
inline FrameOffsetProfile scripted_profile(std::vector<OffsetSample> samples, double duration,
                                           double max_spacing = 10.0) {
  if (samples.empty() || samples.front().time > 0.0 || samples.back().time < duration)
    throw Error(ErrorCode::ProfileGap, "polarization_correction",
                "scripted profile does not cover [0, " + std::to_string(duration) + "] s");
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double gap = samples[i].time - samples[i - 1].time;
    if (!(gap > 0.0)) throw Error(ErrorCode::ProfileGap, "polarization_correction", "profile times must increase");
    if (gap > max_spacing)
      throw Error(ErrorCode::ProfileGap, "polarization_correction",
                  "hole of " + std::to_string(gap) + " s at t=" + std::to_string(samples[i - 1].time));
  }
  return {std::move(samples)};
}

/// Geometric construction for a nadir-pointing satellite whose emitted
/// polarization lies along its ground-track velocity, turned by `yaw_deg`
/// about nadir. The ground reference is local north projected onto the plane
/// transverse to the line of sight, which keeps the frame smooth through
/// zenith. Angles are unwrapped so the profile is continuous.
inline FrameOffsetProfile geometric_profile(const orbit::PassGeometry& geom, double yaw_deg = 0.0) {
  const orbit::EnuBasis enu = orbit::site_enu_basis(geom.site);
  const Vec3 site = orbit::site_ecef_km(geom.site);
  FrameOffsetProfile p;
  double prev = 0.0;
  for (std::size_t i = 0; i < geom.samples.size(); ++i) {
    const auto& s = geom.samples[i];
    const Vec3 los = (s.sat_ecef_km - site).unit();  // ground to satellite
    const Vec3 nadir = (-1.0 * s.sat_ecef_km).unit();
    Vec3 along = s.sat_vel_axes - dot(s.sat_vel_axes, nadir) * nadir;
    along = along.unit();
    const Vec3 cross_track = cross(nadir, along);
    const double y = yaw_deg * kDeg;
    const Vec3 pol = std::cos(y) * along + std::sin(y) * cross_track;

    Vec3 ref = enu.north - dot(enu.north, los) * los;
    if (ref.norm() < 1e-9) ref = enu.east - dot(enu.east, los) * los;
    ref = ref.unit();
    const Vec3 ref2 = cross(los, ref);
    const Vec3 pt = pol - dot(pol, los) * los;
    double theta = std::atan2(dot(pt, ref2), dot(pt, ref)) / kDeg;
    theta = wrap_half_turn(theta);
    if (i > 0) theta += 180.0 * std::round((prev - theta) / 180.0);
    prev = theta;
    p.samples.push_back({s.t, theta});
  }
  return p;
}

struct PolarimeterConfig {
  std::vector<double> hwp_settings{0.0, 22.5};  // deg
  double detector_pair_efficiency_ratio = 1.0;  // reflect / transmit
  double integration = 1.0;                     // s per setting
  double count_rate = 1e5;                      // beacon counts/s into the polarimeter

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, "polarization_correction", what); };
    if (hwp_settings.size() < 2) bad("need at least two half-wave plate settings");
    auto sorted = hwp_settings;
    // h and h + 45 deg only flip the sign of the fringe, so they carry the same information
    for (double& h : sorted) h = std::fmod(std::fmod(h, 45.0) + 45.0, 45.0);
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end(), [](double a, double b) { return std::fabs(a - b) < 1e-9; }) !=
            sorted.end() ||
        std::fabs(sorted.front() + 45.0 - sorted.back()) < 1e-9)
      bad("half-wave plate settings must be distinct modulo 45 deg");
    if (!(detector_pair_efficiency_ratio > 0.0)) bad("detector_pair_efficiency_ratio must be positive");
    if (!(integration > 0.0)) bad("polarimeter integration must be positive");
    if (!(count_rate >= 0.0)) bad("polarimeter count_rate must be non-negative");
  }

  friend bool operator==(const PolarimeterConfig&, const PolarimeterConfig&) = default;
};

struct PolarimeterReading {
  double hwp = 0.0;
  std::uint64_t transmit = 0;
  std::uint64_t reflect = 0;
};

/// Malus-law split behind a half-wave plate at `hwp` and a polarizing beam
/// splitter. The reflect arm is scaled by the detector efficiency ratio.
inline PolarimeterReading polarimeter_counts(double theta_true, double hwp, const PolarimeterConfig& c, Rng& rng) {
  const double n = c.count_rate * c.integration;
  const double ct = std::cos((theta_true - 2.0 * hwp) * kDeg);
  const double ft = ct * ct;
  return {hwp, rng.poisson(n * ft), rng.poisson(n * (1.0 - ft) * c.detector_pair_efficiency_ratio)};
}

inline PolarimeterReading polarimeter_counts(double theta_true, double hwp, const PolarimeterConfig& c,
                                             std::uint64_t seed) {
  Rng rng(seed);
  return polarimeter_counts(theta_true, hwp, c, rng);
}

/// Visibility of one setting after removing the detector imbalance.
inline double setting_visibility(const PolarimeterReading& r, double efficiency_ratio = 1.0) {
  const double t = static_cast<double>(r.transmit);
  const double rf = static_cast<double>(r.reflect) / efficiency_ratio;
  if (t + rf <= 0.0)
    throw Error(ErrorCode::ZeroCounts, "polarization_correction",
                "no counts at half-wave plate setting " + std::to_string(r.hwp));
  return (t - rf) / (t + rf);
}

/// Least-squares fit of v_i = cos 2theta cos 4h_i + sin 2theta sin 4h_i over
/// the settings; returns theta in (-90, 90].
inline double estimate_offset(const std::vector<PolarimeterReading>& readings, double efficiency_ratio = 1.0) {
  if (readings.size() < 2)
    throw Error(ErrorCode::InvalidArgument, "polarization_correction", "need readings at two or more settings");
  double scc = 0, sss = 0, scs = 0, bc = 0, bs = 0;
  for (const auto& r : readings) {
    if (r.transmit + r.reflect < 100)
      warn("LowCounts", "only " + std::to_string(r.transmit + r.reflect) + " counts at setting " + std::to_string(r.hwp));
    const double v = setting_visibility(r, efficiency_ratio);
    const double c = std::cos(4.0 * r.hwp * kDeg), s = std::sin(4.0 * r.hwp * kDeg);
    scc += c * c;
    sss += s * s;
    scs += c * s;
    bc += c * v;
    bs += s * v;
  }
  const double det = scc * sss - scs * scs;
  if (std::fabs(det) < 1e-12)
    throw Error(ErrorCode::InvalidArgument, "polarization_correction", "half-wave plate settings are degenerate");
  const double cos2 = (sss * bc - scs * bs) / det;
  const double sin2 = (scc * bs - scs * bc) / det;
  return wrap_half_turn(0.5 * std::atan2(sin2, cos2) / kDeg);
}

inline double qber_from_residual(double delta_deg) {
  const double s = std::sin(delta_deg * kDeg);
  return s * s;
}

/// Rotation the ground receiver applies to its analysis angles.
struct ReceiverFrame {
  double rotation = 0.0;  // deg

  friend bool operator==(const ReceiverFrame&, const ReceiverFrame&) = default;
};

inline ReceiverFrame apply_correction(ReceiverFrame frame, double theta_hat) { return {frame.rotation + theta_hat}; }

inline double residual_misalignment(double theta_true, const ReceiverFrame& frame) {
  return wrap_half_turn(theta_true - frame.rotation);
}

struct PcsConfig {
  PolarimeterConfig polarimeter;
  double update_interval = 1.0;     // s
  double uncorrected_offset = 0.0;  // deg, rotation the polarimeter cannot see
  bool geometric = true;            // false: scripted profile
  double yaw = 0.0;                 // deg, satellite body yaw for geometric mode
  std::vector<OffsetSample> script;

  void validate() const {
    polarimeter.validate();
    if (!(update_interval > 0.0))
      throw Error(ErrorCode::InvalidConfig, "polarization_correction", "update_interval must be positive");
  }

  friend bool operator==(const PcsConfig& a, const PcsConfig& b) {
    if (a.script.size() != b.script.size()) return false;
    for (std::size_t i = 0; i < a.script.size(); ++i)
      if (a.script[i].time != b.script[i].time || a.script[i].theta != b.script[i].theta) return false;
    return a.polarimeter == b.polarimeter && a.update_interval == b.update_interval &&
           a.uncorrected_offset == b.uncorrected_offset && a.geometric == b.geometric && a.yaw == b.yaw;
  }
};

struct PcsRecord {
  double time = 0.0;
  double theta_true = 0.0;
  double theta_hat = 0.0;  // correction in force after this update
  double residual = 0.0;   // misalignment seen by the quantum receiver
  double v0 = 0.0;         // visibilities at the first two settings
  double v1 = 0.0;
  bool updated = false;
};

struct PcsRun {
  std::vector<PcsRecord> records;
  FrameOffsetProfile profile;
  double uncorrected_offset = 0.0;

  /// Correction in force at t (0 before the first update).
  double correction_at(double t) const {
    auto it = std::upper_bound(records.begin(), records.end(), t,
                               [](double v, const PcsRecord& r) { return v < r.time; });
    return it == records.begin() ? 0.0 : (it - 1)->theta_hat;
  }

  double residual_at(double t) const {
    return wrap_half_turn(profile.at(t) + uncorrected_offset - correction_at(t));
  }
};

/// Periodic polarimeter updates over the pass. When a PAT run is given, a new
/// estimate is only taken while the tracker holds fine lock (the beacon is
/// then on the polarimeter); otherwise the last correction stays in force.
inline PcsRun run_pcs(const FrameOffsetProfile& profile, double duration, const PcsConfig& c, std::uint64_t seed,
                      const pat::PatRun* pat_run = nullptr) {
  c.validate();
  Rng rng(sub_seed(seed, "polarization_correction"));
  PcsRun run{{}, profile, c.uncorrected_offset};
  double hat = 0.0;
  const auto n = static_cast<long>(std::floor(duration / c.update_interval + 1e-9));
  for (long i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) * c.update_interval;
    const double truth = profile.at(t);
    PcsRecord r{t, truth, hat, 0.0, 0.0, 0.0, false};
    const bool active = pat_run == nullptr || pat_run->at(t).phase == pat::PatPhase::ClosedLoopFine;
    if (active) {
      std::vector<PolarimeterReading> readings;
      for (double h : c.polarimeter.hwp_settings) readings.push_back(polarimeter_counts(truth, h, c.polarimeter, rng));
      const double ratio = c.polarimeter.detector_pair_efficiency_ratio;
      const bool lit = std::all_of(readings.begin(), readings.end(),
                                   [](const PolarimeterReading& rd) { return rd.transmit + rd.reflect > 0; });
      if (lit) {
        hat = estimate_offset(readings, ratio);
        // keep the applied correction on the same branch as the previous one
        hat += 180.0 * std::round((r.theta_hat - hat) / 180.0);
        r.theta_hat = hat;
        r.v0 = setting_visibility(readings[0], ratio);
        r.v1 = setting_visibility(readings[1], ratio);
        r.updated = true;
      }
    }
    r.residual = wrap_half_turn(truth + c.uncorrected_offset - r.theta_hat);
    run.records.push_back(r);
  }
  return run;
}

inline void write_pcs_csv(std::ostream& os, const PcsRun& run) {
  os << "time_s,theta_true_deg,theta_hat_deg,residual_deg,v0,v22_5\n";
  char buf[192];
  for (const auto& r : run.records) {
    std::snprintf(buf, sizeof buf, "%.3f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.time, r.theta_true, r.theta_hat, r.residual,
                  r.v0, r.v1);
    os << buf;
  }
}

}  // namespace qkdsim::pcs
