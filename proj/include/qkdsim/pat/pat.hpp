#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "qkdsim/core/error.hpp"
#include "qkdsim/core/random.hpp"
#include "qkdsim/core/vec.hpp"
#include "qkdsim/orbit/passes.hpp"

namespace qkdsim::pat {

enum class PatPhase : int {
  Idle = 0,
  UplinkBeaconPointing = 1,
  OpenLoopCoarse = 2,
  ClosedLoopCoarse = 3,
  ClosedLoopFine = 4,
  SignalLost = 5,
};

inline constexpr std::string_view to_string(PatPhase p) {
  switch (p) {
    case PatPhase::Idle: return "Idle";
    case PatPhase::UplinkBeaconPointing: return "UplinkBeaconPointing";
    case PatPhase::OpenLoopCoarse: return "OpenLoopCoarse";
    case PatPhase::ClosedLoopCoarse: return "ClosedLoopCoarse";
    case PatPhase::ClosedLoopFine: return "ClosedLoopFine";
    case PatPhase::SignalLost: return "SignalLost";
  }
  return "Unknown";
}

struct MountModel {
  double max_slew_rate = 1.0;        // deg/s
  double command_latency = 0.05;     // s
  Vec2 systematic_bias{300.0, -200.0};  // arcsec, pointing-model residual
  double jitter_rms = 2.0;           // arcsec per axis per step
  double along_track_time_error = 0.2;  // s, element-set timing error

  friend bool operator==(const MountModel&, const MountModel&) = default;
};

struct CameraModel {
  double fov = 3600.0;               // arcsec, full field
  double centroid_noise_rms = 5.0;   // arcsec per axis
  double frame_rate = 10.0;          // Hz
  double detection_snr_threshold = 5.0;

  friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

struct FsmModel {
  double bandwidth = 600.0;  // Hz
  double range = 300.0;      // arcsec
  double loop_gain = 1.0;

  friend bool operator==(const FsmModel&, const FsmModel&) = default;
};

struct PatConfig {
  MountModel mount;
  CameraModel wfov{3600.0, 5.0, 10.0, 5.0};
  CameraModel nfov{120.0, 0.5, 1000.0, 5.0};
  FsmModel fsm;
  double threshold_elevation = 20.0;  // deg
  double coarse_gain = 0.6;
  int dropout_limit = 5;              // consecutive NFOV misses before SignalLost
  double beacon_snr = 50.0;           // downlink beacon SNR on both cameras
  int record_stride = 6;              // fine-phase substeps between records

  void validate(double qfov_arcsec) const {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, "pat_controller", what); };
    if (!(mount.max_slew_rate > 0.0)) bad("max_slew_rate must be positive");
    if (!(mount.command_latency >= 0.0)) bad("command_latency must be non-negative");
    if (!(mount.jitter_rms >= 0.0)) bad("jitter_rms must be non-negative");
    if (!(wfov.fov > nfov.fov && nfov.fov > qfov_arcsec)) bad("camera fields must satisfy WFOV > NFOV > QFOV");
    for (const auto* c : {&wfov, &nfov}) {
      if (!(c->frame_rate > 0.0)) bad("camera frame_rate must be positive");
      if (!(c->centroid_noise_rms >= 0.0)) bad("centroid_noise_rms must be non-negative");
    }
    if (!(nfov.frame_rate >= wfov.frame_rate)) bad("NFOV frame rate must not be below the WFOV rate");
    if (!(fsm.bandwidth > 0.0)) bad("fsm bandwidth must be positive");
    if (!(fsm.range > 0.0)) bad("fsm range must be positive");
    if (!(fsm.loop_gain > 0.0 && fsm.loop_gain <= 1.0)) bad("fsm loop_gain must lie in (0, 1]");
    if (!(coarse_gain > 0.0 && coarse_gain <= 1.0)) bad("coarse_gain must lie in (0, 1]");
    if (dropout_limit < 1) bad("dropout_limit must be at least 1");
    if (record_stride < 1) bad("record_stride must be at least 1");
  }

  friend bool operator==(const PatConfig&, const PatConfig&) = default;
};

inline bool elevation_gate(double elevation, double threshold) { return elevation >= threshold; }

/// Synthesized centroid of the beacon spot, or nothing when the spot is out
/// of the field or too faint.
inline std::optional<Vec2> centroid_offset(const CameraModel& cam, Vec2 true_error, Rng& rng,
                                           double snr = std::numeric_limits<double>::infinity()) {
  if (true_error.norm() > cam.fov / 2.0 || snr < cam.detection_snr_threshold) return std::nullopt;
  return Vec2{true_error.x + rng.normal(cam.centroid_noise_rms), true_error.y + rng.normal(cam.centroid_noise_rms)};
}

inline std::optional<Vec2> centroid_offset(const CameraModel& cam, Vec2 true_error, std::uint64_t seed) {
  Rng rng(seed);
  return centroid_offset(cam, true_error, rng);
}

/// Realized mount motion over one control period: the command is rate
/// limited over the part of the period left after the latency, plus jitter.
inline Vec2 mount_step(const MountModel& m, Vec2 commanded_offset, double dt, Rng& rng) {
  const double usable = std::max(0.0, dt - m.command_latency);
  const Vec2 move = clamp_norm(commanded_offset, m.max_slew_rate * 3600.0 * usable);
  return move + Vec2{rng.normal(m.jitter_rms), rng.normal(m.jitter_rms)};
}

/// First-order servo update, saturated at the mirror range.
inline Vec2 fsm_step(const FsmModel& f, Vec2 current_cmd, Vec2 measured_error, double dt) {
  const double a = f.loop_gain * (1.0 - std::exp(-kTwoPi * f.bandwidth * dt));
  return clamp_norm(current_cmd + a * measured_error, f.range);
}

struct PatMeasurements {
  double elevation = 0.0;
  bool wfov_detected = false;
  bool nfov_detected = false;
  int consecutive_nfov_misses = 0;
};

/// One transition of the acquisition sequence.
inline PatPhase pat_transition(PatPhase phase, const PatMeasurements& m, const PatConfig& c) {
  if (!elevation_gate(m.elevation, c.threshold_elevation)) return PatPhase::Idle;
  switch (phase) {
    case PatPhase::Idle: return PatPhase::UplinkBeaconPointing;
    case PatPhase::UplinkBeaconPointing: return PatPhase::OpenLoopCoarse;
    case PatPhase::OpenLoopCoarse: return m.wfov_detected ? PatPhase::ClosedLoopCoarse : phase;
    case PatPhase::ClosedLoopCoarse: return m.nfov_detected ? PatPhase::ClosedLoopFine : phase;
    case PatPhase::ClosedLoopFine:
      return m.consecutive_nfov_misses >= c.dropout_limit ? PatPhase::SignalLost : phase;
    case PatPhase::SignalLost: return PatPhase::ClosedLoopCoarse;
  }
  return phase;
}

/// Sky-plane axes follow the satellite's apparent motion: x along track,
/// y across track. All vectors are in arcsec.
struct PatState {
  double time = 0.0;
  PatPhase phase = PatPhase::Idle;
  Vec2 true_error;        // target direction minus mount boresight
  std::optional<Vec2> measured;  // last centroid fed to a loop at this step
  Vec2 mount_offset_cmd;  // accumulated mount correction
  Vec2 fsm_offset_cmd;
  Vec2 residual;          // true_error minus the FSM deflection

  double residual_norm() const { return residual.norm(); }
};

struct PatRun {
  std::vector<PatState> records;
  double gated_time = 0.0;  // s above the threshold elevation
  double fine_time = 0.0;   // s in ClosedLoopFine

  double lock_fraction() const { return gated_time > 0.0 ? fine_time / gated_time : 0.0; }

  /// Latest record at or before t (the first record if t precedes all).
  const PatState& at(double t) const {
    if (records.empty()) throw Error(ErrorCode::InvalidArgument, "pat_controller", "empty PAT run");
    auto it = std::upper_bound(records.begin(), records.end(), t,
                               [](double v, const PatState& s) { return v < s.time; });
    return it == records.begin() ? *it : *(it - 1);
  }
};

namespace detail {

struct Kinematics {
  double elevation, angular_rate;
};

inline Kinematics kinematics_at(const orbit::PassGeometry& g, double t) {
  const auto& s = g.samples;
  if (t <= s.front().t) return {s.front().topo.elevation, s.front().topo.angular_rate};
  if (t >= s.back().t) return {s.back().topo.elevation, s.back().topo.angular_rate};
  const auto i = static_cast<std::size_t>(std::min<double>(std::floor(t / g.step), s.size() - 2));
  const double w = (t - s[i].t) / (s[i + 1].t - s[i].t);
  return {s[i].topo.elevation + w * (s[i + 1].topo.elevation - s[i].topo.elevation),
          s[i].topo.angular_rate + w * (s[i + 1].topo.angular_rate - s[i].topo.angular_rate)};
}

}  // namespace detail

/// Time-stepped simulation of the acquisition and tracking sequence over a
/// pass. The coarse loop runs at the WFOV frame rate, the FSM at the NFOV
/// frame rate; during fine tracking the residual is resolved on a substep of
/// 1/(10 bandwidth) and recorded every `record_stride` substeps.
inline PatRun run_pat(const orbit::PassGeometry& geom, const PatConfig& c, std::uint64_t seed,
                      double qfov_arcsec = 15.0) {
  c.validate(qfov_arcsec);
  if (geom.samples.size() < 2) throw Error(ErrorCode::InvalidArgument, "pat_controller", "pass geometry too short");

  const double dt_n = 1.0 / c.nfov.frame_rate;
  const long per_frame = std::max(1L, static_cast<long>(std::ceil(dt_n * 10.0 * c.fsm.bandwidth - 1e-9)));
  const double dt_s = dt_n / static_cast<double>(per_frame);
  const long frames_per_coarse = std::max(1L, std::lround(c.nfov.frame_rate / c.wfov.frame_rate));
  const long per_coarse = frames_per_coarse * per_frame;
  const double dt_c = static_cast<double>(per_coarse) * dt_s;
  const double duration = geom.duration();
  const auto k_end = static_cast<long>(std::floor(duration / dt_s + 1e-9));

  Rng mount_rng(sub_seed(seed, "pat_controller", 0));
  Rng wfov_rng(sub_seed(seed, "pat_controller", 1));
  Rng nfov_rng(sub_seed(seed, "pat_controller", 2));

  PatRun run;
  PatPhase phase = PatPhase::Idle;
  Vec2 mount{}, fsm{};
  bool wfov_det = false, nfov_det = false;
  int misses = 0;

  auto disturbance = [&](double rate_deg_s) {
    return c.mount.systematic_bias + Vec2{c.mount.along_track_time_error * rate_deg_s * 3600.0, 0.0};
  };

  long k = 0;
  while (k <= k_end) {
    const double t = static_cast<double>(k) * dt_s;
    const auto kin = detail::kinematics_at(geom, t);
    const bool coarse_tick = k % per_coarse == 0;
    const bool frame_tick = k % per_frame == 0;
    std::optional<Vec2> meas;

    Vec2 err = disturbance(kin.angular_rate) - mount;

    if (coarse_tick) {
      const bool tracking = phase >= PatPhase::OpenLoopCoarse;
      std::optional<Vec2> w;
      if (tracking) w = centroid_offset(c.wfov, err, wfov_rng, c.beacon_snr);
      wfov_det = w.has_value();
      const PatPhase before = phase;
      phase = pat_transition(phase, {kin.elevation, wfov_det, nfov_det, misses}, c);
      if (phase == PatPhase::Idle) {
        mount = {};
        fsm = {};
        misses = 0;
        nfov_det = false;
      } else if (phase >= PatPhase::OpenLoopCoarse) {
        const bool closed = before >= PatPhase::ClosedLoopCoarse || phase >= PatPhase::ClosedLoopCoarse;
        const Vec2 cmd = closed && w ? c.coarse_gain * *w : Vec2{};
        mount += mount_step(c.mount, cmd, dt_c, mount_rng);
        meas = w;
      }
      err = disturbance(kin.angular_rate) - mount;
    }

    if (frame_tick && (phase == PatPhase::ClosedLoopCoarse || phase == PatPhase::ClosedLoopFine)) {
      const auto n = centroid_offset(c.nfov, err - fsm, nfov_rng, c.beacon_snr);
      nfov_det = n.has_value();
      if (phase == PatPhase::ClosedLoopCoarse) {
        phase = pat_transition(phase, {kin.elevation, wfov_det, nfov_det, misses}, c);
        misses = 0;
      } else {
        misses = nfov_det ? 0 : misses + 1;
        if (n) {
          fsm = fsm_step(c.fsm, fsm, *n, dt_n);
          meas = n;
        }
        phase = pat_transition(phase, {kin.elevation, wfov_det, nfov_det, misses}, c);
        if (phase == PatPhase::SignalLost) {
          fsm = {};
          misses = 0;
          nfov_det = false;
        }
      }
    }
    const Vec2 fsm_applied = phase == PatPhase::ClosedLoopFine ? fsm : Vec2{};

    const bool fine = phase == PatPhase::ClosedLoopFine;
    if (coarse_tick || (fine && k % c.record_stride == 0))
      run.records.push_back({t, phase, err, meas, mount, fsm_applied, err - fsm_applied});

    // advance: every substep while fine, every NFOV frame while waiting for
    // fine lock, otherwise straight to the next coarse tick
    long next;
    if (fine) next = k + 1;
    else if (phase == PatPhase::ClosedLoopCoarse || phase == PatPhase::SignalLost) next = (k / per_frame + 1) * per_frame;
    else next = (k / per_coarse + 1) * per_coarse;
    const double span = static_cast<double>(next - k) * dt_s;
    if (elevation_gate(kin.elevation, c.threshold_elevation)) run.gated_time += span;
    if (fine) run.fine_time += span;
    k = next;
  }
  return run;
}

inline void write_pat_csv(std::ostream& os, const PatRun& run, int stride = 1) {
  os << "time_s,phase,true_err_x_arcsec,true_err_y_arcsec,meas_err_x,meas_err_y,mount_cmd_x,mount_cmd_y,"
        "fsm_cmd_x,fsm_cmd_y,residual_arcsec\n";
  char buf[320];
  for (std::size_t i = 0; i < run.records.size(); i += static_cast<std::size_t>(std::max(1, stride))) {
    const auto& s = run.records[i];
    char mx[32] = "", my[32] = "";
    if (s.measured) {
      std::snprintf(mx, sizeof mx, "%.4f", s.measured->x);
      std::snprintf(my, sizeof my, "%.4f", s.measured->y);
    }
    std::snprintf(buf, sizeof buf, "%.6f,%s,%.4f,%.4f,%s,%s,%.4f,%.4f,%.4f,%.4f,%.4f\n", s.time,
                  std::string(to_string(s.phase)).c_str(), s.true_error.x, s.true_error.y, mx, my,
                  s.mount_offset_cmd.x, s.mount_offset_cmd.y, s.fsm_offset_cmd.x, s.fsm_offset_cmd.y,
                  s.residual_norm());
    os << buf;
  }
}

}  // namespace qkdsim::pat
