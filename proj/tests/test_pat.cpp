#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "qkdsim/orbit/passes.hpp"
#include "qkdsim/pat/pat.hpp"

using namespace qkdsim;
using namespace qkdsim::pat;

namespace {

const orbit::PassGeometry& zenith_pass() {
  static const orbit::PassGeometry g = [] {
    const orbit::GroundSite site{};
    const auto c = UtcTime::from_calendar(2026, 3, 20, 14, 0, 0.0);
    const auto tle = orbit::make_circular_tle(550.0, 97.5, site, c);
    const auto p = orbit::predict_passes(tle, site, c.plus_seconds(-1800.0), c.plus_seconds(1800.0), 20.0).at(0);
    return orbit::sample_pass(orbit::Sgp4(tle), site, p.aos, p.los, 1.0);
  }();
  return g;
}

std::vector<PatPhase> phase_trace(const PatRun& r) {
  std::vector<PatPhase> out;
  for (const auto& s : r.records)
    if (out.empty() || out.back() != s.phase) out.push_back(s.phase);
  return out;
}

double fine_within(const PatRun& r, double limit) {
  double n = 0, ok = 0;
  for (const auto& s : r.records)
    if (s.phase == PatPhase::ClosedLoopFine) {
      n += 1;
      ok += s.residual_norm() <= limit;
    }
  return n > 0 ? ok / n : 0.0;
}

}  // namespace

TEST(Gate, Threshold) {
  EXPECT_TRUE(elevation_gate(20.0, 20.0));
  EXPECT_FALSE(elevation_gate(19.999, 20.0));
  EXPECT_TRUE(elevation_gate(89.0, 20.0));
}

TEST(Centroid, NoiselessReturnsTruth) {
  CameraModel cam{120.0, 0.0, 1000.0, 5.0};
  const auto m = centroid_offset(cam, {10.0, -4.0}, 3u);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->x, 10.0);
  EXPECT_EQ(m->y, -4.0);
}

TEST(Centroid, OutsideFieldOrFaint) {
  CameraModel cam{120.0, 0.5, 1000.0, 5.0};
  Rng rng(1);
  EXPECT_FALSE(centroid_offset(cam, {61.0, 0.0}, rng));
  EXPECT_TRUE(centroid_offset(cam, {59.0, 0.0}, rng));
  EXPECT_FALSE(centroid_offset(cam, {0.0, 0.0}, rng, 4.0));
  EXPECT_TRUE(centroid_offset(cam, {0.0, 0.0}, rng, 5.0));
}

TEST(Centroid, NoiseHasConfiguredSpread) {
  CameraModel cam{3600.0, 5.0, 10.0, 5.0};
  Rng rng(2);
  double sx = 0, sxx = 0, syy = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto m = *centroid_offset(cam, {0.0, 0.0}, rng);
    sx += m.x;
    sxx += m.x * m.x;
    syy += m.y * m.y;
  }
  EXPECT_NEAR(sx / n, 0.0, 5.0 * 5.0 / std::sqrt(n));
  EXPECT_GT(std::sqrt(sxx / n) / 5.0, 0.97);
  EXPECT_LT(std::sqrt(sxx / n) / 5.0, 1.03);
  EXPECT_GT(std::sqrt(syy / n) / 5.0, 0.97);
  EXPECT_LT(std::sqrt(syy / n) / 5.0, 1.03);
}

TEST(Mount, RateLimitAndLatency) {
  MountModel m;
  m.jitter_rms = 0.0;
  m.max_slew_rate = 0.01;  // 36 arcsec/s
  m.command_latency = 0.05;
  Rng rng(1);
  const Vec2 small = mount_step(m, {0.6, 0.8}, 0.1, rng);
  EXPECT_DOUBLE_EQ(small.x, 0.6);
  EXPECT_DOUBLE_EQ(small.y, 0.8);
  const Vec2 big = mount_step(m, {300.0, 400.0}, 0.1, rng);
  EXPECT_NEAR(big.norm(), 36.0 * 0.05, 1e-12);
  EXPECT_NEAR(big.x / big.y, 0.75, 1e-12);
  EXPECT_EQ(mount_step(m, {300.0, 400.0}, 0.04, rng).norm(), 0.0);
}

TEST(Mount, JitterSpread) {
  MountModel m;
  m.jitter_rms = 2.0;
  Rng rng(5);
  double s = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = mount_step(m, {}, 0.1, rng).x;
    s += x * x;
  }
  EXPECT_NEAR(std::sqrt(s / n), 2.0, 0.06);
}

TEST(Fsm, FirstOrderConvergence) {
  FsmModel f{600.0, 300.0, 1.0};
  const double dt = 1e-4;
  const double keep = std::exp(-kTwoPi * 600.0 * dt);
  // constant disturbance d, mirror follows: residual shrinks geometrically
  const Vec2 d{50.0, -20.0};
  Vec2 cmd{};
  double prev = d.norm();
  for (int i = 0; i < 20; ++i) {
    cmd = fsm_step(f, cmd, d - cmd, dt);
    const double r = (d - cmd).norm();
    EXPECT_NEAR(r / prev, keep, 1e-9);
    prev = r;
  }
}

TEST(Fsm, WideBandwidthCorrectsInOneStep) {
  FsmModel f{1e6, 300.0, 1.0};
  const Vec2 c = fsm_step(f, {}, {12.0, 7.0}, 1e-3);
  EXPECT_NEAR(c.x, 12.0, 1e-9);
  EXPECT_NEAR(c.y, 7.0, 1e-9);
}

TEST(Fsm, Saturates) {
  FsmModel f{1e6, 300.0, 1.0};
  const Vec2 c = fsm_step(f, {}, {600.0, 800.0}, 1e-3);
  EXPECT_NEAR(c.norm(), 300.0, 1e-9);
  EXPECT_NEAR(c.x / c.y, 0.75, 1e-12);
}

TEST(Transition, NominalSequence) {
  PatConfig c;
  PatMeasurements m{45.0, false, false, 0};
  PatPhase p = PatPhase::Idle;
  p = pat_transition(p, m, c);
  EXPECT_EQ(p, PatPhase::UplinkBeaconPointing);
  p = pat_transition(p, m, c);
  EXPECT_EQ(p, PatPhase::OpenLoopCoarse);
  EXPECT_EQ(pat_transition(p, m, c), PatPhase::OpenLoopCoarse);
  m.wfov_detected = true;
  p = pat_transition(p, m, c);
  EXPECT_EQ(p, PatPhase::ClosedLoopCoarse);
  EXPECT_EQ(pat_transition(p, m, c), PatPhase::ClosedLoopCoarse);
  m.nfov_detected = true;
  p = pat_transition(p, m, c);
  EXPECT_EQ(p, PatPhase::ClosedLoopFine);
  m.elevation = 19.0;
  EXPECT_EQ(pat_transition(p, m, c), PatPhase::Idle);
}

TEST(Transition, NeverDetectedStaysOpenLoop) {
  PatConfig c;
  PatPhase p = PatPhase::OpenLoopCoarse;
  for (int i = 0; i < 1000; ++i) p = pat_transition(p, {60.0, false, false, 0}, c);
  EXPECT_EQ(p, PatPhase::OpenLoopCoarse);
}

TEST(Transition, DropoutsLoseAndRecover) {
  PatConfig c;
  PatPhase p = PatPhase::ClosedLoopFine;
  for (int miss = 1; miss < c.dropout_limit; ++miss) {
    p = pat_transition(p, {60.0, true, false, miss}, c);
    EXPECT_EQ(p, PatPhase::ClosedLoopFine);
  }
  p = pat_transition(p, {60.0, true, false, c.dropout_limit}, c);
  EXPECT_EQ(p, PatPhase::SignalLost);
  EXPECT_EQ(pat_transition(p, {60.0, true, false, 0}, c), PatPhase::ClosedLoopCoarse);
}

TEST(Config, Validation) {
  PatConfig c;
  EXPECT_NO_THROW(c.validate(15.0));
  EXPECT_THROW(c.validate(200.0), Error);  // QFOV wider than NFOV
  c.fsm.loop_gain = 1.5;
  EXPECT_THROW(c.validate(15.0), Error);
  c = {};
  c.nfov.frame_rate = 1.0;
  EXPECT_THROW(c.validate(15.0), Error);
}

TEST(RunPat, NominalPhaseOrder) {
  const auto r = run_pat(zenith_pass(), PatConfig{}, 1);
  const std::vector<PatPhase> expect{PatPhase::Idle, PatPhase::UplinkBeaconPointing, PatPhase::OpenLoopCoarse,
                                     PatPhase::ClosedLoopCoarse, PatPhase::ClosedLoopFine, PatPhase::Idle};
  EXPECT_EQ(phase_trace(r), expect);
  for (const auto& s : r.records) {
    const double el = zenith_pass().at(s.time).elevation;
    if (s.phase != PatPhase::Idle) {
      ASSERT_GE(el, 20.0 - 0.2) << s.time;
    }
  }
}

TEST(RunPat, Deterministic) {
  const auto a = run_pat(zenith_pass(), PatConfig{}, 42), b = run_pat(zenith_pass(), PatConfig{}, 42);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    ASSERT_EQ(a.records[i].time, b.records[i].time);
    ASSERT_EQ(a.records[i].residual.x, b.records[i].residual.x);
    ASSERT_EQ(a.records[i].phase, b.records[i].phase);
  }
  std::ostringstream sa, sb;
  write_pat_csv(sa, a, 100);
  write_pat_csv(sb, b, 100);
  EXPECT_EQ(sa.str(), sb.str());
  const auto c = run_pat(zenith_pass(), PatConfig{}, 43);
  EXPECT_NE(c.at(300.0).residual.x, a.at(300.0).residual.x);
}

TEST(RunPat, DefaultBudgetHoldsQuantumField) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto r = run_pat(zenith_pass(), PatConfig{}, seed);
    EXPECT_GE(fine_within(r, 7.5), 0.8) << seed;
    EXPECT_GT(r.lock_fraction(), 0.9) << seed;
  }
}

TEST(RunPat, NoiselessResidualVanishes) {
  PatConfig c;
  c.mount.jitter_rms = 0.0;
  c.wfov.centroid_noise_rms = 0.0;
  c.nfov.centroid_noise_rms = 0.0;
  const auto r = run_pat(zenith_pass(), c, 1);
  double tail = 0;
  for (const auto& s : r.records)
    if (s.phase == PatPhase::ClosedLoopFine) tail = s.residual_norm();
  EXPECT_LT(tail, 0.1);
  // shrinks after acquisition: the last fine sample beats the first
  const auto first = std::find_if(r.records.begin(), r.records.end(),
                                  [](const PatState& s) { return s.phase == PatPhase::ClosedLoopFine; });
  ASSERT_NE(first, r.records.end());
  EXPECT_LT(tail, first->residual_norm());
}

TEST(RunPat, NarrowMirrorRangeStillBounded) {
  PatConfig c;
  c.fsm.range = 1.0;
  const auto r = run_pat(zenith_pass(), c, 1);
  for (const auto& s : r.records) ASSERT_LE(s.fsm_offset_cmd.norm(), 1.0 + 1e-12);
}

TEST(RunPat, BlindNarrowCameraNeverReachesFine) {
  PatConfig c;
  c.nfov.detection_snr_threshold = 1e9;
  const auto r = run_pat(zenith_pass(), c, 1);
  for (const auto& s : r.records) ASSERT_NE(s.phase, PatPhase::ClosedLoopFine);
  EXPECT_EQ(r.lock_fraction(), 0.0);
}

TEST(RunPat, FineOnlyInsideNarrowField) {
  const auto r = run_pat(zenith_pass(), PatConfig{}, 9);
  // the NFOV hands over only once the mount has pulled the spot into its field
  const auto first = std::find_if(r.records.begin(), r.records.end(),
                                  [](const PatState& s) { return s.phase == PatPhase::ClosedLoopFine; });
  ASSERT_NE(first, r.records.end());
  EXPECT_LE(first->true_error.norm(), PatConfig{}.nfov.fov / 2.0);
}

TEST(RunPat, RecordsAreTimeOrdered) {
  const auto r = run_pat(zenith_pass(), PatConfig{}, 4);
  for (std::size_t i = 1; i < r.records.size(); ++i) ASSERT_GT(r.records[i].time, r.records[i - 1].time);
  EXPECT_EQ(&r.at(-5.0), &r.records.front());
  EXPECT_EQ(&r.at(1e9), &r.records.back());
}
