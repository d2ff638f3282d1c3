#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support.hpp"

using namespace qkdsim;
using qkdsim::testing::quiet_scenario;
using qkdsim::testing::run_on_zenith;
using qkdsim::testing::zenith_fixture;

namespace {

// frame that never turns, so the polarimeter has nothing to chase
sim::Scenario fixed_frame(sim::Scenario s, double uncorrected = 0.0) {
  s.pcs.geometric = false;
  s.pcs.script.clear();
  const double end = zenith_fixture().geom.duration();
  for (double t = 0.0; t < end + 1.0; t += 1.0) s.pcs.script.push_back({t, 0.0});
  s.pcs.uncorrected_offset = uncorrected;
  return s;
}

double sigma(double q, std::size_t n) { return std::sqrt(q * (1.0 - q) / static_cast<double>(n)); }

}  // namespace

TEST(Pipeline, CountsAreConserved) {
  const auto r = run_on_zenith(quiet_scenario());
  const auto& k = r.report;
  EXPECT_EQ(k.sifted_bits + k.discarded, k.coincidences_total);
  EXPECT_LE(k.genuine_coincidences, k.coincidences_total);
  std::size_t co = 0, pairs = 0;
  for (const auto& s : r.slices) {
    co += s.coincidences;
    pairs += s.pairs;
    EXPECT_LE(s.coincidences, std::min(s.ground_tags, s.onboard_tags));
  }
  EXPECT_EQ(co, k.coincidences_total);
  EXPECT_EQ(k.slices, r.slices.size());
  const double n = static_cast<double>(k.coincidences_total);
  EXPECT_NEAR(static_cast<double>(k.sifted_bits) / n, 0.5, 5.0 * std::sqrt(0.25 / n));
  EXPECT_GT(pairs, 0u);
}

TEST(Pipeline, SlicesOnlyUnderFineLock) {
  const auto r = run_on_zenith(quiet_scenario());
  ASSERT_FALSE(r.slices.empty());
  for (const auto& s : r.slices) {
    EXPECT_EQ(r.pat.at(s.time).phase, pat::PatPhase::ClosedLoopFine) << s.time;
    EXPECT_GE(s.elevation, 20.0 - 0.5);
  }
}

TEST(Pipeline, ClockSyncRecoversTruth) {
  const auto r = run_on_zenith(quiet_scenario());
  ASSERT_TRUE(r.report.clock);
  EXPECT_NEAR(r.report.clock->clock.offset, r.report.clock_truth.offset, 1e-9);
  EXPECT_NEAR(r.report.clock->clock.drift, r.report.clock_truth.drift, 1e-9);
}

TEST(Pipeline, DarkLinkGivesEmptyReport) {
  auto s = quiet_scenario();
  s.link.tx_divergence = 1.0;  // beam hundreds of km wide: nothing reaches the aperture
  const auto r = run_on_zenith(s);
  const auto& k = r.report;
  EXPECT_EQ(k.coincidences_total, 0u);
  EXPECT_EQ(k.sifted_bits, 0u);
  EXPECT_FALSE(k.qber_estimate);
  EXPECT_EQ(k.secret_bits, 0u);
  EXPECT_EQ(k.secret_fraction, 0.0);
  const auto j = sim::report_json(k);
  EXPECT_TRUE(j.at("qber_estimate").is_null());
  EXPECT_EQ(j.at("secret_bits").get<std::uint64_t>(), 0u);
  EXPECT_GT(j.at("loss_budget_db").at("geometric").get<double>(), 100.0);
}

TEST(Pipeline, IdealChannelShowsSourceQber) {
  const auto r = run_on_zenith(fixed_frame(quiet_scenario()));
  ASSERT_TRUE(r.report.qber_true);
  // what remains beyond the source: accidental pairs, r * window / 2
  const double expect = 0.01 + 0.5 * 2e5 * 1e-9;
  EXPECT_NEAR(*r.report.qber_true, expect, 4.0 * sigma(expect, r.report.sifted_bits));
  EXPECT_NEAR(*r.report.qber_estimate, expect, 4.0 * sigma(expect, r.report.qber_sample_size));
}

// Errors from independent causes combine as q = a(1-b) + b(1-a).
TEST(Pipeline, QberContributionsCombine) {
  const double delta = 10.0;
  const auto r = run_on_zenith(fixed_frame(quiet_scenario(), delta));
  const double a = 0.01, b = std::pow(std::sin(delta * kDeg), 2);
  const double expect = a * (1 - b) + b * (1 - a) + 0.5 * 2e5 * 1e-9;
  EXPECT_NEAR(*r.report.qber_true, expect, 4.0 * sigma(expect, r.report.sifted_bits));
}

TEST(Pipeline, UncorrectedOffsetRaisesQber) {
  const auto base = run_on_zenith(fixed_frame(quiet_scenario()));
  const auto off = run_on_zenith(fixed_frame(quiet_scenario(), 5.74));
  const double rise = *off.report.qber_true - *base.report.qber_true;
  EXPECT_NEAR(rise, 0.0098, 0.001);
  EXPECT_NEAR(off.report.mean_polarization_qber, 0.01, 2e-4);
}

TEST(Pipeline, BackgroundOnlyAddsErrors) {
  auto s = quiet_scenario();
  s.link.optics_efficiency = 0.1;
  s.simulation.slice_interval = 5.0;
  double prev_q = -1.0, prev_acc = -1.0;
  for (double bg : {0.0, 1e5, 1e6}) {
    s.link.sky_background_rate_zenith = bg;
    const auto r = run_on_zenith(s);
    ASSERT_TRUE(r.report.qber_true);
    EXPECT_GT(*r.report.qber_true, prev_q) << bg;
    EXPECT_GT(r.report.accidental_fraction, prev_acc) << bg;
    prev_q = *r.report.qber_true;
    prev_acc = r.report.accidental_fraction;
  }
}

TEST(Pipeline, DetectedPairsFollowEfficiencyChain) {
  auto s = quiet_scenario();
  s.link = channel::LinkConfig{};  // realistic losses
  s.link.tx_divergence = 5e-6;
  s.link.sky_background_rate_zenith = 0.0;
  s.source.brightness = 1e6;
  s.detectors.ground.efficiency = 0.6;
  s.detectors.onboard.efficiency = 0.7;
  const auto r = run_on_zenith(s);
  double mean = 0, var = 0;
  for (const auto& sl : r.slices) {
    const double p = s.source.downlink_fraction * sl.transmittance * 0.6 * 0.7;
    mean += static_cast<double>(sl.pairs) * p;
    var += static_cast<double>(sl.pairs) * p * (1 - p);
  }
  ASSERT_GT(mean, 3000.0);
  EXPECT_NEAR(static_cast<double>(r.report.genuine_coincidences), mean, 3.0 * std::sqrt(var));
}

TEST(Pipeline, Deterministic) {
  const auto a = run_on_zenith(quiet_scenario(5)), b = run_on_zenith(quiet_scenario(5));
  EXPECT_EQ(sim::report_json(a.report).dump(), sim::report_json(b.report).dump());
  const auto c = run_on_zenith(quiet_scenario(6));
  EXPECT_NE(sim::report_json(a.report).dump(), sim::report_json(c.report).dump());
}

TEST(Pipeline, ExtrapolationScalesByDutyCycle) {
  const auto r = run_on_zenith(quiet_scenario());
  const auto& k = r.report;
  EXPECT_DOUBLE_EQ(k.extrapolated_secret_bits, static_cast<double>(k.secret_bits) * k.slice_interval / k.slice_duration);
  EXPECT_EQ(k.secret_bits, protocol::secret_bits(k.sifted_bits, k.secret_fraction, k.sample_fraction));
}

TEST(Pipeline, OutputsWritten) {
  auto s = quiet_scenario();
  s.simulation.write_tags = true;
  s.simulation.slice_interval = 20.0;
  const auto r = run_on_zenith(s);
  const auto dir = std::filesystem::temp_directory_path() / "qkdsim_pipeline_test";
  std::filesystem::remove_all(dir);
  sim::write_outputs(r, s, dir, sim::TagFormat::Binary);
  for (const char* f : {"report.json", "pat.csv", "pcs.csv", "link.csv", "ground_tags.bin", "onboard_tags.bin"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::ifstream in(dir / "report.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("sifted_bits").get<std::size_t>(), r.report.sifted_bits);
  std::ifstream tags(dir / "ground_tags.bin", std::ios::binary);
  EXPECT_EQ(receiver::read_tags_binary(tags).size(), r.ground_tags.size());
  std::filesystem::remove_all(dir);
}
