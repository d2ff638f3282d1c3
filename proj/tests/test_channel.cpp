#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qkdsim/channel/link.hpp"

using namespace qkdsim;
using namespace qkdsim::channel;

namespace {

// Independent 2-D quadrature of a displaced Gaussian (1/e^2 radius w) inside a
// centred disc of radius R: midpoint rule in polar coordinates.
double oracle_fraction(double d, double w, double R) {
  const int nr = 1500, nphi = 720;
  const double dr = R / nr, dphi = kTwoPi / nphi;
  double sum = 0.0;
  for (int i = 0; i < nr; ++i) {
    const double r = (i + 0.5) * dr;
    for (int j = 0; j < nphi; ++j) {
      const double phi = (j + 0.5) * dphi;
      const double x = r * std::cos(phi) - d, y = r * std::sin(phi);
      sum += std::exp(-2.0 * (x * x + y * y) / (w * w)) * r;
    }
  }
  return sum * dr * dphi * 2.0 / (kPi * w * w);
}

LinkState flat(double t, double transmittance, double background) {
  LinkState s;
  s.time = t;
  s.total_transmittance = transmittance;
  s.background_rate = background;
  return s;
}

source::PairEventStream stream_of(double rate, double duration, std::uint64_t seed) {
  source::SourceConfig c;
  c.brightness = rate;
  c.pump_power = 1.0;
  c.rng_seed = seed;
  return source::generate_pair_stream(c, duration);
}

}  // namespace

TEST(Geometric, FullCaptureAtShortRange) {
  LinkConfig c;
  EXPECT_EQ(geometric_loss(0.01, c), 0.0);
}

TEST(Geometric, InverseSquare) {
  LinkConfig c;
  EXPECT_NEAR(geometric_loss(1200.0, c) - geometric_loss(600.0, c), 20.0 * std::log10(2.0), 1e-12);
}

TEST(Geometric, HandEvaluation) {
  LinkConfig c;
  c.tx_divergence = 20e-6;
  c.rx_aperture_diameter = 0.6;
  c.rx_obstruction_fraction = 0.0;
  const double captured = std::pow(0.3 / 5.5, 2);
  EXPECT_NEAR(captured, 2.97e-3, 0.01e-3);
  EXPECT_NEAR(geometric_loss(550.0, c), -10.0 * std::log10(captured), 1e-9);
  EXPECT_NEAR(geometric_loss(550.0, c), 25.3, 0.05);
  c.rx_obstruction_fraction = 0.1;
  EXPECT_NEAR(geometric_loss(550.0, c), 25.3 - 10.0 * std::log10(0.9), 0.05);
}

TEST(Atmosphere, AirmassScaling) {
  LinkConfig c;
  c.zenith_atmospheric_loss = 3.0;
  EXPECT_DOUBLE_EQ(atmospheric_loss(90.0, c), 3.0);
  EXPECT_NEAR(atmospheric_loss(30.0, c), 6.0, 1e-12);
}

TEST(Atmosphere, LowElevationCapped) {
  LinkConfig c;
  clear_warnings();
  const double at5 = atmospheric_loss(5.0, c);
  EXPECT_FALSE(has_warning("LowElevation"));
  EXPECT_EQ(atmospheric_loss(3.0, c), at5);
  EXPECT_TRUE(has_warning("LowElevation"));
  clear_warnings();
  try {
    atmospheric_loss(0.0, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonpositiveElevation);
  }
}

TEST(Pointing, CenteredClosedForm) {
  LinkConfig c;
  EXPECT_NEAR(pointing_transmittance(0.0, c), 1.0 - std::exp(-2.0), 1e-6);
  EXPECT_NEAR(pointing_loss(0.0, c), 0.63, 0.005);
}

TEST(Pointing, MatchesTwoDimensionalQuadrature) {
  LinkConfig c;
  for (double frac : {1.0, 0.5, 2.0}) {
    c.spot_radius_fraction = frac;
    for (double d : {0.0, 1.0, 3.0, 5.0, 7.5, 10.0, 15.0}) {
      const double ref = oracle_fraction(d, frac * c.qfov / 2.0, c.qfov / 2.0);
      EXPECT_NEAR(pointing_transmittance(d, c), std::max(ref, kMinTransmittance), 1e-4) << frac << " " << d;
    }
  }
}

TEST(Pointing, FarOffAxisIsDark) {
  LinkConfig c;
  EXPECT_GT(pointing_loss(10.0 * c.qfov, c), 30.0);
}

TEST(Pointing, MonotoneAndContinuous) {
  LinkConfig c;
  double prev = pointing_transmittance(0.0, c);
  for (double d = 0.01; d <= 40.0; d += 0.01) {
    const double v = pointing_transmittance(d, c);
    ASSERT_LE(v, prev + 1e-12) << d;
    ASSERT_LT(prev - v, 0.01) << d;  // no jumps on a 0.01 arcsec grid
    prev = v;
  }
  EXPECT_THROW(pointing_loss(-1.0, c), Error);
}

TEST(Total, IdealIsUnity) {
  LinkConfig c;
  c.zenith_atmospheric_loss = 0.0;
  c.optics_efficiency = 1.0;
  c.spot_radius_fraction = 1e-3;
  const auto s = total_transmittance(0.01, 90.0, 0.0, c);
  EXPECT_NEAR(s.total_transmittance, 1.0, 1e-12);
}

TEST(Total, DecibelArithmetic) {
  LinkConfig c;
  c.rx_aperture_diameter = 0.6;
  c.rx_obstruction_fraction = 0.0;
  c.zenith_atmospheric_loss = 3.0;
  c.optics_efficiency = 0.5;
  const auto s = total_transmittance(550.0, 90.0, 0.0, c);
  EXPECT_NEAR(s.geometric_loss_db + s.atmospheric_loss_db + s.pointing_loss_db, 25.3 + 3.0 + 0.63, 0.06);
  EXPECT_NEAR(s.total_transmittance / (std::pow(10.0, -2.893) * 0.5), 1.0, 0.015);
  EXPECT_NEAR(s.background_rate, c.sky_background_rate_zenith, 1e-9);
}

TEST(Total, FuzzedInputsStayConsistent) {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    LinkConfig c;
    c.tx_divergence = 1e-6 + 1e-3 * U(g);
    c.rx_aperture_diameter = 0.05 + 2.0 * U(g);
    c.rx_obstruction_fraction = 0.9 * U(g);
    c.zenith_atmospheric_loss = 10.0 * U(g);
    c.optics_efficiency = 1e-3 + (1.0 - 1e-3) * U(g);
    c.qfov = 1.0 + 60.0 * U(g);
    c.spot_radius_fraction = 0.1 + 3.0 * U(g);
    const double range = 1e-3 + 3000.0 * U(g);
    const double el = 1e-3 + 89.999 * U(g);
    const double err = 100.0 * U(g) * U(g);
    const auto s = total_transmittance(range, el, err, c);
    ASSERT_GE(s.total_transmittance, 0.0);
    ASSERT_LE(s.total_transmittance, 1.0);
    const double sum_db = s.geometric_loss_db + s.atmospheric_loss_db + s.pointing_loss_db;
    const double rebuilt = std::pow(10.0, -sum_db / 10.0) * c.optics_efficiency;
    worst = std::max(worst, std::fabs(rebuilt - s.total_transmittance));
  }
  EXPECT_LT(worst, 1e-9);
  clear_warnings();
}

TEST(ApplyChannel, TransparentChannelIsIdentity) {
  const auto s = stream_of(1e6, 1e-2, 3);
  const auto out = apply_channel(s, {flat(0.0, 1.0, 0.0), flat(1.0, 1.0, 0.0)}, 9);
  ASSERT_EQ(out.survivors.size(), s.events.size());
  for (std::size_t i = 0; i < s.events.size(); ++i) ASSERT_EQ(out.survivors[i], i);
  EXPECT_TRUE(out.background_times.empty());
}

TEST(ApplyChannel, HalfTransmittanceBinomial) {
  const auto s = stream_of(1e6, 0.2, 4);
  const auto out = apply_channel(s, {flat(0.0, 0.5, 0.0), flat(0.2, 0.5, 0.0)}, 10);
  const double n = static_cast<double>(s.events.size());
  EXPECT_NEAR(static_cast<double>(out.survivors.size()), n / 2.0, 5.0 * std::sqrt(n / 4.0));
}

TEST(ApplyChannel, ThinningUnbiasedOverProfile) {
  const auto s = stream_of(1e6, 0.4, 5);
  // two segments at 0.2 and 0.7
  const auto out = apply_channel(s, {flat(0.0, 0.2, 0.0), flat(0.2, 0.7, 0.0), flat(0.4, 0.7, 0.0)}, 11);
  double n1 = 0, n2 = 0, k1 = 0, k2 = 0;
  for (const auto& e : s.events) (e.emission_time < 0.2 ? n1 : n2) += 1;
  for (auto i : out.survivors) (s.events[i].emission_time < 0.2 ? k1 : k2) += 1;
  EXPECT_NEAR(k1 / n1, 0.2, 3.0 * std::sqrt(0.2 * 0.8 / n1));
  EXPECT_NEAR(k2 / n2, 0.7, 3.0 * std::sqrt(0.7 * 0.3 / n2));
}

TEST(ApplyChannel, BackgroundOnly) {
  source::SourceConfig c;
  c.pump_power = 0.0;
  const auto s = source::generate_pair_stream(c, 10.0);
  const auto out = apply_channel(s, {flat(0.0, 0.0, 1e3), flat(10.0, 0.0, 1e3)}, 12);
  EXPECT_TRUE(out.survivors.empty());
  EXPECT_NEAR(static_cast<double>(out.background_times.size()), 1e4, 5.0 * 100.0);
  EXPECT_TRUE(std::is_sorted(out.background_times.begin(), out.background_times.end()));
  EXPECT_GE(out.background_times.front(), 0.0);
  EXPECT_LE(out.background_times.back(), 10.0);
}

TEST(ApplyChannel, DeterministicPerSeed) {
  const auto s = stream_of(1e6, 1e-2, 6);
  const std::vector<LinkState> p{flat(0.0, 0.3, 1e4), flat(1.0, 0.3, 1e4)};
  const auto a = apply_channel(s, p, 77), b = apply_channel(s, p, 77);
  EXPECT_EQ(a.survivors, b.survivors);
  EXPECT_EQ(a.background_times, b.background_times);
}

TEST(ApplyChannel, ProfileGap) {
  const auto s = stream_of(1e6, 1e-2, 7);
  for (const auto& p : {std::vector<LinkState>{}, std::vector<LinkState>{flat(0.0, 1.0, 0.0), flat(0.005, 1.0, 0.0)},
                        std::vector<LinkState>{flat(0.001, 1.0, 0.0), flat(1.0, 1.0, 0.0)}}) {
    try {
      apply_channel(s, p, 1);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ProfileGap);
    }
  }
}
