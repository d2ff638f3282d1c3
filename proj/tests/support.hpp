#pragma once

// Fixtures shared by the pipeline tests and the acceptance binary.

#include <string>

#include "qkdsim/qkdsim.hpp"

namespace qkdsim::testing {

inline UtcTime demo_culmination() { return UtcTime::from_calendar(2026, 3, 20, 14, 0, 0.0); }

struct PassFixture {
  orbit::TwoLineElement tle;
  orbit::PassWindow window;
  orbit::PassGeometry geom;
  std::string id;
};

/// Zenith pass of a 550 km sun-synchronous-like orbit over the default site.
inline const PassFixture& zenith_fixture() {
  static const PassFixture f = [] {
    PassFixture p;
    const orbit::GroundSite site{};
    const auto c = demo_culmination();
    p.tle = orbit::make_circular_tle(550.0, 97.5, site, c);
    p.window = orbit::predict_passes(p.tle, site, c.plus_seconds(-1800.0), c.plus_seconds(1800.0), 20.0).at(0);
    p.geom = orbit::sample_pass(orbit::Sgp4(p.tle), site, p.window.aos, p.window.los, 1.0);
    p.id = sim::format_pass_id(p.tle.satellite_number, 0, p.window.aos);
    return p;
  }();
  return f;
}

/// Low pair rate, lossless optics, noiseless detectors and a dark sky: what is
/// left of the QBER is the source and the polarization residual.
inline sim::Scenario quiet_scenario(std::uint64_t seed = 1) {
  sim::Scenario s;
  s.seed = seed;
  s.source.brightness = 2e5;
  s.source.pump_power = 1.0;
  s.source.visibility = 0.98;
  s.link.tx_divergence = 1e-6;
  s.link.rx_aperture_diameter = 2.0;
  s.link.rx_obstruction_fraction = 0.0;
  s.link.zenith_atmospheric_loss = 0.0;
  s.link.optics_efficiency = 1.0;
  s.link.spot_radius_fraction = 0.1;
  s.link.sky_background_rate_zenith = 0.0;
  s.detectors.ground = {1.0, 0.0, 0.0, 0.0};
  s.detectors.onboard = {1.0, 0.0, 0.0, 0.0};
  s.simulation.slice_duration = 20e-3;
  s.simulation.slice_interval = 1.0;
  return s;
}

inline sim::SimulationResult run_on_zenith(const sim::Scenario& s) {
  const auto& f = zenith_fixture();
  return sim::run_pipeline(s, f.geom, f.window, f.id);
}

}  // namespace qkdsim::testing
