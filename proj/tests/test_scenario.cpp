#include <gtest/gtest.h>

#include <fstream>
#include <string>

#include "qkdsim/sim/scenario.hpp"

using namespace qkdsim;
using namespace qkdsim::sim;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    return e.what();
  }
  ADD_FAILURE() << "accepted: " << text;
  return {};
}

}  // namespace

TEST(Scenario, MinimalUsesDefaults) {
  const auto s = parse_scenario("tle_path = \"x.tle\"\n[site]\nlatitude = 1.3\nlongitude = 103.8\naltitude = 0.02\n");
  EXPECT_EQ(s.tle_path, "x.tle");
  EXPECT_DOUBLE_EQ(s.site.latitude, 1.3);
  EXPECT_EQ(s.protocol.coincidence_window, 1e-9);
  EXPECT_EQ(s.pat.wfov.fov, 3600.0);
  EXPECT_EQ(s.pat.nfov.fov, 120.0);
  EXPECT_EQ(s.scan.step, 5.0);
  EXPECT_EQ(s.pass.min_elevation, 20.0);
}

TEST(Scenario, TomlRoundTrip) {
  Scenario s;
  s.tle_path = "a/b.tle";
  s.seed = 123456789012345ULL;
  s.source.visibility = 0.973;
  s.link.qfov = 12.5;
  s.pat.mount.systematic_bias = {10.0, -3.25};
  s.pcs.polarimeter.hwp_settings = {0.0, 11.25, 22.5};
  s.pcs.geometric = false;
  s.pcs.script = {{0.0, 1.0}, {1000.0, 2.0}};
  s.simulation.write_tags = true;
  const std::string text = scenario_to_toml(s);
  const auto back = parse_scenario(text);
  EXPECT_EQ(to_json(back), to_json(s));
  EXPECT_EQ(scenario_to_toml(back), text);
  EXPECT_EQ(back.source.rng_seed, s.seed);
}

TEST(Scenario, JsonRoundTrip) {
  Scenario s;
  s.tle_path = "demo.tle";
  s.detectors.ground.dark_rate = 321.0;
  s.clock.model.drift = -4e-8;
  const auto back = parse_scenario(to_json(s).dump(2));
  EXPECT_EQ(to_json(back), to_json(s));
}

TEST(Scenario, ExampleParsesToDefaults) {
  const auto s = parse_scenario(example_scenario_text());
  Scenario d;
  d.tle_path = "demo.tle";
  EXPECT_EQ(to_json(s), to_json(d));
  std::ifstream in(std::string(QKDSIM_SCENARIOS) + "/scenario.example");
  ASSERT_TRUE(in);
  std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(file, example_scenario_text());
}

TEST(Scenario, DemoLoadsAndResolvesPaths) {
  const auto s = load_scenario(std::string(QKDSIM_SCENARIOS) + "/demo.toml");
  EXPECT_EQ(s.seed, 20260320u);
  EXPECT_TRUE(std::filesystem::exists(s.resolve(s.tle_path)));
  EXPECT_EQ(s.resolve("/abs/x.tle"), std::filesystem::path("/abs/x.tle"));
}

TEST(Scenario, UnknownKeysRejected) {
  EXPECT_NE(config_error("tle_path = \"x\"\nbogus = 1\n").find("bogus"), std::string::npos);
  EXPECT_NE(config_error("[source]\nvisiblity = 0.9\n").find("[source] visiblity"), std::string::npos);
  EXPECT_NE(config_error("[pat.fsm]\nbandwith = 10.0\n").find("bandwith"), std::string::npos);
  EXPECT_NE(config_error("[nonsense]\na = 1\n").find("nonsense"), std::string::npos);
}

TEST(Scenario, TypeErrorsNameTheKey) {
  EXPECT_NE(config_error("[source]\nvisibility = \"high\"\n").find("visibility"), std::string::npos);
  EXPECT_NE(config_error("[pass]\nindex = 1.5\n").find("index"), std::string::npos);
}

TEST(Scenario, SyntaxErrorsCarryLineNumbers) {
  EXPECT_NE(config_error("tle_path = \"x\"\n\n[site\n").find("line 3"), std::string::npos);
  EXPECT_NE(config_error("a = \n").find("line 1"), std::string::npos);
  EXPECT_NE(config_error("x = 1\nx = 2\n").find("line 2"), std::string::npos);
  config_error("{\"tle_path\": ");
}

TEST(Scenario, RangeChecks) {
  config_error("[source]\nvisibility = 1.2\n");
  config_error("[source.scan]\nintegration = 0.0\n");
  config_error("[protocol]\nsample_fraction = 1.0\n");
  config_error("[simulation]\nslice_duration = 2.0\nslice_interval = 1.0\n");
  config_error("[clock]\ncoarse_error = 1e-3\n");
  config_error("[link]\nqfov = 500.0\n");  // wider than the NFOV
}

TEST(Scenario, CommentsAndArrays) {
  const auto s = parse_scenario(
      "# header\n"
      "tle_path = \"x#y.tle\"  # trailing\n"
      "[pcs.polarimeter]\n"
      "hwp_settings = [0.0, 22.5, 11.25]\n");
  EXPECT_EQ(s.tle_path, "x#y.tle");
  EXPECT_EQ(s.pcs.polarimeter.hwp_settings, (std::vector<double>{0.0, 22.5, 11.25}));
}

TEST(Scenario, MissingFile) {
  try {
    load_scenario("/nonexistent/scenario.toml");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
  }
}
