// qkdsim: command-line front end for pass prediction, source checks, link
// budgets and end-to-end pass simulation.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qkdsim/qkdsim.hpp"

namespace fs = std::filesystem;
using namespace qkdsim;
using nlohmann::json;

namespace {

struct Options {
  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> pass;
  std::string out;
  std::string format = "csv";
  int ensemble = 1;
  bool tags = false;
  std::optional<double> min_elevation;
  std::optional<double> window_hours;
};

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidConfig: return 2;
    case ErrorCode::ChecksumMismatch:
    case ErrorCode::MalformedField:
    case ErrorCode::WrongLineLength:
    case ErrorCode::Io: return 3;
    default: return 4;
  }
}

sim::Scenario load(const Options& o) {
  if (o.scenario_path.empty()) throw Error(ErrorCode::InvalidConfig, "cli_app", "--scenario is required");
  sim::Scenario sc = sim::load_scenario(o.scenario_path);
  if (o.seed) {
    sc.seed = *o.seed;
    sc.source.rng_seed = *o.seed;
  }
  if (o.pass) sc.pass.index = *o.pass;
  if (o.min_elevation) sc.pass.min_elevation = *o.min_elevation;
  if (o.window_hours) sc.pass.window_hours = *o.window_hours;
  if (o.tags) sc.simulation.write_tags = true;
  if (!o.out.empty()) sc.output_dir = o.out;
  sc.validate();
  return sc;
}

fs::path out_dir(const sim::Scenario& sc, const Options& o) {
  // a relative output_dir from the scenario is taken relative to the scenario
  // file; --out is taken relative to the working directory
  return o.out.empty() ? sc.resolve(sc.output_dir) : fs::path(o.out);
}

std::ofstream open_out(const fs::path& p) {
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream os(p);
  if (!os) throw Error(ErrorCode::Io, "cli_app", "cannot write '" + p.string() + "'");
  return os;
}

// one line per warning code; repeats (e.g. every low-elevation sample) are counted
void print_warnings() {
  std::vector<std::pair<const Warning*, std::size_t>> seen;
  for (const auto& w : warnings()) {
    auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& s) { return s.first->code == w.code; });
    if (it == seen.end())
      seen.emplace_back(&w, 1);
    else
      ++it->second;
  }
  for (const auto& [w, n] : seen) {
    std::cerr << "warning: " << w->code << ": " << w->message;
    if (n > 1) std::cerr << " (and " << n - 1 << " similar)";
    std::cerr << '\n';
  }
  clear_warnings();
}

int cmd_predict(const Options& o) {
  const auto sc = load(o);
  const auto tle = orbit::read_tle_file(sc.resolve(sc.tle_path).string()).front();
  const UtcTime begin = sc.pass.window_start.empty() ? tle.epoch() : UtcTime::parse_iso8601(sc.pass.window_start);
  const auto passes = orbit::predict_passes(tle, sc.site, begin, begin.plus_seconds(sc.pass.window_hours * 3600.0),
                                            sc.pass.min_elevation);
  std::printf("%-5s %-24s %-24s %-24s %9s %9s %10s\n", "index", "aos", "culmination", "los", "duration", "max_el",
              "max_rate");
  for (std::size_t i = 0; i < passes.size(); ++i) {
    const auto& p = passes[i];
    std::printf("%-5zu %-24s %-24s %-24s %9.1f %9.3f %10.4f\n", i, p.aos.iso8601().c_str(),
                p.culmination.iso8601().c_str(), p.los.iso8601().c_str(), p.duration(), p.max_elevation,
                p.max_angular_rate);
  }
  const fs::path dir = out_dir(sc, o);
  if (o.format == "json") {
    json arr = json::array();
    for (const auto& p : passes)
      arr.push_back({{"aos", p.aos.iso8601()},
                     {"culmination", p.culmination.iso8601()},
                     {"los", p.los.iso8601()},
                     {"duration_s", p.duration()},
                     {"max_elevation_deg", p.max_elevation},
                     {"max_angular_rate_deg_s", p.max_angular_rate}});
    open_out(dir / "passes.json") << arr.dump(2) << '\n';
  } else {
    auto os = open_out(dir / "passes.csv");
    os << "index,aos,culmination,los,duration_s,max_elevation_deg,max_angular_rate_deg_s\n";
    char buf[256];
    for (std::size_t i = 0; i < passes.size(); ++i) {
      const auto& p = passes[i];
      std::snprintf(buf, sizeof buf, "%zu,%s,%s,%s,%.3f,%.6f,%.6f\n", i, p.aos.iso8601().c_str(),
                    p.culmination.iso8601().c_str(), p.los.iso8601().c_str(), p.duration(), p.max_elevation,
                    p.max_angular_rate);
      os << buf;
    }
  }
  print_warnings();
  return 0;
}

int cmd_source_check(const Options& o) {
  const auto sc = load(o);
  source::SourceConfig src = sc.source;
  const auto angles = sc.scan.angles();
  const auto counts = source::polarizer_scan(src, angles, sc.scan.integration, sc.scan.efficiency, sc.scan.noise);
  const auto fit = source::fit_fringe(angles, counts);
  const fs::path dir = out_dir(sc, o);
  if (o.format == "json") {
    json j;
    j["angles_deg"] = angles;
    j["counts"] = counts;
    j["c_max"] = fit.c_max;
    j["c_min"] = fit.c_min;
    j["visibility"] = fit.visibility;
    open_out(dir / "fringe.json") << j.dump(2) << '\n';
  } else {
    auto os = open_out(dir / "fringe.csv");
    os << "angle_deg,counts,fit\n";
    char buf[128];
    for (std::size_t i = 0; i < angles.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.4f,%.17g,%.17g\n", angles[i], counts[i], fit.eval(angles[i]));
      os << buf;
    }
  }
  std::printf("c_max=%.6g c_min=%.6g visibility=%.6f qber=%.6f\n", fit.c_max, fit.c_min, fit.visibility,
              source::qber_from_visibility(fit.visibility));
  print_warnings();
  return 0;
}

int cmd_link_budget(const Options& o) {
  const auto sc = load(o);
  const auto tle = orbit::read_tle_file(sc.resolve(sc.tle_path).string()).front();
  const UtcTime begin = sc.pass.window_start.empty() ? tle.epoch() : UtcTime::parse_iso8601(sc.pass.window_start);
  const auto passes = orbit::predict_passes(tle, sc.site, begin, begin.plus_seconds(sc.pass.window_hours * 3600.0),
                                            sc.pass.min_elevation);
  if (sc.pass.index >= static_cast<int>(passes.size()))
    throw Error(ErrorCode::InvalidArgument, "orbit_dynamics", "selected pass does not exist in the window");
  const auto& pass = passes[static_cast<std::size_t>(sc.pass.index)];
  const auto geom = orbit::sample_pass(orbit::Sgp4(tle), sc.site, pass.aos, pass.los, sc.simulation.geometry_step);
  const auto run = pat::run_pat(geom, sc.pat, sub_seed(sc.seed, "pat_controller"), sc.link.qfov);
  std::vector<channel::LinkState> profile;
  for (const auto& s : geom.samples)
    if (s.topo.elevation > 0.0)
      profile.push_back(
          channel::total_transmittance(s.topo.range, s.topo.elevation, run.at(s.t).residual_norm(), sc.link, s.t));
  const fs::path dir = out_dir(sc, o);
  if (o.format == "json") {
    json arr = json::array();
    for (const auto& st : profile)
      arr.push_back({{"time_s", st.time},
                     {"elevation_deg", st.elevation},
                     {"range_km", st.range},
                     {"geometric_loss_db", st.geometric_loss_db},
                     {"atmospheric_loss_db", st.atmospheric_loss_db},
                     {"pointing_loss_db", st.pointing_loss_db},
                     {"optics_loss_db", st.optics_loss_db},
                     {"total_transmittance", st.total_transmittance},
                     {"background_rate", st.background_rate}});
    open_out(dir / "link.json") << arr.dump(2) << '\n';
  } else {
    auto os = open_out(dir / "link.csv");
    channel::write_link_csv(os, profile);
  }
  double best = 0.0;
  for (const auto& st : profile) best = std::max(best, st.total_transmittance);
  std::printf("samples=%zu best_loss_db=%.3f\n", profile.size(), channel::to_db(best));
  print_warnings();
  return 0;
}

sim::TagFormat tag_format(const std::string& f) {
  return f == "bin" ? sim::TagFormat::Binary : f == "json" ? sim::TagFormat::Json : sim::TagFormat::Csv;
}

int cmd_simulate(const Options& o) {
  const auto base = load(o);
  const fs::path dir = out_dir(base, o);
  if (o.ensemble <= 1) {
    const auto res = sim::simulate_pass(base);
    sim::write_outputs(res, base, dir, tag_format(o.format));
    std::cout << sim::summary_line(res.report) << '\n';
    print_warnings();
    return 0;
  }

  // independent seeds base.seed, base.seed + 1, ...; one output directory each
  const auto n = static_cast<std::size_t>(o.ensemble);
  std::vector<std::optional<sim::KeyReport>> reports(n);
  std::vector<std::string> failures(n);
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= n) return;
        i = next++;
      }
      sim::Scenario sc = base;
      sc.seed = base.seed + i;
      sc.source.rng_seed = sc.seed;
      try {
        const auto res = sim::simulate_pass(sc);
        sim::write_outputs(res, sc, dir / ("seed_" + std::to_string(sc.seed)), tag_format(o.format));
        reports[i] = res.report;
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
      clear_warnings();
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), static_cast<unsigned>(n)));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < n; ++i)
    if (!failures[i].empty()) {
      std::cerr << "seed " << base.seed + i << ": " << failures[i] << '\n';
      return 4;
    }
  auto os = open_out(dir / "ensemble.csv");
  os << "seed,sifted_bits,qber,secret_bits\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = *reports[i];
    char buf[160];
    if (r.qber_estimate)
      std::snprintf(buf, sizeof buf, "%llu,%zu,%.17g,%llu\n", static_cast<unsigned long long>(r.seed), r.sifted_bits,
                    *r.qber_estimate, static_cast<unsigned long long>(r.secret_bits));
    else
      std::snprintf(buf, sizeof buf, "%llu,%zu,,%llu\n", static_cast<unsigned long long>(r.seed), r.sifted_bits,
                    static_cast<unsigned long long>(r.secret_bits));
    os << buf;
    std::cout << "seed=" << r.seed << ' ' << sim::summary_line(r) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Satellite-to-ground entanglement QKD pass simulator"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--scenario", o.scenario_path, "Scenario file (TOML or JSON)")->required();
    c->add_option("--seed", o.seed, "Override the scenario seed");
    c->add_option("--out", o.out, "Output directory");
    c->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json", "bin"}));
  };
  auto* predict = app.add_subcommand("predict", "List passes over the site");
  common(predict);
  predict->add_option("--min-elevation", o.min_elevation, "Minimum culmination elevation, deg");
  predict->add_option("--hours", o.window_hours, "Prediction window length, h");

  auto* simulate = app.add_subcommand("simulate", "Simulate one pass end to end");
  common(simulate);
  simulate->add_option("--pass", o.pass, "Pass index within the prediction window");
  simulate->add_option("--ensemble", o.ensemble, "Number of consecutive seeds to run concurrently")
      ->check(CLI::Range(1, 100000));
  simulate->add_flag("--tags", o.tags, "Also write the ground and onboard time tags");

  auto* source_check = app.add_subcommand("source-check", "Polarizer scan and visibility fit");
  common(source_check);

  auto* link = app.add_subcommand("link-budget", "Link loss profile for a pass, no photons");
  common(link);
  link->add_option("--pass", o.pass, "Pass index within the prediction window");

  auto* example = app.add_subcommand("scenario-example", "Print a scenario with every default spelled out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*predict) return cmd_predict(o);
    if (*simulate) return cmd_simulate(o);
    if (*source_check) return cmd_source_check(o);
    if (*link) return cmd_link_budget(o);
    if (*example) {
      std::cout << sim::example_scenario_text();
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
