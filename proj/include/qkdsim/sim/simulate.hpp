#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qkdsim/channel/link.hpp"
#include "qkdsim/core/error.hpp"
#include "qkdsim/core/random.hpp"
#include "qkdsim/orbit/passes.hpp"
#include "qkdsim/orbit/sgp4.hpp"
#include "qkdsim/orbit/tle.hpp"
#include "qkdsim/pat/pat.hpp"
#include "qkdsim/pcs/polarization.hpp"
#include "qkdsim/protocol/bbm92.hpp"
#include "qkdsim/receiver/receiver.hpp"
#include "qkdsim/sim/scenario.hpp"
#include "qkdsim/source/photon_source.hpp"

namespace qkdsim::sim {

struct LossBudget {
  double geometric = 0.0;
  double atmospheric = 0.0;
  double pointing = 0.0;
  double optics = 0.0;

  double total() const { return geometric + atmospheric + pointing + optics; }
};

struct KeyReport {
  std::string pass_id;
  std::uint64_t seed = 0;
  std::size_t coincidences_total = 0;
  std::size_t genuine_coincidences = 0;  // ground truth, for diagnostics
  std::size_t sifted_bits = 0;
  std::size_t discarded = 0;
  std::optional<double> qber_estimate;
  double qber_std_error = 0.0;
  std::size_t qber_sample_size = 0;
  std::optional<double> qber_true;  // over the whole sifted key
  double accidental_fraction = 0.0;
  double secret_fraction = 0.0;
  std::uint64_t secret_bits = 0;
  double sample_fraction = 0.1;
  LossBudget loss_budget;
  double pat_lock_fraction = 0.0;
  std::size_t slices = 0;
  double slice_duration = 0.0;
  double slice_interval = 0.0;
  double extrapolated_secret_bits = 0.0;
  double source_qber = 0.0;
  double mean_polarization_qber = 0.0;
  std::optional<receiver::ClockEstimate> clock;
  receiver::ClockModel clock_truth;
  orbit::PassWindow pass;
};

/// Photon-level bookkeeping of one slice.
struct SliceRecord {
  double time = 0.0;
  double elevation = 0.0;
  double transmittance = 0.0;
  double pointing_residual = 0.0;      // arcsec
  double polarization_residual = 0.0;  // deg
  std::size_t pairs = 0;
  std::size_t ground_tags = 0;
  std::size_t onboard_tags = 0;
  std::size_t coincidences = 0;
  std::size_t genuine = 0;
  double accidental_estimate = 0.0;
};

struct SimulationResult {
  KeyReport report;
  orbit::PassGeometry geometry;
  pat::PatRun pat;
  pcs::PcsRun pcs;
  std::vector<channel::LinkState> link;
  std::vector<SliceRecord> slices;
  std::vector<protocol::MatchedPair> matches;
  std::vector<receiver::TimeTag> ground_tags;   // clock corrected; filled when tags are requested
  std::vector<receiver::TimeTag> onboard_tags;
};

inline std::string format_pass_id(int satnum, int index, const UtcTime& aos) {
  return std::to_string(satnum) + "/" + std::to_string(index) + "/" + aos.iso8601();
}

/// Everything after pass selection: PAT, polarization correction, link
/// profile, beacon clock sync and photon-level slices, then sifting and the
/// key report. Photon traffic is simulated in short slices spread over the
/// pass; the report's key figures refer to the simulated photons, and
/// `extrapolated_secret_bits` scales them to the whole pass.
inline SimulationResult run_pipeline(const Scenario& sc, const orbit::PassGeometry& geom, const orbit::PassWindow& pass,
                                     const std::string& pass_id) {
  sc.validate();
  SimulationResult res;
  res.geometry = geom;
  const double duration = geom.duration();
  auto& rep = res.report;
  rep.pass_id = pass_id;
  rep.seed = sc.seed;
  rep.pass = pass;
  rep.sample_fraction = sc.protocol.sample_fraction;
  rep.slice_duration = sc.simulation.slice_duration;
  rep.slice_interval = sc.simulation.slice_interval;
  rep.clock_truth = sc.clock.model;
  source::SourceConfig src = sc.source;
  src.rng_seed = sc.seed;
  rep.source_qber = source::qber_from_visibility(src.visibility);

  res.pat = pat::run_pat(geom, sc.pat, sub_seed(sc.seed, "pat_controller"), sc.link.qfov);
  rep.pat_lock_fraction = res.pat.lock_fraction();

  const pcs::FrameOffsetProfile profile =
      sc.pcs.geometric ? pcs::geometric_profile(geom, sc.pcs.yaw) : pcs::scripted_profile(sc.pcs.script, duration);
  res.pcs = pcs::run_pcs(profile, duration, sc.pcs, sc.seed, &res.pat);

  auto link_at = [&](double t) -> std::optional<channel::LinkState> {
    const auto topo = geom.at(t);
    if (!(topo.elevation > 0.0)) return std::nullopt;
    return channel::total_transmittance(topo.range, topo.elevation, res.pat.at(t).residual_norm(), sc.link, t);
  };
  for (const auto& s : geom.samples)
    if (auto st = link_at(s.t)) res.link.push_back(*st);

  // first instant of fine lock; nothing reaches the ground before it
  std::optional<double> t_lock;
  for (const auto& r : res.pat.records)
    if (r.phase == pat::PatPhase::ClosedLoopFine) {
      t_lock = r.time;
      break;
    }

  receiver::ClockModel estimate{};
  if (t_lock) {
    const double f = src.beacon_frequency;
    const double t0 = *t_lock, t1 = std::min(duration, *t_lock + sc.simulation.sync_duration);
    std::vector<receiver::TimeTag> pulses;
    for (auto k = static_cast<long>(std::ceil(t0 * f)); static_cast<double>(k) / f <= t1; ++k)
      pulses.push_back({static_cast<double>(k) / f, receiver::Channel::Beacon, receiver::Origin::Beacon, -1});
    Rng rng(sub_seed(sc.seed, "quantum_receiver.beacon"));
    const auto tags = receiver::apply_detector(pulses, sc.detectors.beacon, sc.clock.model, t0, t1, rng,
                                               {receiver::Channel::Beacon});
    std::vector<double> times;
    times.reserve(tags.size());
    for (const auto& t : tags) times.push_back(t.time);
    rep.clock = receiver::beacon_clock_sync(times, f, sc.clock.model.offset + sc.clock.coarse_error);
    estimate = rep.clock->clock;
  }

  double acc_sum = 0.0, pol_qber_sum = 0.0;
  LossBudget loss_sum;
  const double sd = sc.simulation.slice_duration;
  for (std::size_t i = 0;; ++i) {
    const double t = sc.simulation.slice_interval * (static_cast<double>(i) + 0.5);
    if (t + sd > duration) break;
    if (res.pat.at(t).phase != pat::PatPhase::ClosedLoopFine) continue;
    const auto state = link_at(t);
    if (!state || !t_lock) continue;

    SliceRecord rec;
    rec.time = t;
    rec.elevation = state->elevation;
    rec.transmittance = state->total_transmittance;
    rec.pointing_residual = res.pat.at(t).residual_norm();
    rec.polarization_residual = res.pcs.residual_at(t);

    const auto stream = source::generate_pair_stream(src, sd, i);
    channel::LinkState held = *state;
    held.time = 0.0;
    channel::LinkState held_end = held;
    held_end.time = sd;
    const auto out = channel::apply_channel(stream, {held, held_end}, sub_seed(sc.seed, "channel_link", i),
                                            src.downlink_fraction);

    Rng meas_rng(sub_seed(sc.seed, "quantum_receiver.measure", i));
    std::vector<receiver::TimeTag> ground_in;
    ground_in.reserve(out.survivors.size() + out.background_times.size());
    for (std::size_t idx : out.survivors) {
      const auto& e = stream.events[idx];
      ground_in.push_back({t + e.emission_time, receiver::measure_polarization(e, rec.polarization_residual, meas_rng),
                           receiver::Origin::Signal, static_cast<std::int64_t>(idx)});
    }
    for (double bt : out.background_times)
      ground_in.push_back({t + bt, receiver::kPolarizationChannels[meas_rng.engine()() % 4], receiver::Origin::Background,
                           -1});
    std::sort(ground_in.begin(), ground_in.end(),
              [](const receiver::TimeTag& a, const receiver::TimeTag& b) { return a.time < b.time; });

    std::vector<receiver::TimeTag> onboard_in;
    onboard_in.reserve(stream.events.size());
    for (std::size_t idx = 0; idx < stream.events.size(); ++idx) {
      const auto& e = stream.events[idx];
      onboard_in.push_back({t + e.emission_time, receiver::channel_for(e.idler_basis, e.idler_outcome),
                            receiver::Origin::Signal, static_cast<std::int64_t>(idx)});
    }

    Rng det_rng(sub_seed(sc.seed, "quantum_receiver.detect", i));
    auto ground = receiver::apply_detector(ground_in, sc.detectors.ground, sc.clock.model, t, t + sd, det_rng);
    const auto onboard =
        receiver::apply_detector(onboard_in, sc.detectors.onboard, receiver::ClockModel{0.0, 0.0}, t, t + sd, det_rng);
    ground = receiver::correct_clock(std::move(ground), estimate);

    const auto co = receiver::find_coincidences(onboard, ground, sc.protocol.coincidence_window, sd);
    for (const auto& [a, b] : co.pairs) {
      const bool genuine = onboard[a].origin == receiver::Origin::Signal &&
                           ground[b].origin == receiver::Origin::Signal && onboard[a].pair == ground[b].pair;
      res.matches.push_back({ground[b].channel, onboard[a].channel, genuine});
      rec.genuine += genuine;
    }
    rec.pairs = stream.events.size();
    rec.ground_tags = ground.size();
    rec.onboard_tags = onboard.size();
    rec.coincidences = co.pairs.size();
    rec.accidental_estimate = co.accidental_estimate;
    acc_sum += co.accidental_estimate;
    pol_qber_sum += pcs::qber_from_residual(rec.polarization_residual);
    loss_sum.geometric += state->geometric_loss_db;
    loss_sum.atmospheric += state->atmospheric_loss_db;
    loss_sum.pointing += state->pointing_loss_db;
    loss_sum.optics += state->optics_loss_db;
    res.slices.push_back(rec);

    if (sc.simulation.write_tags) {
      res.ground_tags.insert(res.ground_tags.end(), ground.begin(), ground.end());
      res.onboard_tags.insert(res.onboard_tags.end(), onboard.begin(), onboard.end());
    }
  }

  const std::size_t n_slices = res.slices.size();
  rep.slices = n_slices;
  if (n_slices > 0) {
    const double n = static_cast<double>(n_slices);
    rep.loss_budget = {loss_sum.geometric / n, loss_sum.atmospheric / n, loss_sum.pointing / n, loss_sum.optics / n};
    rep.mean_polarization_qber = pol_qber_sum / n;
  }

  const auto sifted = protocol::sift(res.matches, src.convention);
  rep.coincidences_total = res.matches.size();
  for (const auto& m : res.matches) rep.genuine_coincidences += m.genuine;
  rep.sifted_bits = sifted.key.size();
  rep.discarded = sifted.discarded;
  rep.accidental_fraction = rep.coincidences_total > 0 ? acc_sum / static_cast<double>(rep.coincidences_total) : 0.0;
  if (!sifted.key.bits.empty()) {
    Rng rng(sub_seed(sc.seed, "bbm92_pipeline"));
    const auto q = protocol::estimate_qber(sifted.key, sc.protocol.sample_fraction, rng);
    rep.qber_estimate = q.estimate;
    rep.qber_std_error = q.std_error;
    rep.qber_sample_size = q.sample_size;
    rep.qber_true = protocol::true_qber(sifted.key);
    rep.secret_fraction = protocol::secret_fraction(std::min(q.estimate, 0.5));
  }
  rep.secret_bits = protocol::secret_bits(rep.sifted_bits, rep.secret_fraction, rep.sample_fraction);
  rep.extrapolated_secret_bits =
      static_cast<double>(rep.secret_bits) * sc.simulation.slice_interval / sc.simulation.slice_duration;
  return res;
}

/// Loads the element set, predicts passes in the configured window and runs
/// the pipeline on the selected one.
inline SimulationResult simulate_pass(const Scenario& sc) {
  const auto sets = orbit::read_tle_file(sc.resolve(sc.tle_path).string());
  const auto& tle = sets.front();
  const UtcTime begin = sc.pass.window_start.empty() ? tle.epoch() : UtcTime::parse_iso8601(sc.pass.window_start);
  const UtcTime end = begin.plus_seconds(sc.pass.window_hours * 3600.0);
  const auto passes = orbit::predict_passes(tle, sc.site, begin, end, sc.pass.min_elevation);
  if (sc.pass.index >= static_cast<int>(passes.size()))
    throw Error(ErrorCode::InvalidArgument, "orbit_dynamics",
                "pass index " + std::to_string(sc.pass.index) + " requested but only " + std::to_string(passes.size()) +
                    " passes above " + std::to_string(sc.pass.min_elevation) + " deg in the window");
  const auto& pass = passes[static_cast<std::size_t>(sc.pass.index)];
  const orbit::Sgp4 sat(tle);
  const auto geom = orbit::sample_pass(sat, sc.site, pass.aos, pass.los, sc.simulation.geometry_step);
  return run_pipeline(sc, geom, pass, format_pass_id(tle.satellite_number, sc.pass.index, pass.aos));
}

inline json report_json(const KeyReport& r) {
  json j;
  j["pass_id"] = r.pass_id;
  j["seed"] = r.seed;
  j["key_rate_model"] = "asymptotic";
  j["pass"] = {{"aos", r.pass.aos.iso8601()},
               {"los", r.pass.los.iso8601()},
               {"culmination", r.pass.culmination.iso8601()},
               {"duration_s", r.pass.duration()},
               {"max_elevation_deg", r.pass.max_elevation},
               {"max_angular_rate_deg_s", r.pass.max_angular_rate}};
  j["coincidences_total"] = r.coincidences_total;
  j["genuine_coincidences"] = r.genuine_coincidences;
  j["sifted_bits"] = r.sifted_bits;
  j["discarded_mismatched_basis"] = r.discarded;
  j["qber_estimate"] = r.qber_estimate ? json(*r.qber_estimate) : json(nullptr);
  j["qber_std_error"] = r.qber_std_error;
  j["qber_sample_size"] = r.qber_sample_size;
  j["qber_true"] = r.qber_true ? json(*r.qber_true) : json(nullptr);
  j["source_qber"] = r.source_qber;
  j["mean_polarization_qber"] = r.mean_polarization_qber;
  j["accidental_fraction"] = r.accidental_fraction;
  j["secret_fraction"] = r.secret_fraction;
  j["secret_bits"] = r.secret_bits;
  j["sample_fraction"] = r.sample_fraction;
  j["loss_budget_db"] = {{"geometric", r.loss_budget.geometric},
                         {"atmospheric", r.loss_budget.atmospheric},
                         {"pointing", r.loss_budget.pointing},
                         {"optics", r.loss_budget.optics},
                         {"total", r.loss_budget.total()}};
  j["pat_lock_fraction"] = r.pat_lock_fraction;
  j["sampling"] = {{"slices", r.slices},
                   {"slice_duration_s", r.slice_duration},
                   {"slice_interval_s", r.slice_interval},
                   {"duty_cycle", r.slice_duration / r.slice_interval}};
  j["extrapolated_secret_bits"] = r.extrapolated_secret_bits;
  if (r.clock)
    j["clock_sync"] = {{"offset_s", r.clock->clock.offset},
                       {"drift", r.clock->clock.drift},
                       {"matched_pulses", r.clock->matched},
                       {"residual_rms_s", r.clock->residual_rms},
                       {"offset_error_s", r.clock->clock.offset - r.clock_truth.offset},
                       {"drift_error", r.clock->clock.drift - r.clock_truth.drift}};
  else
    j["clock_sync"] = nullptr;
  return j;
}

inline std::string summary_line(const KeyReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "sifted=%zu qber=%s secret=%llu", r.sifted_bits,
                r.qber_estimate ? std::to_string(*r.qber_estimate).c_str() : "nan",
                static_cast<unsigned long long>(r.secret_bits));
  return buf;
}

enum class TagFormat { Csv, Json, Binary };

/// report.json, pat.csv, pcs.csv, link.csv and, when requested, the ground and
/// onboard tag streams.
inline void write_outputs(const SimulationResult& res, const Scenario& sc, const std::filesystem::path& dir,
                          TagFormat format = TagFormat::Csv) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cli_app", "cannot create '" + dir.string() + "': " + ec.message());
  auto open = [&](const std::string& name, bool binary = false) {
    std::ofstream os(dir / name, binary ? std::ios::binary : std::ios::out);
    if (!os) throw Error(ErrorCode::Io, "cli_app", "cannot write '" + (dir / name).string() + "'");
    return os;
  };
  {
    auto os = open("report.json");
    os << report_json(res.report).dump(2) << '\n';
  }
  {
    auto os = open("pat.csv");
    pat::write_pat_csv(os, res.pat, sc.simulation.pat_csv_stride);
  }
  {
    auto os = open("pcs.csv");
    pcs::write_pcs_csv(os, res.pcs);
  }
  {
    auto os = open("link.csv");
    channel::write_link_csv(os, res.link);
  }
  if (sc.simulation.write_tags) {
    if (format == TagFormat::Binary) {
      auto g = open("ground_tags.bin", true);
      receiver::write_tags_binary(g, res.ground_tags);
      auto o = open("onboard_tags.bin", true);
      receiver::write_tags_binary(o, res.onboard_tags);
    } else {
      auto g = open("ground_tags.csv");
      receiver::write_tags_csv(g, res.ground_tags);
      auto o = open("onboard_tags.csv");
      receiver::write_tags_csv(o, res.onboard_tags);
    }
  }
}

}  // namespace qkdsim::sim
