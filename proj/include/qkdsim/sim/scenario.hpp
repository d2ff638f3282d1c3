#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qkdsim/channel/link.hpp"
#include "qkdsim/core/error.hpp"
#include "qkdsim/orbit/topocentric.hpp"
#include "qkdsim/pat/pat.hpp"
#include "qkdsim/pcs/polarization.hpp"
#include "qkdsim/receiver/receiver.hpp"
#include "qkdsim/source/photon_source.hpp"

namespace qkdsim::sim {

using json = nlohmann::json;

struct PassSelection {
  std::string window_start;  // ISO-8601 UTC; empty means the element-set epoch
  double window_hours = 24.0;
  double min_elevation = 20.0;  // deg
  int index = 0;

  friend bool operator==(const PassSelection&, const PassSelection&) = default;
};

struct DetectorSet {
  receiver::DetectorModel ground{0.5, 200.0, 50e-9, 100e-12};
  receiver::DetectorModel onboard{0.5, 100.0, 22e-9, 100e-12};
  receiver::DetectorModel beacon{1.0, 0.0, 0.0, 100e-12};

  friend bool operator==(const DetectorSet&, const DetectorSet&) = default;
};

struct ClockSettings {
  receiver::ClockModel model;
  double coarse_error = 2e-6;  // s, error of the coarse time prior used to fix the pulse number

  friend bool operator==(const ClockSettings&, const ClockSettings&) = default;
};

struct ProtocolSettings {
  double coincidence_window = 1e-9;  // s
  double sample_fraction = 0.1;

  friend bool operator==(const ProtocolSettings&, const ProtocolSettings&) = default;
};

struct SimulationSettings {
  double geometry_step = 1.0;     // s
  double slice_duration = 0.5e-3; // s of photon-level simulation per slice
  double slice_interval = 5.0;    // s between slice starts
  double sync_duration = 10.0;    // s of beacon tags used for clock sync
  int pat_csv_stride = 100;       // PAT records per telemetry row
  bool write_tags = false;

  friend bool operator==(const SimulationSettings&, const SimulationSettings&) = default;
};

struct Scenario {
  std::string tle_path;
  std::filesystem::path base_dir;  // relative paths resolve against this
  orbit::GroundSite site;
  PassSelection pass;
  source::SourceConfig source;
  source::ScanParams scan;
  channel::LinkConfig link;
  pat::PatConfig pat;
  pcs::PcsConfig pcs;
  DetectorSet detectors;
  ClockSettings clock;
  ProtocolSettings protocol;
  SimulationSettings simulation;
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  }

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, "cli_app", what); };
    site.validate();
    source.validate();
    scan.validate();
    link.validate();
    pat.validate(link.qfov);
    pcs.validate();
    detectors.ground.validate("detectors.ground");
    detectors.onboard.validate("detectors.onboard");
    detectors.beacon.validate("detectors.beacon");
    clock.model.validate();
    if (!(pass.window_hours > 0.0 && pass.window_hours <= 168.0)) bad("pass.window_hours must lie in (0, 168]");
    if (pass.index < 0) bad("pass.index must be non-negative");
    if (!(protocol.coincidence_window > 0.0)) bad("protocol.coincidence_window must be positive");
    if (!(protocol.sample_fraction > 0.0 && protocol.sample_fraction < 1.0))
      bad("protocol.sample_fraction must lie in (0, 1)");
    if (!(simulation.geometry_step > 0.0)) bad("simulation.geometry_step must be positive");
    if (!(simulation.slice_duration > 0.0)) bad("simulation.slice_duration must be positive");
    if (!(simulation.slice_interval >= simulation.slice_duration))
      bad("simulation.slice_interval must not be shorter than slice_duration");
    if (!(simulation.sync_duration > 0.0)) bad("simulation.sync_duration must be positive");
    if (simulation.pat_csv_stride < 1) bad("simulation.pat_csv_stride must be at least 1");
    if (source.beacon_frequency <= 0.0) bad("the beacon must be enabled for clock synchronisation");
    if (!(std::fabs(clock.coarse_error) < 0.5 / source.beacon_frequency))
      bad("clock.coarse_error must be below half a beacon period");
  }
};

// ---------------------------------------------------------------------------
// Minimal TOML reader: [section] / [a.b] headers, key = value, strings,
// booleans, numbers and single-line (nested) arrays, '#' comments.

namespace detail {

class TomlParser {
 public:
  explicit TomlParser(std::string text) : text_(std::move(text)) {}

  json parse() {
    json root = json::object();
    json* table = &root;
    std::istringstream in(text_);
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_;
      line_text_ = strip_comment(raw);
      pos_ = 0;
      skip_ws();
      if (eof()) continue;
      if (peek() == '[') {
        ++pos_;
        std::string name;
        while (!eof() && peek() != ']') name += line_text_[pos_++];
        if (eof()) fail("unterminated table header");
        ++pos_;
        skip_ws();
        if (!eof()) fail("trailing characters after table header");
        table = &root;
        std::stringstream parts(name);
        std::string part;
        while (std::getline(parts, part, '.')) {
          part = trim(part);
          if (part.empty() || !valid_key(part)) fail("bad table name '" + name + "'");
          json& next = (*table)[part];
          if (next.is_null()) next = json::object();
          if (!next.is_object()) fail("'" + part + "' is not a table");
          table = &next;
        }
        continue;
      }
      std::string key;
      while (!eof() && peek() != '=' && !std::isspace(static_cast<unsigned char>(peek()))) key += line_text_[pos_++];
      skip_ws();
      if (eof() || peek() != '=') fail("expected 'key = value'");
      ++pos_;
      if (!valid_key(key)) fail("bad key '" + key + "'");
      if (table->contains(key)) fail("duplicate key '" + key + "'");
      skip_ws();
      (*table)[key] = value();
      skip_ws();
      if (!eof()) fail("trailing characters after value");
    }
    return root;
  }

 private:
  std::string text_;
  std::string line_text_;
  std::size_t pos_ = 0;
  int line_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::InvalidConfig, "cli_app", "scenario line " + std::to_string(line_) + ": " + what);
  }
  bool eof() const { return pos_ >= line_text_.size(); }
  char peek() const { return line_text_[pos_]; }
  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) ++pos_;
  }
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
  }
  static bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    return true;
  }
  static std::string strip_comment(const std::string& s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
      if (s[i] == '#' && !in_str) return s.substr(0, i);
    }
    return s;
  }

  json value() {
    if (eof()) fail("missing value");
    const char c = peek();
    if (c == '"') return string_value();
    if (c == '[') {
      ++pos_;
      json arr = json::array();
      skip_ws();
      if (!eof() && peek() == ']') {
        ++pos_;
        return arr;
      }
      for (;;) {
        skip_ws();
        arr.push_back(value());
        skip_ws();
        if (eof()) fail("unterminated array");
        if (peek() == ',') {
          ++pos_;
          skip_ws();
          if (!eof() && peek() == ']') {
            ++pos_;
            return arr;
          }
          continue;
        }
        if (peek() == ']') {
          ++pos_;
          return arr;
        }
        fail("expected ',' or ']' in array");
      }
    }
    std::string tok;
    while (!eof() && peek() != ',' && peek() != ']' && !std::isspace(static_cast<unsigned char>(peek())))
      tok += line_text_[pos_++];
    if (tok == "true") return true;
    if (tok == "false") return false;
    return number(tok);
  }

  json string_value() {
    ++pos_;
    std::string s;
    while (!eof() && peek() != '"') {
      char ch = line_text_[pos_++];
      if (ch == '\\') {
        if (eof()) fail("bad escape");
        const char e = line_text_[pos_++];
        if (e == 'n') ch = '\n';
        else if (e == 't') ch = '\t';
        else if (e == '"' || e == '\\') ch = e;
        else fail(std::string("unsupported escape \\") + e);
      }
      s += ch;
    }
    if (eof()) fail("unterminated string");
    ++pos_;
    return s;
  }

  json number(const std::string& tok) {
    if (tok.empty()) fail("missing value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos || tok == "inf" || tok == "nan";
    char* end = nullptr;
    if (!is_float) {
      if (tok[0] == '-') {
        const long long v = std::strtoll(tok.c_str(), &end, 10);
        if (*end == '\0') return v;
      } else {
        const unsigned long long v = std::strtoull(tok[0] == '+' ? tok.c_str() + 1 : tok.c_str(), &end, 10);
        if (*end == '\0') return static_cast<std::uint64_t>(v);
      }
      fail("bad integer '" + tok + "'");
    }
    const double v = std::strtod(tok.c_str(), &end);
    if (*end != '\0') fail("bad value '" + tok + "'");
    return v;
  }
};

inline std::string toml_number(double v) {
  // shortest text that reads back to the same double
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline std::string toml_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

inline std::string toml_value(const json& v) {
  if (v.is_string()) return toml_string(v.get<std::string>());
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) return toml_number(v.get<double>());
  if (v.is_array()) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + toml_value(v[i]);
    return s + "]";
  }
  throw Error(ErrorCode::InvalidConfig, "cli_app", "value cannot be written as TOML");
}

inline void write_toml_table(std::ostream& os, const json& table, const std::string& prefix) {
  for (auto it = table.begin(); it != table.end(); ++it)
    if (!it->is_object()) os << it.key() << " = " << toml_value(*it) << '\n';
  for (auto it = table.begin(); it != table.end(); ++it) {
    if (!it->is_object()) continue;
    const std::string name = prefix.empty() ? it.key() : prefix + "." + it.key();
    os << "\n[" << name << "]\n";
    write_toml_table(os, *it, name);
  }
}

// Strict field reader: every key in a table must be consumed.
class Fields {
 public:
  Fields(const json& table, std::string section) : t_(table), section_(std::move(section)) {
    if (!t_.is_object()) fail("", "expected a table");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!t_.contains(key)) return;
    const json& v = t_.at(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) fail(key, "expected a number");
        out = v.get<double>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(key, "expected true or false");
        out = v.get<bool>();
      } else if constexpr (std::is_same_v<T, int>) {
        if (!v.is_number_integer()) fail(key, "expected an integer");
        out = v.get<int>();
      } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned()) fail(key, "expected a non-negative integer");
        out = v.get<std::uint64_t>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) fail(key, "expected a string");
        out = v.get<std::string>();
      } else if constexpr (std::is_same_v<T, Vec2>) {
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
          fail(key, "expected a two-element array");
        out = {v[0].get<double>(), v[1].get<double>()};
      } else if constexpr (std::is_same_v<T, std::vector<double>>) {
        if (!v.is_array()) fail(key, "expected an array of numbers");
        out.clear();
        for (const auto& x : v) {
          if (!x.is_number()) fail(key, "expected an array of numbers");
          out.push_back(x.get<double>());
        }
      }
    } catch (const nlohmann::json::exception& e) {
      fail(key, e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return t_.contains(key) ? &t_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = t_.begin(); it != t_.end(); ++it)
      if (!seen_.count(it.key())) fail(it.key(), "unknown key");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw Error(ErrorCode::InvalidConfig, "cli_app",
                (section_.empty() ? "" : "[" + section_ + "] ") + (key.empty() ? "" : key + ": ") + what);
  }

 private:
  const json& t_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline json parse_toml(const std::string& text) { return detail::TomlParser(text).parse(); }

inline std::string to_toml(const json& j) {
  std::ostringstream os;
  detail::write_toml_table(os, j, "");
  return os.str();
}

inline json detector_json(const receiver::DetectorModel& d) {
  return {{"efficiency", d.efficiency},
          {"dark_rate", d.dark_rate},
          {"dead_time", d.dead_time},
          {"timing_jitter_rms", d.timing_jitter_rms}};
}

inline json camera_json(const pat::CameraModel& c) {
  return {{"fov", c.fov},
          {"centroid_noise_rms", c.centroid_noise_rms},
          {"frame_rate", c.frame_rate},
          {"detection_snr_threshold", c.detection_snr_threshold}};
}

/// Fully resolved scenario as a JSON tree (every field, defaults included).
inline json to_json(const Scenario& s) {
  json j;
  j["seed"] = s.seed;
  j["tle_path"] = s.tle_path;
  j["output_dir"] = s.output_dir;
  j["site"] = {{"latitude", s.site.latitude}, {"longitude", s.site.longitude}, {"altitude", s.site.altitude}};
  j["pass"] = {{"window_start", s.pass.window_start},
               {"window_hours", s.pass.window_hours},
               {"min_elevation", s.pass.min_elevation},
               {"index", s.pass.index}};
  const auto& src = s.source;
  j["source"] = {{"brightness", src.brightness},
                 {"pump_power", src.pump_power},
                 {"visibility", src.visibility},
                 {"downlink_fraction", src.downlink_fraction},
                 {"beacon_frequency", src.beacon_frequency},
                 {"beacon_pulse_width", src.beacon_pulse_width},
                 {"intensity_imbalance", src.intensity_imbalance},
                 {"signal_wavelength_nm", src.signal_wavelength_nm},
                 {"idler_wavelength_nm", src.idler_wavelength_nm},
                 {"convention", src.convention == source::StateConvention::PhiPlus ? "phi_plus" : "psi_minus"}};
  j["source"]["scan"] = {{"start", s.scan.start},
                         {"stop", s.scan.stop},
                         {"step", s.scan.step},
                         {"integration", s.scan.integration},
                         {"efficiency", s.scan.efficiency},
                         {"noise", s.scan.noise}};
  const auto& l = s.link;
  j["link"] = {{"tx_divergence", l.tx_divergence},
               {"rx_aperture_diameter", l.rx_aperture_diameter},
               {"rx_obstruction_fraction", l.rx_obstruction_fraction},
               {"zenith_atmospheric_loss", l.zenith_atmospheric_loss},
               {"optics_efficiency", l.optics_efficiency},
               {"qfov", l.qfov},
               {"spot_radius_fraction", l.spot_radius_fraction},
               {"sky_background_rate_zenith", l.sky_background_rate_zenith}};
  const auto& p = s.pat;
  j["pat"] = {{"threshold_elevation", p.threshold_elevation},
              {"coarse_gain", p.coarse_gain},
              {"dropout_limit", p.dropout_limit},
              {"beacon_snr", p.beacon_snr},
              {"record_stride", p.record_stride}};
  j["pat"]["mount"] = {{"max_slew_rate", p.mount.max_slew_rate},
                       {"command_latency", p.mount.command_latency},
                       {"systematic_bias", {p.mount.systematic_bias.x, p.mount.systematic_bias.y}},
                       {"jitter_rms", p.mount.jitter_rms},
                       {"along_track_time_error", p.mount.along_track_time_error}};
  j["pat"]["wfov"] = camera_json(p.wfov);
  j["pat"]["nfov"] = camera_json(p.nfov);
  j["pat"]["fsm"] = {{"bandwidth", p.fsm.bandwidth}, {"range", p.fsm.range}, {"loop_gain", p.fsm.loop_gain}};
  const auto& c = s.pcs;
  json script = json::array();
  for (const auto& smp : c.script) script.push_back({smp.time, smp.theta});
  j["pcs"] = {{"mode", c.geometric ? "geometric" : "scripted"},
              {"yaw", c.yaw},
              {"update_interval", c.update_interval},
              {"uncorrected_offset", c.uncorrected_offset},
              {"script", script}};
  j["pcs"]["polarimeter"] = {{"hwp_settings", c.polarimeter.hwp_settings},
                             {"detector_pair_efficiency_ratio", c.polarimeter.detector_pair_efficiency_ratio},
                             {"integration", c.polarimeter.integration},
                             {"count_rate", c.polarimeter.count_rate}};
  j["detectors"]["ground"] = detector_json(s.detectors.ground);
  j["detectors"]["onboard"] = detector_json(s.detectors.onboard);
  j["detectors"]["beacon"] = detector_json(s.detectors.beacon);
  j["clock"] = {{"offset", s.clock.model.offset}, {"drift", s.clock.model.drift}, {"coarse_error", s.clock.coarse_error}};
  j["protocol"] = {{"coincidence_window", s.protocol.coincidence_window},
                   {"sample_fraction", s.protocol.sample_fraction}};
  j["simulation"] = {{"geometry_step", s.simulation.geometry_step},
                     {"slice_duration", s.simulation.slice_duration},
                     {"slice_interval", s.simulation.slice_interval},
                     {"sync_duration", s.simulation.sync_duration},
                     {"pat_csv_stride", s.simulation.pat_csv_stride},
                     {"write_tags", s.simulation.write_tags}};
  return j;
}

namespace detail {

inline void read_detector(const json* t, const char* name, receiver::DetectorModel& d) {
  if (!t) return;
  Fields f(*t, std::string("detectors.") + name);
  f.get("efficiency", d.efficiency);
  f.get("dark_rate", d.dark_rate);
  f.get("dead_time", d.dead_time);
  f.get("timing_jitter_rms", d.timing_jitter_rms);
  f.finish();
}

inline void read_camera(const json* t, const char* name, pat::CameraModel& c) {
  if (!t) return;
  Fields f(*t, std::string("pat.") + name);
  f.get("fov", c.fov);
  f.get("centroid_noise_rms", c.centroid_noise_rms);
  f.get("frame_rate", c.frame_rate);
  f.get("detection_snr_threshold", c.detection_snr_threshold);
  f.finish();
}

}  // namespace detail

/// Builds a scenario from a (possibly partial) JSON tree; absent fields keep
/// their defaults, unknown fields are rejected. The result is validated.
inline Scenario from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  using detail::Fields;
  Scenario s;
  s.base_dir = base_dir;
  Fields root(j, "");
  root.get("seed", s.seed);
  root.get("tle_path", s.tle_path);
  root.get("output_dir", s.output_dir);
  if (const json* t = root.sub("site")) {
    Fields f(*t, "site");
    f.get("latitude", s.site.latitude);
    f.get("longitude", s.site.longitude);
    f.get("altitude", s.site.altitude);
    f.finish();
  }
  if (const json* t = root.sub("pass")) {
    Fields f(*t, "pass");
    f.get("window_start", s.pass.window_start);
    f.get("window_hours", s.pass.window_hours);
    f.get("min_elevation", s.pass.min_elevation);
    f.get("index", s.pass.index);
    f.finish();
  }
  if (const json* t = root.sub("source")) {
    Fields f(*t, "source");
    auto& src = s.source;
    f.get("brightness", src.brightness);
    f.get("pump_power", src.pump_power);
    f.get("visibility", src.visibility);
    f.get("downlink_fraction", src.downlink_fraction);
    f.get("beacon_frequency", src.beacon_frequency);
    f.get("beacon_pulse_width", src.beacon_pulse_width);
    f.get("intensity_imbalance", src.intensity_imbalance);
    f.get("signal_wavelength_nm", src.signal_wavelength_nm);
    f.get("idler_wavelength_nm", src.idler_wavelength_nm);
    std::string conv = src.convention == source::StateConvention::PhiPlus ? "phi_plus" : "psi_minus";
    f.get("convention", conv);
    if (conv == "phi_plus") src.convention = source::StateConvention::PhiPlus;
    else if (conv == "psi_minus") src.convention = source::StateConvention::PsiMinus;
    else f.fail("convention", "expected \"phi_plus\" or \"psi_minus\"");
    if (const json* sc = f.sub("scan")) {
      Fields g(*sc, "source.scan");
      g.get("start", s.scan.start);
      g.get("stop", s.scan.stop);
      g.get("step", s.scan.step);
      g.get("integration", s.scan.integration);
      g.get("efficiency", s.scan.efficiency);
      g.get("noise", s.scan.noise);
      g.finish();
    }
    f.finish();
  }
  if (const json* t = root.sub("link")) {
    Fields f(*t, "link");
    auto& l = s.link;
    f.get("tx_divergence", l.tx_divergence);
    f.get("rx_aperture_diameter", l.rx_aperture_diameter);
    f.get("rx_obstruction_fraction", l.rx_obstruction_fraction);
    f.get("zenith_atmospheric_loss", l.zenith_atmospheric_loss);
    f.get("optics_efficiency", l.optics_efficiency);
    f.get("qfov", l.qfov);
    f.get("spot_radius_fraction", l.spot_radius_fraction);
    f.get("sky_background_rate_zenith", l.sky_background_rate_zenith);
    f.finish();
  }
  if (const json* t = root.sub("pat")) {
    Fields f(*t, "pat");
    auto& p = s.pat;
    f.get("threshold_elevation", p.threshold_elevation);
    f.get("coarse_gain", p.coarse_gain);
    f.get("dropout_limit", p.dropout_limit);
    f.get("beacon_snr", p.beacon_snr);
    f.get("record_stride", p.record_stride);
    if (const json* m = f.sub("mount")) {
      Fields g(*m, "pat.mount");
      g.get("max_slew_rate", p.mount.max_slew_rate);
      g.get("command_latency", p.mount.command_latency);
      g.get("systematic_bias", p.mount.systematic_bias);
      g.get("jitter_rms", p.mount.jitter_rms);
      g.get("along_track_time_error", p.mount.along_track_time_error);
      g.finish();
    }
    detail::read_camera(f.sub("wfov"), "wfov", p.wfov);
    detail::read_camera(f.sub("nfov"), "nfov", p.nfov);
    if (const json* m = f.sub("fsm")) {
      Fields g(*m, "pat.fsm");
      g.get("bandwidth", p.fsm.bandwidth);
      g.get("range", p.fsm.range);
      g.get("loop_gain", p.fsm.loop_gain);
      g.finish();
    }
    f.finish();
  }
  if (const json* t = root.sub("pcs")) {
    Fields f(*t, "pcs");
    auto& c = s.pcs;
    std::string mode = c.geometric ? "geometric" : "scripted";
    f.get("mode", mode);
    if (mode == "geometric") c.geometric = true;
    else if (mode == "scripted") c.geometric = false;
    else f.fail("mode", "expected \"geometric\" or \"scripted\"");
    f.get("yaw", c.yaw);
    f.get("update_interval", c.update_interval);
    f.get("uncorrected_offset", c.uncorrected_offset);
    if (const json* sc = f.sub("script")) {
      if (!sc->is_array()) f.fail("script", "expected an array of [time, theta] pairs");
      c.script.clear();
      for (const auto& row : *sc) {
        if (!row.is_array() || row.size() != 2 || !row[0].is_number() || !row[1].is_number())
          f.fail("script", "expected an array of [time, theta] pairs");
        c.script.push_back({row[0].get<double>(), row[1].get<double>()});
      }
    }
    if (const json* m = f.sub("polarimeter")) {
      Fields g(*m, "pcs.polarimeter");
      g.get("hwp_settings", c.polarimeter.hwp_settings);
      g.get("detector_pair_efficiency_ratio", c.polarimeter.detector_pair_efficiency_ratio);
      g.get("integration", c.polarimeter.integration);
      g.get("count_rate", c.polarimeter.count_rate);
      g.finish();
    }
    f.finish();
    if (!c.geometric && c.script.empty()) f.fail("script", "scripted mode needs a script");
  }
  if (const json* t = root.sub("detectors")) {
    Fields f(*t, "detectors");
    detail::read_detector(f.sub("ground"), "ground", s.detectors.ground);
    detail::read_detector(f.sub("onboard"), "onboard", s.detectors.onboard);
    detail::read_detector(f.sub("beacon"), "beacon", s.detectors.beacon);
    f.finish();
  }
  if (const json* t = root.sub("clock")) {
    Fields f(*t, "clock");
    f.get("offset", s.clock.model.offset);
    f.get("drift", s.clock.model.drift);
    f.get("coarse_error", s.clock.coarse_error);
    f.finish();
  }
  if (const json* t = root.sub("protocol")) {
    Fields f(*t, "protocol");
    f.get("coincidence_window", s.protocol.coincidence_window);
    f.get("sample_fraction", s.protocol.sample_fraction);
    f.finish();
  }
  if (const json* t = root.sub("simulation")) {
    Fields f(*t, "simulation");
    f.get("geometry_step", s.simulation.geometry_step);
    f.get("slice_duration", s.simulation.slice_duration);
    f.get("slice_interval", s.simulation.slice_interval);
    f.get("sync_duration", s.simulation.sync_duration);
    f.get("pat_csv_stride", s.simulation.pat_csv_stride);
    f.get("write_tags", s.simulation.write_tags);
    f.finish();
  }
  root.finish();
  s.source.rng_seed = s.seed;
  s.validate();
  return s;
}

/// Parses scenario text: JSON if it starts with '{', TOML otherwise.
inline Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {}) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, "cli_app", std::string("scenario JSON: ") + e.what());
    }
    return from_json(j, base_dir);
  }
  return from_json(parse_toml(text), base_dir);
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cli_app", "cannot open scenario '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.parent_path());
}

inline std::string scenario_to_toml(const Scenario& s) { return to_toml(to_json(s)); }

/// Annotated example scenario with every field at its default.
inline std::string example_scenario_text() {
  Scenario s;
  s.tle_path = "demo.tle";
  std::string body = scenario_to_toml(s);
  return "# Pass simulation scenario. Every field is optional except tle_path;\n"
         "# the values below are the defaults. Units: angles in degrees (arcsec for\n"
         "# pointing quantities), times in seconds, rates per second, losses in dB.\n"
         "# The same tree may be given as JSON.\n\n" +
         body;
}

}  // namespace qkdsim::sim
