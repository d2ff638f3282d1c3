#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qkdsim/core/error.hpp"
#include "qkdsim/core/random.hpp"
#include "qkdsim/pcs/polarization.hpp"
#include "qkdsim/source/photon_source.hpp"

namespace qkdsim::receiver {

using source::Basis;

enum class Channel : std::uint8_t { H = 0, V = 1, A = 2, D = 3, Beacon = 255 };

inline constexpr std::array<Channel, 4> kPolarizationChannels{Channel::H, Channel::V, Channel::A, Channel::D};

inline constexpr std::string_view to_string(Channel c) {
  switch (c) {
    case Channel::H: return "H";
    case Channel::V: return "V";
    case Channel::A: return "A";
    case Channel::D: return "D";
    case Channel::Beacon: return "BEACON";
  }
  return "?";
}

inline Channel channel_from_string(std::string_view s) {
  if (s == "H") return Channel::H;
  if (s == "V") return Channel::V;
  if (s == "A") return Channel::A;
  if (s == "D") return Channel::D;
  if (s == "BEACON") return Channel::Beacon;
  throw Error(ErrorCode::Io, "quantum_receiver", "unknown channel token '" + std::string(s) + "'");
}

// Bit 0 is H in the HV basis and D in the AD basis.
inline Channel channel_for(Basis b, bool bit) {
  if (b == Basis::HV) return bit ? Channel::V : Channel::H;
  return bit ? Channel::A : Channel::D;
}
inline Basis basis_of(Channel c) { return c == Channel::H || c == Channel::V ? Basis::HV : Basis::AD; }
inline bool bit_of(Channel c) { return c == Channel::V || c == Channel::A; }

enum class Origin : std::uint8_t { Signal, Dark, Background, Beacon };

struct TimeTag {
  double time = 0.0;
  Channel channel = Channel::H;
  Origin origin = Origin::Signal;  // ground truth, not exported
  std::int64_t pair = -1;          // emitting pair for signal tags, -1 otherwise
};

struct DetectorModel {
  double efficiency = 0.5;
  double dark_rate = 200.0;         // counts/s per channel
  double dead_time = 50e-9;         // s
  double timing_jitter_rms = 100e-12;  // s

  void validate(std::string_view which) const {
    auto bad = [&](const std::string& what) {
      throw Error(ErrorCode::InvalidConfig, "quantum_receiver", std::string(which) + ": " + what);
    };
    if (!(efficiency >= 0.0 && efficiency <= 1.0)) bad("efficiency must lie in [0, 1]");
    if (!(dark_rate >= 0.0)) bad("dark_rate must be non-negative");
    if (!(dead_time >= 0.0)) bad("dead_time must be non-negative");
    if (!(timing_jitter_rms >= 0.0)) bad("timing_jitter_rms must be non-negative");
  }

  friend bool operator==(const DetectorModel&, const DetectorModel&) = default;
};

/// Ground clock reading for a satellite-clock instant t: t(1+drift)+offset.
struct ClockModel {
  double offset = 0.5e-3;  // s
  double drift = 1e-7;     // s/s

  double to_ground(double t) const { return t * (1.0 + drift) + offset; }
  double to_satellite(double t) const { return (t - offset) / (1.0 + drift); }

  void validate() const {
    if (!(std::fabs(drift) < 1e-4))
      throw Error(ErrorCode::InvalidConfig, "quantum_receiver", "clock drift magnitude must be below 1e-4");
    if (!std::isfinite(offset)) throw Error(ErrorCode::InvalidConfig, "quantum_receiver", "clock offset must be finite");
  }

  friend bool operator==(const ClockModel&, const ClockModel&) = default;
};

/// Ground measurement of one signal photon: random basis, then the outcome
/// predicted by the pair correlation, flipped with probability sin^2 of the
/// residual frame misalignment.
inline Channel measure_polarization(const source::PairEvent& e, double residual_deg, Rng& rng) {
  const Basis b = rng.coin() ? Basis::AD : Basis::HV;
  bool bit;
  if (b == e.idler_basis) {
    bit = e.latent_bit != e.error_flag;
    if (rng.bernoulli(pcs::qber_from_residual(residual_deg))) bit = !bit;
  } else {
    bit = rng.coin();
  }
  return channel_for(b, bit);
}

inline Channel measure_polarization(const source::PairEvent& e, const pcs::ReceiverFrame& frame, double theta_true,
                                    Rng& rng) {
  return measure_polarization(e, pcs::residual_misalignment(theta_true, frame), rng);
}

/// Efficiency, jitter and clock mapping of the arrivals, dark counts on each
/// of `dark_channels` over the satellite-time interval [begin, end], then
/// non-paralyzable dead-time pruning per channel. Output is time sorted.
inline std::vector<TimeTag> apply_detector(const std::vector<TimeTag>& arrivals, const DetectorModel& m,
                                           const ClockModel& clock, double begin, double end, Rng& rng,
                                           std::initializer_list<Channel> dark_channels = {Channel::H, Channel::V,
                                                                                           Channel::A, Channel::D}) {
  std::vector<TimeTag> tags;
  tags.reserve(static_cast<std::size_t>(static_cast<double>(arrivals.size()) * m.efficiency) + 16);
  for (const auto& a : arrivals) {
    if (!rng.bernoulli(m.efficiency)) continue;
    TimeTag t = a;
    t.time = clock.to_ground(a.time + rng.normal(m.timing_jitter_rms));
    tags.push_back(t);
  }
  const double lo = clock.to_ground(begin), hi = clock.to_ground(end);
  for (Channel ch : dark_channels) {
    const auto n = rng.poisson(m.dark_rate * (end - begin));
    for (std::uint64_t i = 0; i < n; ++i) tags.push_back({rng.uniform(lo, hi), ch, Origin::Dark, -1});
  }
  std::stable_sort(tags.begin(), tags.end(), [](const TimeTag& a, const TimeTag& b) { return a.time < b.time; });

  if (m.dead_time > 0.0) {
    std::array<double, 256> last;
    last.fill(-1e300);
    std::vector<TimeTag> kept;
    kept.reserve(tags.size());
    for (const auto& t : tags) {
      double& l = last[static_cast<std::uint8_t>(t.channel)];
      if (t.time - l < m.dead_time) continue;
      l = t.time;
      kept.push_back(t);
    }
    tags.swap(kept);
  }
  return tags;
}

inline std::vector<TimeTag> apply_detector(const std::vector<TimeTag>& arrivals, const DetectorModel& m,
                                           const ClockModel& clock, double begin, double end, std::uint64_t seed) {
  Rng rng(seed);
  return apply_detector(arrivals, m, clock, begin, end, rng);
}

struct ClockEstimate {
  ClockModel clock;
  std::size_t matched = 0;
  double residual_rms = 0.0;  // s
};

/// Recovers (offset, drift) from ground beacon tag times; pulse k of the
/// schedule is emitted at satellite time k/frequency. The pulse phase is
/// located by folding the first tags onto the period in 100 ns bins; tags are
/// then matched pulse by pulse against a running linear fit and a final
/// regression gives the clock. Tags alone fix the offset only modulo one
/// period, so the integer pulse number is taken as the one that puts the
/// offset closest to `offset_prior` (coarse time knowledge, good to better
/// than half a period).
inline ClockEstimate beacon_clock_sync(const std::vector<double>& tags, double frequency, double offset_prior = 0.0) {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::SyncFailed, "quantum_receiver", why); };
  if (!(frequency > 0.0)) fail("beacon frequency must be positive");
  if (tags.size() < 100) fail("only " + std::to_string(tags.size()) + " beacon tags, need at least 100");
  const double period = 1.0 / frequency;

  // coarse phase from a histogram of the first tags folded onto the period
  const double bin = 100e-9;
  const auto nbins = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(period / bin)));
  std::vector<double> hist(nbins, 0.0);
  const std::size_t head = std::min<std::size_t>(tags.size(), 1000);
  const double t0 = tags.front();
  for (std::size_t i = 0; i < head; ++i) {
    double ph = std::fmod(tags[i] - t0, period);
    if (ph < 0.0) ph += period;
    hist[std::min(nbins - 1, static_cast<std::size_t>(ph / bin))] += 1.0;
  }
  const auto peak_it = std::max_element(hist.begin(), hist.end());
  auto sorted = hist;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  if (*peak_it <= 5.0 * std::max(median, 1.0)) fail("beacon correlation peak is ambiguous");
  const double phase = (static_cast<double>(peak_it - hist.begin()) + 0.5) * bin;

  // running fit t = a + b n in coordinates relative to the first inlier
  double ref = 0.0;
  bool have_ref = false;
  double sn = 0, st = 0, snn = 0, snt = 0, cnt = 0;
  double a = 0.0, b = period;
  std::vector<std::pair<long, double>> matched;
  matched.reserve(tags.size());
  const double tol = std::min(2.0 * bin, 0.25 * period);
  for (double t : tags) {
    if (!have_ref) {
      double ph = std::fmod(t - t0, period);
      if (ph < 0.0) ph += period;
      double d = std::fabs(ph - phase);
      d = std::min(d, period - d);
      if (d > 2.0 * bin) continue;
      ref = t;
      have_ref = true;
    }
    const double x = t - ref;
    const long n = std::lround((x - a) / b);
    if (n < 0) continue;
    if (std::fabs(x - (a + b * static_cast<double>(n))) > tol) continue;
    if (!matched.empty() && n <= matched.back().first) continue;
    matched.emplace_back(n, x);
    const double dn = static_cast<double>(n);
    sn += dn;
    st += x;
    snn += dn * dn;
    snt += dn * x;
    cnt += 1.0;
    if (cnt >= 3.0) {
      const double den = cnt * snn - sn * sn;
      if (den > 0.0) {
        b = (cnt * snt - sn * st) / den;
        a = (st - b * sn) / cnt;
      }
    }
  }
  if (matched.size() < 100) fail("only " + std::to_string(matched.size()) + " beacon pulses matched, need 100");

  // final regression on the accepted pulses, centred for conditioning
  double mn = 0, mt = 0;
  for (const auto& [n, x] : matched) {
    mn += static_cast<double>(n);
    mt += x;
  }
  mn /= static_cast<double>(matched.size());
  mt /= static_cast<double>(matched.size());
  double sxx = 0, sxy = 0;
  for (const auto& [n, x] : matched) {
    sxx += (static_cast<double>(n) - mn) * (static_cast<double>(n) - mn);
    sxy += (static_cast<double>(n) - mn) * (x - mt);
  }
  b = sxy / sxx;
  a = mt - b * mn;
  double ss = 0;
  for (const auto& [n, x] : matched) {
    const double r = x - (a + b * static_cast<double>(n));
    ss += r * r;
  }

  const double drift = b / period - 1.0;
  // the first matched tag belongs to pulse j: offset = ref + a - j*b
  const double j = std::round((ref + a - offset_prior) / b);
  ClockEstimate est;
  est.clock.drift = drift;
  est.clock.offset = ref + a - j * b;
  est.matched = matched.size();
  est.residual_rms = std::sqrt(ss / static_cast<double>(matched.size()));
  return est;
}

/// Time stamps of ground tags mapped back onto the satellite clock.
inline std::vector<TimeTag> correct_clock(std::vector<TimeTag> tags, const ClockModel& estimate) {
  for (auto& t : tags) t.time = estimate.to_satellite(t.time);
  return tags;
}

struct CoincidenceResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (index in a, index in b)
  double accidental_estimate = 0.0;                        // expected accidental matches
};

/// Nearest-first greedy matching: every pair of tags closer than window/2 is
/// a candidate; candidates are taken in order of increasing separation and a
/// tag is used at most once. Inputs must be time sorted.
inline CoincidenceResult find_coincidences(const std::vector<TimeTag>& a, const std::vector<TimeTag>& b, double window,
                                           double span = 0.0) {
  CoincidenceResult out;
  if (!(window > 0.0) || a.empty() || b.empty()) return out;
  const double half = window / 2.0;
  struct Cand {
    double sep, key;
    std::size_t i, j;
  };
  std::vector<Cand> cands;
  std::size_t lo = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    while (lo < b.size() && b[lo].time < a[i].time - half) ++lo;
    for (std::size_t j = lo; j < b.size() && b[j].time <= a[i].time + half; ++j)
      cands.push_back({std::fabs(b[j].time - a[i].time), a[i].time + b[j].time, i, j});
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
    if (x.sep != y.sep) return x.sep < y.sep;
    return x.key < y.key;
  });
  std::vector<char> used_a(a.size(), 0), used_b(b.size(), 0);
  for (const auto& c : cands) {
    if (used_a[c.i] || used_b[c.j]) continue;
    used_a[c.i] = used_b[c.j] = 1;
    out.pairs.emplace_back(c.i, c.j);
  }
  std::sort(out.pairs.begin(), out.pairs.end());

  if (span <= 0.0) span = std::max(a.back().time, b.back().time) - std::min(a.front().time, b.front().time);
  if (span > 0.0) {
    const double ra = static_cast<double>(a.size()) / span, rb = static_cast<double>(b.size()) / span;
    out.accidental_estimate = ra * rb * window * span;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tag export: CSV (time_s, channel token) or binary (f64 LE seconds + u8 code).

inline void write_tags_csv(std::ostream& os, const std::vector<TimeTag>& tags) {
  os << "time_s,channel\n";
  char buf[48];
  for (const auto& t : tags) {
    std::snprintf(buf, sizeof buf, "%.15e", t.time);
    os << buf << ',' << to_string(t.channel) << '\n';
  }
}

inline std::vector<TimeTag> read_tags_csv(std::istream& is) {
  std::vector<TimeTag> out;
  std::string line;
  if (!std::getline(is, line)) return out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::Io, "quantum_receiver", "malformed tag row '" + line + "'");
    TimeTag t;
    t.time = std::stod(line.substr(0, comma));
    std::string tok = line.substr(comma + 1);
    if (!tok.empty() && tok.back() == '\r') tok.pop_back();
    t.channel = channel_from_string(tok);
    t.origin = t.channel == Channel::Beacon ? Origin::Beacon : Origin::Signal;
    out.push_back(t);
  }
  return out;
}

inline void write_tags_binary(std::ostream& os, const std::vector<TimeTag>& tags) {
  for (const auto& t : tags) {
    source::detail::put_f64(os, t.time);
    const char code = static_cast<char>(t.channel);
    os.write(&code, 1);
  }
}

inline std::vector<TimeTag> read_tags_binary(std::istream& is) {
  std::vector<TimeTag> out;
  double time;
  while (source::detail::get_f64(is, time)) {
    char code;
    if (!is.read(&code, 1)) throw Error(ErrorCode::Io, "quantum_receiver", "truncated binary tag record");
    const auto c = static_cast<std::uint8_t>(code);
    if (c > 3 && c != 255) throw Error(ErrorCode::Io, "quantum_receiver", "unknown channel code " + std::to_string(c));
    TimeTag t;
    t.time = time;
    t.channel = static_cast<Channel>(c);
    t.origin = t.channel == Channel::Beacon ? Origin::Beacon : Origin::Signal;
    out.push_back(t);
  }
  return out;
}

}  // namespace qkdsim::receiver
