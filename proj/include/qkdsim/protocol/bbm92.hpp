#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "qkdsim/core/error.hpp"
#include "qkdsim/core/random.hpp"
#include "qkdsim/receiver/receiver.hpp"
#include "qkdsim/source/photon_source.hpp"

namespace qkdsim::protocol {

using receiver::Channel;
using source::Basis;

/// One coincidence as seen by the two parties.
struct MatchedPair {
  Channel ground = Channel::H;
  Channel onboard = Channel::H;
  bool genuine = false;  // both tags from the same pair (simulation ground truth)
};

struct SiftedKey {
  std::vector<std::uint8_t> bits;          // ground side
  std::vector<std::uint8_t> partner_bits;  // onboard side, convention applied
  std::vector<Basis> basis_per_bit;

  std::size_t size() const { return bits.size(); }
};

struct SiftResult {
  SiftedKey key;
  std::size_t discarded = 0;  // mismatched bases
};

/// Keeps the coincidences where both sides measured in the same basis. The
/// onboard bit is flipped under an anticorrelated state so that error-free
/// pairs agree.
inline SiftResult sift(const std::vector<MatchedPair>& matches, source::StateConvention convention) {
  SiftResult r;
  const bool anti = source::anticorrelated(convention);
  for (const auto& m : matches) {
    const Basis b = receiver::basis_of(m.ground);
    if (b != receiver::basis_of(m.onboard)) {
      ++r.discarded;
      continue;
    }
    r.key.bits.push_back(receiver::bit_of(m.ground));
    r.key.partner_bits.push_back(receiver::bit_of(m.onboard) != anti);
    r.key.basis_per_bit.push_back(b);
  }
  return r;
}

struct QberEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t sample_size = 0;
  std::size_t errors = 0;
  std::vector<std::uint8_t> disclosed;  // 1 where the bit was revealed
};

inline double true_qber(const SiftedKey& key) {
  if (key.bits.empty()) throw Error(ErrorCode::EmptyKey, "bbm92_pipeline", "sifted key is empty");
  std::size_t e = 0;
  for (std::size_t i = 0; i < key.bits.size(); ++i) e += key.bits[i] != key.partner_bits[i];
  return static_cast<double>(e) / static_cast<double>(key.bits.size());
}

/// Disagreement rate on a random subset of round(n*sample_fraction) bits.
inline QberEstimate estimate_qber(const SiftedKey& key, double sample_fraction, Rng& rng) {
  if (key.bits.empty()) throw Error(ErrorCode::EmptyKey, "bbm92_pipeline", "sifted key is empty");
  if (!(sample_fraction > 0.0 && sample_fraction < 1.0))
    throw Error(ErrorCode::OutOfRange, "bbm92_pipeline", "sample_fraction must lie in (0, 1)");
  const std::size_t n = key.bits.size();
  const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * sample_fraction)));
  if (m < 100) warn("LowSample", "QBER sample of " + std::to_string(m) + " bits is below 100");

  // partial Fisher-Yates over the indices
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  QberEstimate q;
  q.disclosed.assign(n, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = i + static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(0, n - 1 - i)(rng.engine()));
    std::swap(idx[i], idx[j]);
    q.disclosed[idx[i]] = 1;
    q.errors += key.bits[idx[i]] != key.partner_bits[idx[i]];
  }
  q.sample_size = m;
  q.estimate = static_cast<double>(q.errors) / static_cast<double>(m);
  q.std_error = std::sqrt(q.estimate * (1.0 - q.estimate) / static_cast<double>(m));
  return q;
}

inline QberEstimate estimate_qber(const SiftedKey& key, double sample_fraction, std::uint64_t seed) {
  Rng rng(seed);
  return estimate_qber(key, sample_fraction, rng);
}

inline double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

/// Asymptotic key fraction 1 - 2 h2(q), floored at zero.
inline double secret_fraction(double qber) {
  if (!(qber >= 0.0 && qber <= 0.5))
    throw Error(ErrorCode::OutOfRange, "bbm92_pipeline", "qber " + std::to_string(qber) + " outside [0, 0.5]");
  return std::max(0.0, 1.0 - 2.0 * binary_entropy(qber));
}

inline std::uint64_t secret_bits(std::size_t sifted, double fraction, double sample_fraction) {
  const double v = std::floor(static_cast<double>(sifted) * fraction * (1.0 - sample_fraction));
  return v > 0.0 ? static_cast<std::uint64_t>(v) : 0;
}

}  // namespace qkdsim::protocol
