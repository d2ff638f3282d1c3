#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qkdsim {

/// 64-bit FNV-1a hash of a module name.
inline constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Per-module seed: scenario seed XOR hash(module name). An optional stream
/// index (slice number, setting index, ...) is folded in through splitmix64 so
/// that every random process in a run draws from its own generator.
inline constexpr std::uint64_t sub_seed(std::uint64_t seed, std::string_view module) {
  return seed ^ fnv1a64(module);
}

inline constexpr std::uint64_t sub_seed(std::uint64_t seed, std::string_view module,
                                        std::uint64_t stream) {
  return splitmix64(sub_seed(seed, module) ^ splitmix64(stream + 1));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform() < p;
  }
  bool coin() { return (engine_() >> 63) != 0; }
  double normal(double sigma = 1.0) {
    if (sigma == 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, sigma)(engine_);
  }
  double exponential(double rate) { return std::exponential_distribution<double>(rate)(engine_); }
  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    return std::poisson_distribution<std::uint64_t>(mean)(engine_);
  }
  std::uint64_t binomial(std::uint64_t n, double p) {
    if (n == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    return std::binomial_distribution<std::uint64_t>(n, p)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace qkdsim
