#ifndef SPCR_RNG_HPP
#define SPCR_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace spcr {

/// Deterministic RNG stream keyed by (seed, stream).
///
/// The mt19937_64 engine is fully specified by the standard, and the variate
/// transforms below avoid std::*_distribution (whose output sequences are
/// implementation-defined), so identical (seed, stream) pairs reproduce
/// identical draws on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : gen_(mix(mix(seed ^ 0x9e3779b97f4a7c15ull) ^ mix(stream))) {}

  std::uint64_t next() { return gen_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform on [0, n) without modulo bias (Lemire's multiply-shift method).
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  /// Standard normal via Box-Muller; the companion variate is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1] keeps the log finite
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  /// Exponential with unit rate.
  double exponential() { return -std::log(1.0 - uniform01()); }

  /// Deterministic sub-seed for nested components (per-replicate refits and
  /// similar), decorrelated from the (seed, stream) constructor keying.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
    return mix(mix(seed ^ 0xd1b54a32d192ed03ull) ^ mix(tag));
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer; decorrelates nearby (seed, stream) pairs.
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 gen_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace spcr

#endif
