// Deterministic random streams for Monte-Carlo trials.
//
// Every trial draws from its own stream keyed by (seed, stream, substream), so
// results are reproducible bit-for-bit regardless of how trials are scheduled
// across threads. Gaussian variates use Box-Muller on top of the raw engine
// output instead of std::normal_distribution, whose output sequence is not
// pinned by the standard.
#pragma once

#include <cstdint>
#include <random>

#include "sdmimo/common.hpp"

namespace sdmimo {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t substream) {
  std::uint64_t s = splitmix64(seed);
  s = splitmix64(s ^ (0x9E3779B97F4A7C15ULL * (stream + 1)));
  s = splitmix64(s ^ (0xC2B2AE3D27D4EB4FULL * (substream + 1)));
  return s;
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng stream(std::uint64_t seed, std::uint64_t stream,
                    std::uint64_t substream = 0) {
    return Rng(detail::mix_seed(seed, stream, substream));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  // Standard normal N(0, 1).
  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    // u1 in (0, 1] keeps the log finite.
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(2.0 * kPi * u2);
    have_cached_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  // Circularly symmetric complex Gaussian CN(0, variance).
  Complex cgaussian(double variance = 1.0) {
    const double s = std::sqrt(variance / 2.0);
    return Complex(s * gaussian(), s * gaussian());
  }

  // Unit-modulus complex number with uniform phase.
  Complex unit_phase() {
    const double p = uniform(0.0, 2.0 * kPi);
    return Complex(std::cos(p), std::sin(p));
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace sdmimo
