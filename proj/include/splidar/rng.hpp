#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "splidar/math.hpp"

namespace splidar {

namespace detail {

/// SplitMix64 finalizer; also usable as a 64-bit mixing hash.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Purpose tags for deriving independent random sub-streams from one seed.
enum class StreamTag : std::uint64_t {
  kCount = 1,
  kTimestamps = 2,
  kFirstPhoton = 3,
  kFrame = 4,
  kSweepTrial = 5,
  kScatterTrial = 6,
  kInstance = 7,
  kTrial = 8,
};

/// Counter-based splittable random generator (SplitMix64 stream).
///
/// Streams are keyed by (seed, purpose tag, up to three indices), so any
/// pixel/trial/frame draws the same values regardless of evaluation order
/// or thread count.
class Rng {
 public:
  explicit Rng(std::uint64_t state) : state_(state) {}

  static Rng stream(std::uint64_t seed, StreamTag tag, std::uint64_t i0 = 0,
                    std::uint64_t i1 = 0, std::uint64_t i2 = 0) {
    std::uint64_t h = detail::mix64(seed);
    h = detail::mix64(h ^ static_cast<std::uint64_t>(tag));
    h = detail::mix64(h ^ i0);
    h = detail::mix64(h ^ i1);
    h = detail::mix64(h ^ i2);
    return Rng(h);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform double in (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  /// Exponential with unit rate.
  double exponential() { return -std::log(uniform_pos()); }

  /// Poisson count by exponential inter-arrival accumulation (exact for any
  /// mean; cost grows linearly with the mean, fine at the photon levels here).
  std::uint64_t poisson(double mean) {
    if (mean < 0.0) throw std::invalid_argument("poisson: negative mean");
    if (mean == 0.0) return 0;
    std::uint64_t k = 0;
    double acc = exponential();
    while (acc <= mean) {
      ++k;
      acc += exponential();
    }
    return k;
  }

 private:
  std::uint64_t state_;
};

}  // namespace splidar
