#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace rare {

/// Purpose tags separating the independent randomness consumers of one
/// experiment. Streams derived with distinct (seed, path, purpose) triples
/// are statistically independent, so parallel paths reproduce bit-identical
/// output regardless of scheduling order.
enum class StreamPurpose : std::uint64_t {
  kSchedule = 1,
  kInitState = 2,
  kSignalNoise = 3,
  kObsNoise = 4,
  kBootstrap = 5,
};

/// Offsets a purpose tag by a variant index (e.g. the two initial
/// conditions of an ergodicity study draw from variants 0 and 1).
inline std::uint64_t stream_tag(StreamPurpose p, std::uint64_t variant = 0) {
  return static_cast<std::uint64_t>(p) + (variant << 8);
}

/// Counter-derived random stream. The (seed, path, purpose) triple is mixed
/// through SplitMix64 into the state of a xoshiro256** generator; the
/// sequence depends only on the triple, never on global state or thread
/// scheduling. Gaussians come from a Box-Muller pair so results do not
/// depend on the standard library's distribution implementation.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t path, std::uint64_t purpose) {
    std::uint64_t x = seed;
    x = splitmix(x ^ 0x9e3779b97f4a7c15ULL);
    x = splitmix(x ^ path * 0xbf58476d1ce4e5b9ULL);
    x = splitmix(x ^ purpose * 0x94d049bb133111ebULL);
    for (auto& w : s_) {
      x = splitmix(x);
      w = x;
    }
    // xoshiro must not start from the all-zero state
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[3] = 1;
  }

  RngStream(std::uint64_t seed, std::uint64_t path, StreamPurpose purpose)
      : RngStream(seed, path, stream_tag(purpose)) {}

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the sine partner is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rare
