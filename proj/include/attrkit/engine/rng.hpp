#pragma once

#include <cstdint>

namespace attrkit {

/// Counter-based pseudo-random generator.
///
/// The i-th 64-bit word (i = 1, 2, ...) of stream (seed, stream) is
///
///     key    = mix(seed ^ mix(stream ^ 0xD1B54A32D192ED03))
///     word_i = mix(key + i * 0x9E3779B97F4A7C15)        (mod 2^64)
///
/// where mix(z) is the SplitMix64 finalizer:
///
///     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///     z =  z ^ (z >> 31)
///
/// Derived values:
///   uniform()  = (word >> 11) * 2^-53                      in [0, 1)
///   normal()   = sqrt(-2 ln u1) * cos(2 pi u2), with u1 = ((w1 >> 11) + 1) * 2^-53
///                and u2 = (w2 >> 11) * 2^-53; consumes exactly two words
///   below(n)   = rejection sampling on word % n, rejecting words >= 2^64 - (2^64 mod n)
///
/// Integer words and uniforms are bit-identical on every platform; normal()
/// goes through the C library's log and cos.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  double normal(double mean, double stdev);
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace attrkit
