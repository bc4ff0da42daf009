// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace svrattn {

// SplitMix64 (Steele, Lea, Flood 2014). Bit-identical on every platform,
// unlike std:: distributions whose output is implementation-defined.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive. Modulo bias is negligible for
  // the tiny ranges used here.
  std::uint64_t range(std::uint64_t lo, std::uint64_t hi) {
    return lo + next() % (hi - lo + 1);
  }

  // Independent stream for trial `index`, so trials can be replayed alone.
  static SplitMix64 for_trial(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 mix(seed ^ (0xd1b54a32d192ed03ULL * (index + 1)));
    return SplitMix64(mix.next());
  }

 private:
  std::uint64_t state_;
};

}  // namespace svrattn
