// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random number generation.
//
// Everything that draws randomness in this codebase goes through the
// splitmix64 generator below instead of <random> engines/distributions.
// The standard distributions are not guaranteed to produce identical
// streams across library implementations; splitmix64 plus an explicit
// Box-Muller transform gives us bit-identical weights and samples on
// every platform, which the reproducibility tests rely on.
#pragma once

#include <cmath>
#include <cstdint>

namespace sde::rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Derives a child seed from a parent seed and a stream index.  Seeds form a
// tree: master seed -> run -> question -> agent/round.  Mixing the index
// through splitmix64 keeps sibling streams statistically independent.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  std::uint64_t s = parent ^ ((index + 1) * 0xD1B54A32D192ED03ull);
  return splitmix64(s);
}

// A small stateful stream of uniform and gaussian variates.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform double in [0, 1), 53 bits of randomness.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller.  Pairs are generated together and the
  // spare is cached, so a single stream yields a reproducible sequence.
  float next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    const double u2 = next_double();
    constexpr double kTwoPi = 6.28318530717958647692;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = static_cast<float>(r * std::sin(kTwoPi * u2));
    have_spare_ = true;
    return static_cast<float>(r * std::cos(kTwoPi * u2));
  }

 private:
  std::uint64_t state_;
  float spare_ = 0.0f;
  bool have_spare_ = false;
};

}  // namespace sde::rng
