#pragma once

#include <cmath>
#include <cstdint>

namespace bfpn {

// Counter-based RNG. Every draw is a pure function of (seed, counter, index),
// so parallel execution cannot reorder the stream.
namespace rng {

inline uint64_t mix64(uint64_t x) {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t key2(uint64_t a, uint64_t b) { return mix64(mix64(a) ^ b); }
inline uint64_t key3(uint64_t a, uint64_t b, uint64_t c) {
  return mix64(key2(a, b) ^ c);
}
inline uint64_t key4(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  return mix64(key3(a, b, c) ^ d);
}

// Uniform in [0, 1), 53-bit resolution.
inline double u01(uint64_t key) {
  return static_cast<double>(key >> 11) * 0x1.0p-53;
}

inline double uniform(uint64_t key, double lo, double hi) {
  return lo + (hi - lo) * u01(key);
}

// Uniform integer in [0, n). Bias is negligible for n << 2^64.
inline uint64_t uniform_int(uint64_t key, uint64_t n) { return key % n; }

// Box-Muller from two sub-draws of the key.
inline double normal(uint64_t key) {
  double u1 = u01(mix64(key ^ 0x5bf0'3635'dea2'c7a9ull));
  double u2 = u01(mix64(key ^ 0xc2b2'ae3d'27d4'eb4full));
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace rng

// A (seed, counter) pair naming one stochastic pass. A model forward in a
// stochastic mode consumes the pair as-is; the caller advances the counter
// between passes (MC sample index, training step, ...).
struct RngStream {
  uint64_t seed = 0;
  uint64_t counter = 0;

  RngStream derived(uint64_t salt) const {
    return RngStream{rng::key2(seed, salt), counter};
  }
};

}  // namespace bfpn
