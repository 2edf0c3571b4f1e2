// Counter-based hashing RNG. Every draw is a pure function of (seed, counters),
// so lattice values need no sequential state and are reproducible per cell.
#pragma once

#include <cstdint>

#include "stochunfold/common.hpp"

namespace stochunfold {

// splitmix64 finalizer step.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return mix64(seed ^ (v + 0x9E3779B97F4A7C15ull + (seed << 6) + (seed >> 2)));
}

inline std::uint64_t lattice_hash(std::uint64_t seed, const Idx3& z) {
  std::uint64_t h = seed;
  h = hash_combine(h, static_cast<std::uint64_t>(z[0]));
  h = hash_combine(h, static_cast<std::uint64_t>(z[1]));
  h = hash_combine(h, static_cast<std::uint64_t>(z[2]));
  return h;
}

// [0, 1)
inline double to_unit(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// [-1, 1)
inline double to_symmetric(std::uint64_t h) { return 2.0 * to_unit(h) - 1.0; }

// Stateless stream: draw(i) is the i-th value of the stream named `seed`.
struct HashStream {
  std::uint64_t seed;
  std::uint64_t counter = 0;
  explicit HashStream(std::uint64_t s) : seed(s) {}
  std::uint64_t next_u64() { return hash_combine(seed, counter++); }
  double next_unit() { return to_unit(next_u64()); }
  double next_symmetric() { return to_symmetric(next_u64()); }
};

}  // namespace stochunfold
