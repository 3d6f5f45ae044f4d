#pragma once

// Seed derivation for reproducible substreams: every worker (multistart
// index, perturbation sample, ...) gets an engine keyed by the master seed
// and its stream labels, so results do not depend on scheduling.

#include <cstdint>
#include <random>

namespace spinrestore {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t label_a,
                                 std::uint64_t label_b = 0) {
  std::uint64_t x = mix64(master);
  x = mix64(x ^ (label_a + 0x9e3779b97f4a7c15ull));
  x = mix64(x ^ (label_b + 0xbf58476d1ce4e5b9ull));
  return x;
}

inline std::mt19937_64 make_engine(std::uint64_t master, std::uint64_t label_a,
                                   std::uint64_t label_b = 0) {
  return std::mt19937_64(derive_seed(master, label_a, label_b));
}

}  // namespace spinrestore
