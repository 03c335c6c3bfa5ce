#pragma once

#include <cstdint>
#include <random>
#include <initializer_list>

namespace ppe {

// SplitMix64 finalizer (Steele, Lea, Flood). Constants are part of the seeding
// contract; changing them reshuffles every stored run.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for a sweep cell. Mixing is sequential so that (a, b) and (b, a)
/// give different streams.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(master);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream tags so that parameters and initial states of one cell never share a
// generator.
enum class Stream : std::uint64_t {
  Couplings = 1,
  InitialState = 2,
  Sampling = 3,
};

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace ppe
