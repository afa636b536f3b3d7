#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace navlab {

using Rng = std::mt19937_64;

// splitmix64 finalizer
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for a (seed, stream ids...) tuple.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> streams = {}) {
  std::uint64_t s = mix_seed(seed);
  for (std::uint64_t id : streams) s = mix_seed(s ^ mix_seed(id + 0x632be59bd9b4e019ULL));
  return Rng(s);
}

inline double gaussian(Rng& rng, double mean, double stddev) {
  if (stddev <= 0.0) return mean;
  return std::normal_distribution<double>(mean, stddev)(rng);
}

}  // namespace navlab
