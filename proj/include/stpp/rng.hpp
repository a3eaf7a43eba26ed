#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace stpp::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named substreams so every consumer of randomness draws from its own
// generator; parallel and serial execution then see identical streams.
enum class Stream : std::uint64_t {
  Thinning = 1,
  ReferenceSample = 2,
  ParamInit = 3,
  Shuffle = 4,
  KMeans = 5,
  Spectral = 6,
  TestData = 7,
};

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
  return splitmix64(seed ^ splitmix64(tag ^ splitmix64(index)));
}

inline std::mt19937_64 engine(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return std::mt19937_64(mix(seed, static_cast<std::uint64_t>(stream), index));
}

// Uniform in [0, 1) with 53-bit resolution. Hand-rolled transforms below keep
// draws independent of the standard library's distribution implementations.
inline double uniform01(std::mt19937_64& g) {
  return double(g() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

inline double exponential(std::mt19937_64& g, double rate) {
  return -std::log1p(-uniform01(g)) / rate;
}

// Unbiased integer in [0, n).
inline std::size_t below(std::mt19937_64& g, std::size_t n) {
  const std::uint64_t bound = n;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = g();
  } while (x >= limit);
  return std::size_t(x % bound);
}

}  // namespace stpp::rng
