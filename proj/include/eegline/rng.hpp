#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace eegline {

// All randomized components draw through these helpers so that results are
// reproducible across standard libraries (std::uniform_* distributions are
// implementation-defined; mt19937_64 itself is fully specified).

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed derivation for substreams (per epoch, per layer, per iteration).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

// Uniform on [0, 1).
inline double uniform_real(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform on [lo, hi], inclusive, via rejection sampling.
inline std::int64_t uniform_int(std::mt19937_64& rng, std::int64_t lo,
                                std::int64_t hi) {
  if (lo >= hi) return lo;
  const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return lo + static_cast<std::int64_t>(x % range);
}

inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_real(rng);
}

template <typename T>
void shuffle_indices(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace eegline
