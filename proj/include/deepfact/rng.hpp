// Counter-based deterministic random numbers. Every draw is a pure function
// of (seed, counter), so parallel or re-ordered generation cannot change the
// values a given experiment sees.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace deepfact::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// Finalizer-style 64-bit mixer (murmur3 constants).
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xFF51AFD7ED558CCDull;
  x ^= x >> 33;
  x *= 0xC4CEB9FE1A85EC53ull;
  x ^= x >> 33;
  return x;
}

inline std::uint64_t hash_counter(std::uint64_t seed, std::uint64_t counter) {
  return mix64(seed + kGolden * (counter + 1));
}

// Derive an independent stream seed, e.g. per trial or per phase.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed ^ mix64(stream + kGolden));
}

// Uniform on [0, 1), 53-bit resolution.
inline double uniform01(std::uint64_t seed, std::uint64_t counter) {
  return static_cast<double>(hash_counter(seed, counter) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller. Draw k consumes counters 2k and 2k+1.
// The first uniform is shifted into (0, 1] so the log is always finite.
inline double gaussian(std::uint64_t seed, std::uint64_t draw) {
  const double u1 =
      static_cast<double>((hash_counter(seed, 2 * draw) >> 11) + 1) * 0x1.0p-53;
  const double u2 = uniform01(seed, 2 * draw + 1);
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

// Unbiased integer in [0, n) by 128-bit multiply rejection.
inline std::uint64_t bounded(std::uint64_t seed, std::uint64_t counter,
                             std::uint64_t n) {
  std::uint64_t c = counter;
  for (;;) {
    const std::uint64_t x = hash_counter(seed, c);
    const unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
    const std::uint64_t lo = static_cast<std::uint64_t>(m);
    if (lo >= n) return static_cast<std::uint64_t>(m >> 64);
    const std::uint64_t threshold = (0 - n) % n;
    if (lo >= threshold) return static_cast<std::uint64_t>(m >> 64);
    c += 0x10000000ull;  // rejected; jump to a fresh counter region
  }
}

// Convenience stateful view over a counter stream.
class Stream {
 public:
  explicit Stream(std::uint64_t seed, std::uint64_t start = 0)
      : seed_(seed), counter_(start) {}

  double next_uniform01() { return uniform01(seed_, counter_++); }
  double next_gaussian() { return gaussian(seed_, counter_++); }
  std::uint64_t next_below(std::uint64_t n) {
    return bounded(seed_, counter_++, n);
  }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

// First k elements of a seeded random permutation of [0, n).
inline std::vector<std::uint64_t> sample_without_replacement(std::uint64_t seed,
                                                             std::uint64_t n,
                                                             std::uint64_t k) {
  std::vector<std::uint64_t> pool(n);
  for (std::uint64_t i = 0; i < n; ++i) pool[i] = i;
  Stream s(seed);
  if (k > n) k = n;
  for (std::uint64_t i = 0; i < k; ++i) {
    const std::uint64_t j = i + s.next_below(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace deepfact::rng
