#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string_view>

namespace mcepl {

// All randomness in a run flows from one root seed. Components draw from
// named substreams so that e.g. re-seeding the topology leaves the parameter
// init untouched.

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// FNV-1a, used only to turn a stream name into a 64-bit tag.
inline constexpr std::uint64_t stream_tag(std::string_view name) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                                           std::uint64_t a = 0, std::uint64_t b = 0) noexcept {
  std::uint64_t s = splitmix64(root ^ stream_tag(stream));
  s = splitmix64(s ^ splitmix64(a + 0x1234567ULL));
  s = splitmix64(s ^ splitmix64(b + 0x89ABCDEULL));
  return s;
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t root, std::string_view stream, std::uint64_t a = 0,
                          std::uint64_t b = 0) {
  return Engine{derive_seed(root, stream, a, b)};
}

// Distributions below are written out instead of using <random>'s
// distributions, whose output is implementation-defined.

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

/// Uniform on [lo, hi].
inline double uniform(Engine& eng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(eng);
}

/// Uniform integer in [0, n). Rejection sampling, no modulo bias.
inline std::uint64_t uniform_index(Engine& eng, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = eng();
  while (x >= limit) x = eng();
  return x % n;
}

template <class It>
void shuffle(It first, It last, Engine& eng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = uniform_index(eng, i);
    std::iter_swap(first + (i - 1), first + j);
  }
}

}  // namespace mcepl
