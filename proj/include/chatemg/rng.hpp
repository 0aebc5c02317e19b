// Seed derivation for independent deterministic RNG streams. Every stochastic
// component derives its engine from (master seed, tags...) so results do not
// depend on scheduling or evaluation order.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace chatemg {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  return derive_seed(seed, fnv1a64(tag));
}

template <class... Rest>
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt, Rest... rest) {
  return derive_seed(derive_seed(seed, salt), rest...);
}

template <class... Rest>
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, Rest... rest) {
  return derive_seed(derive_seed(seed, tag), rest...);
}

using RngEngine = std::mt19937_64;

inline RngEngine make_rng(std::uint64_t seed) { return RngEngine(seed); }

}  // namespace chatemg
