#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace nodesplit {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent stream seed from a root seed and a key path
// (e.g. chain, node hash, purpose).
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t s = splitmix64(root);
  for (auto k : keys) s = splitmix64(s ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return s;
}

using Rng = std::mt19937_64;

namespace purpose {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kProposal = 2;
inline constexpr std::uint64_t kLattice = 3;
inline constexpr std::uint64_t kSimulation = 4;
}  // namespace purpose

}  // namespace nodesplit
