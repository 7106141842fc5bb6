#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace scc {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for the stream named `purpose` at position `index` under `seed`.
/// Streams never share state, so call order cannot change any draw.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::string_view purpose,
                                    std::uint64_t index = 0) {
  return mix64(mix64(seed ^ fnv1a(purpose)) + mix64(index));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0) {
  return Engine(stream_seed(seed, purpose, index));
}

}  // namespace scc
