#pragma once

#include <cstdint>
#include <string_view>

namespace qsync {

/// SplitMix64 finalizer (Steele, Lea & Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a of a byte string.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

/// Child seed for a component path such as "sync/epoch/17/timestamps":
/// splitmix64(master ^ splitmix64(fnv1a64(path))).
constexpr std::uint64_t child_seed(std::uint64_t master, std::string_view path) {
  return splitmix64(master ^ splitmix64(fnv1a64(path)));
}

}  // namespace qsync
