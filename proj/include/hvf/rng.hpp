#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hvf {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Independent generator for (operation, task index) under one root seed.
inline std::mt19937_64 substream(uint64_t root, std::string_view operation, uint64_t index = 0) {
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (char c : operation) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return std::mt19937_64(splitmix64(splitmix64(root ^ h) + index));
}

// Uniform double in [0,1) from the top 53 bits; stable across standard libraries.
inline double uniform01(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

}  // namespace hvf
