#pragma once

#include <cstdint>
#include <string_view>

namespace melsmooth::rng {

// SplitMix64 (Steele/Lea/Flood; Vigna's public-domain constants). The state
// advances by the golden-gamma increment and each output is the finalizer of
// the new state, so the stream is a pure function of the seed.
struct SplitMix64 {
  std::uint64_t state = 0;

  explicit constexpr SplitMix64(std::uint64_t seed = 0) : state(seed) {}

  constexpr std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) using the top 53 bits.
  constexpr double next_double() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }
};

// 64-bit FNV-1a over the raw bytes of a string.
inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic per-(seed, step, utterance) stream seed.
inline constexpr std::uint64_t mix_seed(std::uint64_t base_seed,
                                        std::uint64_t step,
                                        std::string_view utterance_id) {
  return base_seed ^ step ^ fnv1a64(utterance_id);
}

}  // namespace melsmooth::rng
