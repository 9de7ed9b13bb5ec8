#pragma once

#include <cstdint>
#include <random>

namespace nishlab {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kDropout = 3;
inline constexpr std::uint64_t kNoiseTrain = 4;
inline constexpr std::uint64_t kNoiseTest = 5;
inline constexpr std::uint64_t kSplit = 6;
inline constexpr std::uint64_t kLayer = 1000;
}  // namespace streams

}  // namespace nishlab
