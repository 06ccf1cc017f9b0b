#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dfrd {

using Rng = std::mt19937_64;

/// Mixes a base seed with a path of stream tags (splitmix64 finalizer per
/// step). Every stochastic stream in a run is keyed this way from the master
/// seed, so streams never share state and adding a consumer does not shift
/// any other stream.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(base, path));
}

// Stream tags used under the master seed.
namespace stream {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kPartition = 2;
inline constexpr std::uint64_t kTestSplit = 3;
inline constexpr std::uint64_t kGlobalInit = 4;
inline constexpr std::uint64_t kGeneratorInit = 5;
inline constexpr std::uint64_t kClientSampling = 6;
inline constexpr std::uint64_t kExtraction = 7;
inline constexpr std::uint64_t kClientTraining = 8;
inline constexpr std::uint64_t kServer = 9;
inline constexpr std::uint64_t kReinit = 10;
}  // namespace stream

}  // namespace dfrd
