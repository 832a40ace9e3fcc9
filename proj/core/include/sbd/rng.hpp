#pragma once

#include <cstdint>
#include <random>

namespace sbd {

/// Independent random streams derived from the global seed. Each consumer
/// keys its generator by (seed, stream, index) so that iteration k of a
/// training run draws the same numbers whether or not it was resumed.
enum class Stream : std::uint64_t {
  kPhantomSeeds = 1,
  kInit = 2,
  kRpnIteration = 3,
  kSegIteration = 4,
  kValidation = 5,
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return std::mt19937_64(mix_seed(seed, static_cast<std::uint64_t>(stream), index));
}

/// Uniform integer in [0, n) without the implementation-defined behaviour of
/// std::uniform_int_distribution.
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);
/// Uniform double in [0, 1).
double uniform01(std::mt19937_64& rng);

}  // namespace sbd
