#pragma once

#include <cstdint>
#include <random>

namespace csprobe {

using Rng = std::mt19937_64;

/// Independent random streams drawn from one master seed.
enum class Stream : std::uint64_t {
  Dynamics = 0,
  Photons = 1,
  Bootstrap = 2,
  Oracle = 3,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based seed derivation. This is part of the file-level contract:
///
///   s0   = splitmix64(master ^ (0xD1B54A32D192ED03 * (stream + 1)))
///   s1   = splitmix64(s0 ^ bin)
///   seed = splitmix64(s1 ^ (trace + 0x632BE59BD9B4E019))
///
/// The seed of a trace depends only on (master, stream, bin, trace), never on
/// execution order.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                           std::uint64_t bin, std::uint64_t trace) {
  const std::uint64_t s0 =
      splitmix64(master ^ (0xD1B54A32D192ED03ULL * (static_cast<std::uint64_t>(stream) + 1)));
  const std::uint64_t s1 = splitmix64(s0 ^ bin);
  return splitmix64(s1 ^ (trace + 0x632BE59BD9B4E019ULL));
}

}  // namespace csprobe
