#pragma once

// Deterministic random number generation for simulation and training.
//
// Every source of randomness in the project flows from a single master seed
// through named substreams, so batch jobs can run scenes/rollouts in parallel
// (each unit owns its stream) without the schedule affecting results.

#include <cstdint>
#include <string_view>

namespace lyap_reach {

// SplitMix64 step: statistically solid for simulation workloads and trivially
// seedable, which is what the substream scheme needs.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a, used to turn substream labels into mixing constants.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Warm up so that seeds 0,1,2,... do not produce correlated first outputs.
    splitmix64(state_);
    splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n), n ≥ 1. Lemire's multiply-shift; bias is
  // negligible for the small ranges used here and the result is deterministic.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Derive an independent substream. Streams are identified by a label plus an
  // index, e.g. substream("scene", 17); derivation never advances this stream.
  Rng substream(std::string_view label, std::uint64_t index = 0) const {
    std::uint64_t s = state_;
    s ^= fnv1a(label);
    s = 0x9e3779b97f4a7c15ULL * (s ^ (s >> 32));
    s ^= 0xd1b54a32d192ed03ULL * (index + 1);
    return Rng(s);
  }

 private:
  std::uint64_t state_;
};

}  // namespace lyap_reach
