#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace dcpnet {

using Rng = std::mt19937_64;

/// Builds a generator from a list of 64-bit words (seed, epoch, index, ...).
inline Rng make_rng(std::initializer_list<std::uint64_t> words) {
  std::vector<std::uint32_t> seq;
  seq.reserve(words.size() * 2);
  for (auto w : words) {
    seq.push_back(static_cast<std::uint32_t>(w & 0xffffffffu));
    seq.push_back(static_cast<std::uint32_t>(w >> 32));
  }
  std::seed_seq ss(seq.begin(), seq.end());
  return Rng(ss);
}

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [lo, hi] (inclusive).
inline int uniform_int(Rng& rng, int lo, int hi) {
  if (hi <= lo) {
    rng();  // keep the draw count independent of the range
    return lo;
  }
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(rng() % span);
}

}  // namespace dcpnet
