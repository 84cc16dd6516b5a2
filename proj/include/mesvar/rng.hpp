#pragma once

#include <cstdint>
#include <random>

namespace mesvar {

using Rng = std::mt19937_64;

// Uniform on (0, 1]; never returns 0 so log() is safe.
inline double draw_uniform(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

// Box-Muller without caching, so the draw sequence is a pure function of the
// engine state (mt19937_64 is bit-exact across platforms).
inline double draw_standard_normal(Rng& rng) {
  const double u1 = draw_uniform(rng);
  const double u2 = draw_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

// Stream seeding for replicate-level determinism regardless of scheduling:
// each (seed, stream) pair yields an independent, reproducible engine.
inline Rng make_stream_rng(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 of the pair, then seed_seq-free direct seeding
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z = z ^ (z >> 31);
  return Rng(z);
}

}  // namespace mesvar
