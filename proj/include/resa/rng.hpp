#pragma once

// ---------------------------------------------------------------------------
// Deterministic pseudorandom generator: xoshiro256** seeded through
// SplitMix64. The 64-bit integer stream is reproducible across runs and
// platforms for a given seed. split() derives an independent child stream
// (advancing the parent by one draw), which is how the trainer hands separate
// streams to data generation, augmentation, initialization and evaluation.
// State is four 64-bit words and can be serialized for exact resume.
// ---------------------------------------------------------------------------

#include <array>
#include <cmath>
#include <cstdint>

namespace resa {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t v, int k) {
  return (v << k) | (v >> (64 - k));
}

}  // namespace detail

class Rng {
 public:
  Rng() : Rng(0) {}

  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = detail::splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl64(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53 significant bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. Uses two uniforms per draw and keeps no
  // cache, so the stream position is a pure function of the call count.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t threshold = (0ULL - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Child stream keyed by `stream`; advances this generator by one draw.
  Rng split(std::uint64_t stream) {
    std::uint64_t mix = next_u64() ^ (stream * 0x9e3779b97f4a7c15ULL);
    return Rng(detail::splitmix64(mix));
  }

  std::array<std::uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

 private:
  std::array<std::uint64_t, 4> state_{};
};

}  // namespace resa
