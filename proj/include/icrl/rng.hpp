#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

namespace icrl {

/// Deterministic, serializable PRNG (xoshiro256++ seeded via splitmix64).
/// Every stochastic component in the toolkit draws from this generator so
/// that trajectories, datasets and training runs are bit-reproducible
/// across platforms, independent of the standard library implementation.
class Rng {
 public:
  Rng() : Rng(0) {}

  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  /// Derives an independent stream, e.g. per (task, trajectory) pair.
  static Rng derive(uint64_t seed, uint64_t stream) { return Rng(mix(seed, stream)); }

  /// Stateless seed combiner for documented, reproducible derivations.
  static uint64_t mix(uint64_t a, uint64_t b) {
    return splitmix64_mix(a) ^ splitmix64_mix(b * 0x9e3779b97f4a7c15ULL + 1);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) {
    // Lemire-style rejection-free enough for our n << 2^64 use.
    return static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  /// Standard normal via Box-Muller (one value per call, no cached spare).
  double normal() {
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::array<uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(x);
  }

  static uint64_t splitmix64_mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::array<uint64_t, 4> state_{};
};

}  // namespace icrl
