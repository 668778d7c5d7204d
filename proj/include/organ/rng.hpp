// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace organ {

// Deterministic 64-bit stream (splitmix64). Self-contained so that corpora,
// training runs and checkpoints are bit-reproducible across platforms and
// standard-library versions. Substreams are derived by hashing (seed, tag),
// which keeps parallel corpus generation order-independent.
class Rng {
public:
  Rng() : state_(0x9e3779b97f4a7c15ull) {}
  explicit Rng(std::uint64_t seed) : state_(mix(seed)) {}

  static Rng child(std::uint64_t seed, std::uint64_t tag) {
    Rng r;
    r.state_ = mix(mix(seed) ^ mix(tag ^ 0xd1b54a32d192ed03ull));
    return r;
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform on [lo, hi], inclusive both ends.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform_real() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on [-b, b].
  double uniform_symmetric(double b) { return (2.0 * uniform_real() - 1.0) * b; }

  bool bernoulli(double p) { return uniform_real() < p; }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace organ
