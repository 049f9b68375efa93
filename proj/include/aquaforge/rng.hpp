#pragma once

#include <cstdint>
#include <stdexcept>

namespace aquaforge {

// Counter-based random stream. Each output is a pure function of (key,
// counter) and child streams derive their key from (key, lane), so a draw is
// fully determined by (seed, split path, draw index) no matter which thread
// runs it.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x6A09E667F3BCC909ULL)) {}

  // Independent child stream; splitting does not advance this stream.
  Rng split(std::uint64_t lane) const {
    Rng child(0);
    child.key_ = mix(key_ ^ mix(0xBB67AE8584CAA73BULL + lane));
    child.counter_ = 0;
    return child;
  }

  std::uint64_t next_u64() {
    return mix(key_ + 0x9E3779B97F4A7C15ULL * ++counter_);
  }

  // Uniform in [0,1) with 53-bit resolution.
  double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi]; lo == hi returns lo exactly.
  double uniform(double lo, double hi) {
    if (lo > hi) throw std::invalid_argument("Rng::uniform: lo > hi");
    return lo + next_unit() * (hi - lo);
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_index: empty range");
    return next_u64() % n;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace aquaforge
