#pragma once
#include <cmath>
#include <cstdint>
#include <vector>

// Deterministic randomness. Everything is derived from explicit 64-bit seeds
// via splitmix64 so that runs are bit-reproducible across platforms; the
// standard <random> distributions are avoided because their output is
// implementation defined.

namespace ham::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Combine a seed with tags (layer index, element index, epoch, ...) into a
// fresh stream seed. Order of tags matters.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t t0, std::uint64_t t1 = 0,
                            std::uint64_t t2 = 0) {
  std::uint64_t h = splitmix64(seed ^ 0x8c7f43aa61d3e055ULL);
  h = splitmix64(h ^ t0);
  h = splitmix64(h ^ t1);
  h = splitmix64(h ^ t2);
  return h;
}

// Uniform double in [0,1) from 64 random bits.
inline double to_u01(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Counter-based generator: stateless apart from the counter, replayable.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_bits() { return splitmix64(seed_ + 0x9e3779b97f4a7c15ULL * (++counter_)); }
  double u01() { return to_u01(next_bits()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // Box-Muller on two fresh uniforms; u is kept away from 0.
    double u = 0.0;
    do {
      u = u01();
    } while (u <= 0.0);
    double v = u01();
    double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(6.283185307179586476925286766559 * v);
    has_spare_ = true;
    return r * std::cos(6.283185307179586476925286766559 * v);
  }

  // Fisher-Yates over indices 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_bits() % i);
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stateless Bernoulli used for dropout masks: element i of a given layer/draw
// is kept iff this returns true. Replayable by construction.
inline bool keep_element(std::uint64_t seed, std::uint64_t tag, std::uint64_t index,
                         double keep_prob) {
  return to_u01(derive(seed, tag, index)) < keep_prob;
}

}  // namespace ham::rng
