#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace nmod {

// splitmix64 step, used to build independent seed streams from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Counter-based seed derivation: (master, stream, counter) -> seed.
// Identical inputs always give identical seeds, so parallel consumers cannot
// reorder the randomness they see.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t counter) {
  std::uint64_t x = master ^ (0x9e3779b97f4a7c15ull * (stream + 1));
  splitmix64(x);
  x ^= counter * 0xd1342543de82ef95ull;
  return splitmix64(x);
}

// mt19937_64 with hand-rolled uniform/normal so the produced values are pinned
// by this code alone (std distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), n > 0
  int uniform_int(int n) { return static_cast<int>(uniform() * n); }

  // Box-Muller, two uniforms per call, no caching.
  double normal(double mean = 0.0, double sigma = 1.0) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    double u2 = uniform();
    return mean + sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  std::uint64_t next_u64() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace nmod
