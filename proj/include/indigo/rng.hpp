#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace indigo {

// Deterministic, platform-independent RNG: splitmix64 core with Box-Muller
// normals. Every source of randomness in the project flows from one of these,
// seeded explicitly; there is no global RNG state.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // log(0) is avoided by flooring the first uniform away from zero.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  std::vector<float> normal_vec(size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(normal());
    return v;
  }

  // Independent child stream; used to give each dataset item / image / chain
  // its own seed so iteration order and parallelism cannot change results.
  static uint64_t derive(uint64_t master, uint64_t stream) {
    Rng r(master ^ (0x517cc1b727220a95ULL * (stream + 1)));
    return r.next_u64();
  }

 private:
  uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace indigo
