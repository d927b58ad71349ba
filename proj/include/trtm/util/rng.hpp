#pragma once

#include <cmath>
#include <cstdint>

namespace trtm::util {

// Deterministic splitmix64 stream. All stochastic choices in the pipeline go
// through this so that runs are reproducible from a single seed, independent
// of platform RNG implementations.
inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Mixes a seed with a stream index so independent work units (samples,
// records, epochs) get decorrelated streams.
inline uint64_t derive_stream(uint64_t seed, uint64_t index) {
  uint64_t s = seed ^ (0x9e3779b97f4a7c15ull + (index << 1) + (index >> 3));
  splitmix64(s);
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Standard normal via Box-Muller; caches the second deviate.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  uint64_t state_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace trtm::util
