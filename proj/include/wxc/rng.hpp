#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "wxc/tensor.hpp"

namespace wxc {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Combine a base seed with stream coordinates (step, sample index, ...)
/// into an independent per-sample seed.
inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t s = splitmix64(base ^ 0x5851f42d4c957f2dULL);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ (b + 0x9e3779b97f4a7c15ULL));
  s = splitmix64(s ^ (c + 0x2545f4914f6cdd1dULL));
  return s;
}

/// Seeded generator with platform-stable output. std::mt19937_64 is fully
/// specified by the standard; the value transforms below avoid the
/// implementation-defined std distributions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  int64_t uniform_int(int64_t n) {
    require(n > 0, "uniform_int: n must be positive");
    return static_cast<int64_t>((static_cast<__uint128_t>(engine_()) * static_cast<uint64_t>(n)) >> 64);
  }

  /// Standard normal via Box-Muller (pair cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * M_PI * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  void fill_normal(Tensor& t, double mean = 0.0, double stddev = 1.0) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = normal(mean, stddev);
  }
  void fill_uniform(Tensor& t, double lo = 0.0, double hi = 1.0) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
  }

  /// k distinct indices drawn uniformly from [0, n), returned sorted.
  std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k) {
    require(0 <= k && k <= n, "sample_without_replacement: bad k");
    std::vector<int64_t> pool(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    for (int64_t i = 0; i < k; ++i) {
      const int64_t j = i + uniform_int(n - i);
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    pool.resize(static_cast<size_t>(k));
    std::sort(pool.begin(), pool.end());
    return pool;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace wxc
