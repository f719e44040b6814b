#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace madp {

// splitmix64 finalizer. Used to derive decorrelated stream seeds from a
// (seed, salt) pair so parallel trials stay reproducible.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return mix64(seed ^ mix64(salt));
}

// Deterministic RNG wrapper. Double conversion is done by hand so output is
// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform in (0, 1).
  double uniform01() {
    return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Zero-mean Laplace via inverse CDF; scale <= 0 yields exactly 0.
  double laplace(double scale) {
    if (!(scale > 0)) return 0.0;
    double u = uniform01() - 0.5;
    return -scale * (u < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(u));
  }

  // Uniform integer in [lo, hi).
  long uniform_int(long lo, long hi) {
    return lo + static_cast<long>(uniform01() * static_cast<double>(hi - lo));
  }

  // Index sampled proportionally to non-negative weights.
  std::size_t pick_weighted(const std::vector<double>& w) {
    double total = 0;
    for (double x : w) total += x;
    double u = uniform01() * total;
    double acc = 0;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
      acc += w[i];
      if (u < acc) return i;
    }
    return w.empty() ? 0 : w.size() - 1;
  }

  std::uint64_t next_u64() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace madp
