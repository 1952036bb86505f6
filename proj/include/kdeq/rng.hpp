#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "kdeq/field.hpp"

namespace kdeq {

/// Seeded random source with hand-rolled draw pipelines.
/// std::mt19937_64's output sequence is pinned by the standard; the
/// distributions are not, so uniform/gaussian/bounded draws are implemented
/// here to keep seeded runs bitwise reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  /// Uniform double in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n), rejection sampled.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r = bits();
    while (r >= limit) r = bits();
    return r % n;
  }

  /// Standard normal via Box-Muller; the spare half of each pair is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    if (u1 <= 0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    has_spare_ = true;
    return mag * std::cos(two_pi * u2);
  }

  /// Circularly symmetric complex gaussian with E|z|^2 = sigma^2.
  cplx cgaussian(double sigma = 1.0) {
    const double s = sigma * 0.7071067811865475244;  // sigma/sqrt(2) per component
    const double re = s * gaussian();
    const double im = s * gaussian();
    return {re, im};
  }

  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  ComplexField gaussian_field(int rows, int cols, int channels, double sigma = 1.0) {
    ComplexField f(rows, cols, channels);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = cgaussian(sigma);
    return f;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0;
  bool has_spare_ = false;
};

}  // namespace kdeq
