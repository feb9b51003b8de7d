#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace jersey {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Random stream. The engine is std::mt19937_64 (fully specified by the
/// standard); the distributions are implemented here because the standard
/// library ones are implementation-defined and would break cross-toolchain
/// reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling removes modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::iter_swap(first + static_cast<std::ptrdiff_t>(i - 1), first + static_cast<std::ptrdiff_t>(j));
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Seed value with hierarchical stream splitting. `child(a).child(b)` gives an
/// independent substream per (a, b) path, so results never depend on the
/// order in which work items are processed.
class AugSeed {
 public:
  constexpr AugSeed() = default;
  constexpr explicit AugSeed(std::uint64_t value) : value_(value) {}

  constexpr std::uint64_t value() const { return value_; }

  constexpr AugSeed child(std::uint64_t index) const {
    return AugSeed(detail::splitmix64(value_ ^ detail::splitmix64(index + 0x632BE59BD9B4E019ULL)));
  }

  constexpr AugSeed child(std::initializer_list<std::uint64_t> path) const {
    AugSeed s = *this;
    for (auto p : path) s = s.child(p);
    return s;
  }

  /// Stream for one kernel application on one image.
  Rng stream(std::uint64_t image_index, std::uint64_t kernel_index) const {
    return Rng(child({image_index, kernel_index}).value_);
  }

  Rng rng() const { return Rng(detail::splitmix64(value_)); }

  friend constexpr bool operator==(AugSeed, AugSeed) = default;

 private:
  std::uint64_t value_ = 0;
};

}  // namespace jersey
