#pragma once

// Deterministic random sampling.
//
// std::mt19937_64 is fully specified by the standard, but the std::*_distribution
// adaptors are not, so the samplers here are written out explicitly. Streams
// generated from a given seed are therefore identical across standard libraries.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace qlight {

/// SplitMix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt) noexcept {
  return mix64(master ^ mix64(salt + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view label) noexcept {
  return derive_seed(master, fnv1a64(label));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() { return 1.0 - uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  double exponential(double mean) { return -mean * std::log(uniform_pos()); }

  /// Symmetric two-sided exponential with the given scale.
  double laplace(double scale) {
    const double e = exponential(scale);
    return (engine_() & 1U) ? e : -e;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double theta = 2.0 * 3.14159265358979323846 * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Poisson variate. Inversion for small means, PTRS (Hormann 1993) otherwise.
  std::uint64_t poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    if (mean < 30.0) return poisson_inversion(mean);
    return poisson_ptrs(mean);
  }

  /// Number of failures before the first success, success probability p.
  std::uint64_t geometric(double p) {
    if (p >= 1.0) return 0;
    return static_cast<std::uint64_t>(std::floor(std::log(uniform_pos()) / std::log1p(-p)));
  }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

 private:
  std::uint64_t poisson_inversion(double mean) {
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double prod = uniform_pos();
    while (prod > limit) {
      ++k;
      prod *= uniform_pos();
    }
    return k;
  }

  std::uint64_t poisson_ptrs(double mean) {
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      const double u = uniform() - 0.5;
      const double v = uniform_pos();
      const double us = 0.5 - std::fabs(u);
      const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
      if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
      if (k < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
          -mean + k * loglam - std::lgamma(k + 1.0)) {
        return static_cast<std::uint64_t>(k);
      }
    }
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace qlight
