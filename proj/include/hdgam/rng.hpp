#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace hdgam {

/// Deterministic random source. Every draw is an explicit transform of
/// mt19937_64 output words, so a given seed reproduces the same stream on any
/// platform this builds on (std::*_distribution is deliberately avoided).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; the companion value is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Exponential with the given mean (gamma with shape 1, scale = mean).
  /// Never returns exactly zero so the draw stays inside the gamma support.
  double exponential(double mean) {
    double u = uniform01();
    while (u <= 0.0) u = uniform01();
    return -mean * std::log(u);
  }

  bool bernoulli(double prob) { return uniform01() < prob; }

  /// Poisson draw: Knuth's product method for small means, Hormann's PTRD
  /// transformed rejection for large means.
  long poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    if (mean < 30.0) return poisson_knuth(mean);
    return poisson_ptrd(mean);
  }

  std::uint64_t next_u64() { return gen_(); }

 private:
  long poisson_knuth(double mean) {
    const double limit = std::exp(-mean);
    long k = 0;
    double prod = 1.0;
    do {
      ++k;
      prod *= uniform01();
    } while (prod > limit);
    return k - 1;
  }

  long poisson_ptrd(double mean) {
    const double smu = std::sqrt(mean);
    const double b = 0.931 + 2.53 * smu;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    const double log_mu = std::log(mean);
    while (true) {
      const double u = uniform01() - 0.5;
      double v = uniform01();
      const double us = 0.5 - std::abs(u);
      const long k = static_cast<long>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
      if (us >= 0.07 && v <= v_r) return k;
      if (k < 0 || (us < 0.013 && v > us)) continue;
      const double lhs = std::log(v * inv_alpha / (a / (us * us) + b));
      const double rhs = k * log_mu - mean - std::lgamma(static_cast<double>(k) + 1.0);
      if (lhs <= rhs) return k;
    }
  }

  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace hdgam
