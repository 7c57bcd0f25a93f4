#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "extremes/common.hpp"
#include "extremes/stats.hpp"

namespace extremes {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Deterministic RNG. Sub-streams derived from a master seed and a stream id
/// are independent for practical purposes and reproducible across runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}
  Rng(std::uint64_t seed, std::uint64_t stream)
      : engine_(splitmix64(splitmix64(seed) ^ (0x9e3779b97f4a7c15ull * (stream + 1)))) {}

  /// Uniform on the open interval (0,1).
  double uniform() {
    double u;
    do {
      u = (engine_() >> 11) * 0x1.0p-53;
    } while (u <= 0.0 || u >= 1.0);
    return u;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  std::uint64_t integer(std::uint64_t n) {  // uniform on {0,...,n-1}
    std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
    return d(engine_);
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u = uniform(), v = uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(2.0 * pi * v);
    have_spare_ = true;
    return r * std::cos(2.0 * pi * v);
  }

  double exponential() { return -std::log(uniform()); }

  /// Standard Frechet: P(X <= x) = exp(-1/x).
  double frechet() { return -1.0 / std::log(uniform()); }

  /// Standard Pareto on [1, inf): P(X > x) = 1/x.
  double pareto() { return 1.0 / uniform(); }

  /// Positive alpha-stable with Laplace transform exp(-t^alpha), 0 < alpha < 1
  /// (Kanter's representation).
  double positive_stable(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
      throw invalid_input("positive_stable: alpha must be in (0,1)");
    double u = pi * uniform();
    double w = exponential();
    double a = std::sin((1.0 - alpha) * u) *
               std::pow(std::sin(alpha * u), alpha / (1.0 - alpha)) /
               std::pow(std::sin(u), 1.0 / (1.0 - alpha));
    return std::pow(a / w, (1.0 - alpha) / alpha);
  }

  /// Draw N(0, Sigma) given a precomputed lower Cholesky factor.
  Vector mvn(const Matrix& chol_lower) {
    Vector z(chol_lower.rows());
    for (int i = 0; i < z.size(); ++i) z[i] = normal();
    return chol_lower * z;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace extremes
