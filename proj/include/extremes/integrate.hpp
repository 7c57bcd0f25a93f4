#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "extremes/common.hpp"
#include "extremes/rng.hpp"

namespace extremes {

/// Adaptive Gauss-Kronrod on a finite interval.
template <typename F>
double integrate(F f, double a, double b, double tol = 1e-10) {
  return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 15, tol);
}

/// Integral over [a, inf).
template <typename F>
double integrate_upper(F f, double a, double tol = 1e-10) {
  boost::math::quadrature::exp_sinh<double> integrator;
  return integrator.integrate([&](double t) { return f(a + t); }, tol);
}

struct QmcResult {
  double value = 0.0;
  double error = 0.0;  // ~3 sigma across random shifts
};

inline double halton_point(std::uint64_t index, int base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * (index % base);
    index /= base;
  }
  return r;
}

/// Randomized QMC integral of f over the exceedance support
/// L = { y >= 0 : max_i y_i >= 1 }, for integrands decaying at least like
/// |y|^{-(d+1)}. Coordinates are mapped through y = 1/u - 1.
template <typename F>
QmcResult integrate_over_exceedance_support(F f, int d, int points = 32768, int shifts = 8,
                                            std::uint64_t seed = 71) {
  static const int bases[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
  if (d > 10) throw invalid_input("integrate_over_exceedance_support: dimension too large");
  std::vector<double> means;
  means.reserve(shifts);
  Rng rng(seed);
  Vector y(d);
  for (int s = 0; s < shifts; ++s) {
    std::vector<double> shift(d);
    for (int j = 0; j < d; ++j) shift[j] = rng.uniform();
    double acc = 0.0;
    for (int k = 1; k <= points; ++k) {
      double jac = 1.0;
      bool in_support = false;
      for (int j = 0; j < d; ++j) {
        double u = halton_point(k, bases[j]) + shift[j];
        u -= std::floor(u);
        u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
        y[j] = 1.0 / u - 1.0;
        jac /= u * u;
        if (y[j] >= 1.0) in_support = true;
      }
      double v = in_support ? f(y) * jac : 0.0;
      acc += (v - acc) / k;
    }
    means.push_back(acc);
  }
  double mean = 0.0;
  for (double v : means) mean += v;
  mean /= shifts;
  double var = 0.0;
  for (double v : means) var += (v - mean) * (v - mean);
  var /= shifts * (shifts - 1);
  return {mean, 3.0 * std::sqrt(var)};
}

}  // namespace extremes
