#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "extremes/common.hpp"

namespace extremes {

inline constexpr double pi = 3.14159265358979323846;

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * pi); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double log_normal_cdf(double x) {
  // erfc underflows near -38; switch to the asymptotic tail expansion before that.
  if (x > -20.0) return std::log(normal_cdf(x));
  double x2 = x * x;
  return -0.5 * x2 - 0.5 * std::log(2.0 * pi) - std::log(-x) +
         std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

/// Inverse standard normal CDF (Wichura's AS241, double precision).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw invalid_input("normal_quantile: p outside [0,1]");
  }
  const double q = p - 0.5;
  double r, val;
  if (std::abs(q) <= 0.425) {
    r = 0.180625 - q * q;
    val = q *
          (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
              1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
            1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
          (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
              5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
            4.2313330701600911252e+1) * r + 1.0);
    return val;
  }
  r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
              3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
            4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
            2.05319162663775882187e+0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
            5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

/// Upper-orthant probability P(X > h, Y > k) for standard bivariate normal
/// with correlation r. Genz's hybrid of Drezner--Wesolowsky quadrature and a
/// tail expansion; absolute accuracy about 5e-16.
inline double bvn_upper(double h, double k, double r) {
  if (std::isinf(h) || std::isinf(k)) {
    if (h == std::numeric_limits<double>::infinity() ||
        k == std::numeric_limits<double>::infinity())
      return 0.0;
    if (h == -std::numeric_limits<double>::infinity())
      return k == -std::numeric_limits<double>::infinity() ? 1.0 : normal_cdf(-k);
    return normal_cdf(-h);
  }
  if (r == 0.0) return normal_cdf(-h) * normal_cdf(-k);
  if (r < -1.0 || r > 1.0) throw invalid_input("bvn_upper: correlation outside [-1,1]");

  static const double w6[] = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
  static const double x6[] = {0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
  static const double w12[] = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                               0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
  static const double x12[] = {0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                               0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
  static const double w20[] = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                               0.08327674157670475, 0.1019301198172404,  0.1181945319615184,
                               0.1316886384491766,  0.1420961093183821,  0.1491729864726037,
                               0.1527533871307259};
  static const double x20[] = {0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                               0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                               0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                               0.07652652113349733};
  const double* w = w20;
  const double* x = x20;
  int ng = 10;
  if (std::abs(r) < 0.3) {
    w = w6; x = x6; ng = 3;
  } else if (std::abs(r) < 0.75) {
    w = w12; x = x12; ng = 6;
  }

  const double tp = 2.0 * pi;
  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r) / 2.0;
    for (int i = 0; i < ng; ++i) {
      for (double sgn : {-1.0, 1.0}) {
        double sn = std::sin(asr * (1.0 + sgn * x[i]));
        bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    bvn = bvn * asr / tp + normal_cdf(-h) * normal_cdf(-k);
  } else {
    double kk = k;
    if (r < 0.0) {
      kk = -kk;
      hk = -hk;
    }
    if (std::abs(r) < 1.0) {
      const double as = (1.0 - r) * (1.0 + r);
      const double a = std::sqrt(as);
      const double bs = (h - kk) * (h - kk);
      const double c = (4.0 - hk) / 8.0;
      const double d = (12.0 - hk) / 80.0;
      double asr0 = -(bs / as + hk) / 2.0;
      if (asr0 > -100.0)
        bvn = a * std::exp(asr0) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
      if (hk > -100.0) {
        const double b = std::sqrt(bs);
        const double sp = std::sqrt(tp) * normal_cdf(-b / a);
        bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
      }
      const double ah = a / 2.0;
      double qsum = 0.0;
      for (int i = 0; i < ng; ++i) {
        for (double sgn : {-1.0, 1.0}) {
          double xi = ah * (1.0 + sgn * x[i]);
          double xs = xi * xi;
          double asr1 = -(bs / xs + hk) / 2.0;
          if (asr1 > -100.0) {
            double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
            double rs = std::sqrt(1.0 - xs);
            double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
            qsum += w[i] * std::exp(asr1) * (sp - ep);
          }
        }
      }
      bvn = (ah * qsum - bvn) / tp;
    }
    if (r > 0.0) {
      bvn += normal_cdf(-std::max(h, kk));
    } else if (h >= kk) {
      bvn = -bvn;
    } else {
      double l = h < 0.0 ? normal_cdf(kk) - normal_cdf(h) : normal_cdf(-h) - normal_cdf(-kk);
      bvn = l - bvn;
    }
  }
  return std::max(0.0, std::min(1.0, bvn));
}

/// P(X <= x, Y <= y) for zero-mean bivariate normal with covariance
/// [[s11,s12],[s12,s22]].
inline double bvn_cdf(double x, double y, double s11, double s12, double s22) {
  if (s11 <= 0.0 || s22 <= 0.0) throw invalid_input("bvn_cdf: nonpositive variance");
  double rho = s12 / std::sqrt(s11 * s22);
  rho = std::max(-1.0, std::min(1.0, rho));
  return bvn_upper(-x / std::sqrt(s11), -y / std::sqrt(s22), rho);
}

struct MvnResult {
  double value = 0.0;
  double error = 0.0;  // ~3 sigma of the randomized QMC mean
};

/// P(X <= b) for X ~ N(0, Sigma) in dimension >= 1. Dimensions 1 and 2 are
/// closed form; higher dimensions use Genz's separation-of-variables
/// transform with a randomized Richtmyer rule.
inline MvnResult mvn_cdf(Vector b, Matrix sigma, std::uint64_t seed = 2024,
                         int points = 4096, int shifts = 12) {
  const int m = static_cast<int>(b.size());
  if (sigma.rows() != m || sigma.cols() != m) throw invalid_input("mvn_cdf: shape mismatch");
  if (m == 0) return {1.0, 0.0};
  if (m == 1) return {normal_cdf(b[0] / std::sqrt(sigma(0, 0))), 0.0};
  if (m == 2) return {bvn_cdf(b[0], b[1], sigma(0, 0), sigma(0, 1), sigma(1, 1)), 0.0};

  // Reorder variables by how tight their standardized bound is.
  std::vector<int> ord(m);
  std::iota(ord.begin(), ord.end(), 0);
  std::sort(ord.begin(), ord.end(), [&](int i, int j) {
    return b[i] / std::sqrt(sigma(i, i)) < b[j] / std::sqrt(sigma(j, j));
  });
  Vector bo(m);
  Matrix so(m, m);
  for (int i = 0; i < m; ++i) {
    bo[i] = b[ord[i]];
    for (int j = 0; j < m; ++j) so(i, j) = sigma(ord[i], ord[j]);
  }
  Eigen::LLT<Matrix> llt(so);
  if (llt.info() != Eigen::Success)
    throw invalid_input("mvn_cdf: covariance not positive definite");
  Matrix L = llt.matrixL();

  static const double primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43,
                                  47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101};
  const int dim = m - 1;
  if (dim > 26) throw invalid_input("mvn_cdf: dimension too large");
  std::vector<double> sq(dim);
  for (int j = 0; j < dim; ++j) sq[j] = std::sqrt(primes[j]);

  std::vector<double> shift_means;
  shift_means.reserve(shifts);
  std::uint64_t s = seed;
  auto next_u01 = [&s]() {
    // splitmix64
    s += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z = z ^ (z >> 31);
    return (z >> 11) * 0x1.0p-53;
  };
  for (int sh = 0; sh < shifts; ++sh) {
    std::vector<double> delta(dim);
    for (int j = 0; j < dim; ++j) delta[j] = next_u01();
    double acc = 0.0;
    for (int kpt = 1; kpt <= points; ++kpt) {
      double prod = normal_cdf(bo[0] / L(0, 0));
      double e_prev = prod;
      double y[32];
      for (int i = 1; i < m; ++i) {
        double w = std::abs(2.0 * std::fmod(kpt * sq[i - 1] + delta[i - 1], 1.0) - 1.0);
        double u = std::min(std::max(w * e_prev, 1e-300), 1.0 - 1e-16);
        y[i - 1] = normal_quantile(u);
        double t = bo[i];
        for (int j = 0; j < i; ++j) t -= L(i, j) * y[j];
        e_prev = normal_cdf(t / L(i, i));
        prod *= e_prev;
      }
      acc += (prod - acc) / kpt;
    }
    shift_means.push_back(acc);
  }
  double mean = 0.0;
  for (double v : shift_means) mean += v;
  mean /= shifts;
  double var = 0.0;
  for (double v : shift_means) var += (v - mean) * (v - mean);
  var /= shifts * (shifts - 1);
  return {mean, 3.0 * std::sqrt(var)};
}

/// Log-density of N(0, Sigma) at x.
inline double log_mvn_pdf(const Vector& x, const Matrix& sigma) {
  const int p = static_cast<int>(x.size());
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw invalid_input("log_mvn_pdf: covariance not positive definite");
  Vector half = llt.matrixL().solve(x);
  double logdet = 0.0;
  for (int i = 0; i < p; ++i) logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * p * std::log(2.0 * pi) - logdet - 0.5 * half.squaredNorm();
}

/// Hill estimator: mean log-excess of the k upper order statistics over the
/// (k+1)-th. Estimates the reciprocal tail index of a regularly varying tail.
inline double hill_estimate(std::vector<double> values, int k) {
  const int n = static_cast<int>(values.size());
  if (k < 1 || k >= n) throw invalid_input("hill_estimate: need 1 <= k < n");
  std::nth_element(values.begin(), values.begin() + k, values.end(), std::greater<double>());
  double t = values[k];  // (k+1)-th largest
  if (!(t > 0.0)) throw invalid_input("hill_estimate: nonpositive threshold order statistic");
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += std::log(values[i] / t);
  return s / k;
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 0.0;
};

/// One-sample Kolmogorov-Smirnov test against a continuous CDF, asymptotic
/// p-value with Stephens' small-sample adjustment.
template <typename Cdf>
KsResult ks_test(std::vector<double> sample, Cdf cdf) {
  const int n = static_cast<int>(sample.size());
  if (n < 1) throw invalid_input("ks_test: empty sample");
  std::sort(sample.begin(), sample.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  double sn = std::sqrt(static_cast<double>(n));
  double lambda = d * (sn + 0.12 + 0.11 / sn);
  double p = 0.0;
  for (int j = 1; j <= 100; ++j) {
    double term = 2.0 * std::pow(-1.0, j - 1) * std::exp(-2.0 * j * j * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return {d, std::max(0.0, std::min(1.0, p))};
}

}  // namespace extremes
