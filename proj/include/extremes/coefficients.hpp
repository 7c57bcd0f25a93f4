#pragma once

#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <vector>

#include "extremes/common.hpp"
#include "extremes/data.hpp"
#include "extremes/rng.hpp"
#include "extremes/stats.hpp"

namespace extremes {

inline bool& warnings_enabled() {
  static bool flag = true;
  return flag;
}

inline void warn(const std::string& msg) {
  if (warnings_enabled()) std::cerr << "extremes: warning: " << msg << '\n';
}

struct ChiEstimate {
  IndexSet subset;
  double level = 0.0;  // q
  double value = 0.0;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
};

struct EtaEstimate {
  IndexSet subset;
  int k_used = 0;
  double value = 0.0;
  std::optional<double> std_err;
};

namespace detail {

/// Count of rows whose empirical df rank/(n+1) exceeds q in every column of I.
inline int joint_exceedance_count(const Matrix& ranks, const IndexSet& subset, double q) {
  const int n = static_cast<int>(ranks.rows());
  const double cut = q * (n + 1.0);  // rank > cut  <=>  rank/(n+1) > q
  int count = 0;
  for (int r = 0; r < n; ++r) {
    bool all = true;
    for (int j : subset)
      if (!(ranks(r, j) > cut)) {
        all = false;
        break;
      }
    if (all) ++count;
  }
  return count;
}

inline double chi_value(const Matrix& ranks, const IndexSet& subset, double q) {
  const int n = static_cast<int>(ranks.rows());
  double v = joint_exceedance_count(ranks, subset, q) / ((1.0 - q) * n);
  return std::max(0.0, std::min(1.0, v));
}

}  // namespace detail

/// Empirical tail dependence coefficient of the variables in `subset` at
/// level q, clipped to [0,1].
inline ChiEstimate chi_hat(const StandardizedSample& sample, const IndexSet& subset, double q) {
  if (subset.size() < 2) throw invalid_input("chi_hat: subset must have at least 2 elements");
  if (!is_sorted_unique(subset)) throw invalid_input("chi_hat: subset must be sorted and unique");
  if (subset.front() < 0 || subset.back() >= sample.d())
    throw invalid_input("chi_hat: subset index out of range");
  if (!(q > 0.0 && q < 1.0)) throw invalid_input("chi_hat: q must be in (0,1)");
  if ((1.0 - q) * sample.n() < 1.0) throw invalid_input("chi_hat: (1-q)*n < 1");
  ChiEstimate est;
  est.subset = subset;
  est.level = q;
  est.value = detail::chi_value(sample.ranks, subset, q);
  return est;
}

/// chi_hat along a q-grid for the pair (i,j), with optional row-resampling
/// bootstrap percentile intervals at 95%.
inline std::vector<ChiEstimate> chi_curve(const StandardizedSample& sample, int i, int j,
                                          const std::vector<double>& q_grid, int n_boot = 0,
                                          std::uint64_t seed = 1) {
  if (i == j) throw invalid_input("chi_curve: need two distinct columns");
  for (std::size_t t = 1; t < q_grid.size(); ++t)
    if (!(q_grid[t] > q_grid[t - 1])) throw invalid_input("chi_curve: grid not increasing");
  if (!q_grid.empty() && !(q_grid.front() > 0.0 && q_grid.back() < 1.0))
    throw invalid_input("chi_curve: grid outside (0,1)");
  IndexSet pair = make_index_set({i, j});

  std::vector<ChiEstimate> out;
  out.reserve(q_grid.size());
  for (double q : q_grid) out.push_back(chi_hat(sample, pair, q));
  if (n_boot <= 0) return out;

  const int n = sample.n();
  Matrix cols(n, 2);
  cols.col(0) = sample.pareto.col(i);
  cols.col(1) = sample.pareto.col(j);
  IndexSet both = {0, 1};
  std::vector<std::vector<double>> reps(q_grid.size());
  Rng rng(seed);
  Matrix resampled(n, 2);
  for (int b = 0; b < n_boot; ++b) {
    for (int r = 0; r < n; ++r) resampled.row(r) = cols.row(static_cast<int>(rng.integer(n)));
    Matrix rr = average_ranks(resampled);
    for (std::size_t t = 0; t < q_grid.size(); ++t) {
      // Self-normalized replicate: the margin exceedance probability is
      // exactly 1-q in the population, so dividing by the realized margin
      // counts pivots out their resampling noise.
      double q = q_grid[t];
      int joint = detail::joint_exceedance_count(rr, both, q);
      int m0 = detail::joint_exceedance_count(rr, {0}, q);
      int m1 = detail::joint_exceedance_count(rr, {1}, q);
      reps[t].push_back(m0 + m1 > 0 ? 2.0 * joint / (m0 + m1) : 0.0);
    }
  }
  auto quantile = [](std::vector<double>& v, double p) {
    std::sort(v.begin(), v.end());
    double pos = p * (v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - lo) * (v[hi] - v[lo]);
  };
  for (std::size_t t = 0; t < q_grid.size(); ++t) {
    out[t].ci_lower = quantile(reps[t], 0.025);
    out[t].ci_upper = quantile(reps[t], 0.975);
  }
  return out;
}

/// Residual tail dependence coefficient via the Hill estimator applied to the
/// min-structure variable T = min_{i in I} pareto_i.
inline EtaEstimate eta_hill(const StandardizedSample& sample, const IndexSet& subset, int k) {
  if (subset.size() < 2) throw invalid_input("eta_hill: subset must have at least 2 elements");
  if (k < 1 || k >= sample.n()) throw invalid_input("eta_hill: need 1 <= k < n");
  const int n = sample.n();
  std::vector<double> t(n);
  for (int r = 0; r < n; ++r) {
    double m = std::numeric_limits<double>::infinity();
    for (int j : subset) m = std::min(m, sample.pareto(r, j));
    t[r] = m;
  }
  EtaEstimate est;
  est.subset = subset;
  est.k_used = k;
  est.value = hill_estimate(std::move(t), k);
  est.std_err = est.value / std::sqrt(static_cast<double>(k));
  return est;
}

/// Empirical exponent measure of E \ [0,z] with k exceedances (the counting
/// estimator with empirical margins).
inline double empirical_exponent_measure(const StandardizedSample& sample, const Vector& z,
                                         int k) {
  const int n = sample.n(), d = sample.d();
  if (z.size() != d) throw invalid_input("empirical_exponent_measure: z dimension mismatch");
  if (k < 1 || k >= n) throw invalid_input("empirical_exponent_measure: need 1 <= k < n");
  for (int j = 0; j < d; ++j) {
    if (!(z[j] > 0.0)) throw invalid_input("empirical_exponent_measure: z must be positive");
    if (k / (n * z[j]) >= 1.0)
      warn("empirical_exponent_measure: margin " + std::to_string(j + 1) +
           " condition vacuous (k/(n*z_j) >= 1)");
  }
  int count = 0;
  for (int r = 0; r < n; ++r) {
    for (int j = 0; j < d; ++j) {
      // F_hat(x) = rank/(n+1) > 1 - k/(n z_j)
      if (sample.ranks(r, j) / (n + 1.0) > 1.0 - k / (n * z[j])) {
        ++count;
        break;
      }
    }
  }
  return static_cast<double>(count) / k;
}

enum class ViolationKind { inclusion_exclusion, chi_monotonicity, eta_monotonicity };

struct Violation {
  ViolationKind kind;
  IndexSet inner;   // I
  IndexSet outer;   // J (empty for inclusion_exclusion)
  double amount;    // size of the violation
};

/// Check the consistency constraints that tail dependence coefficients must
/// satisfy: nonnegative inclusion-exclusion sums and monotonicity of chi and
/// anti-monotonicity of eta under set inclusion.
inline std::vector<Violation> consistency_check(const std::map<IndexSet, double>& chis,
                                                const std::map<IndexSet, double>& etas,
                                                double tol = 1e-9) {
  auto validate_family = [](const std::map<IndexSet, double>& fam, const char* name) {
    if (fam.empty()) return;
    IndexSet universe;
    std::size_t min_size = SIZE_MAX;
    for (const auto& [s, v] : fam) {
      if (s.empty() || !is_sorted_unique(s))
        throw invalid_input(std::string(name) + ": sets must be nonempty, sorted, unique");
      min_size = std::min(min_size, s.size());
      IndexSet u;
      std::set_union(universe.begin(), universe.end(), s.begin(), s.end(),
                     std::back_inserter(u));
      universe = std::move(u);
    }
    if (universe.size() > 24) throw invalid_input(std::string(name) + ": universe too large");
    // every subset of the universe with size >= min_size must be present
    std::size_t expect = 0;
    const std::size_t du = universe.size();
    for (std::size_t m = 1; m < (1ull << du); ++m) {
      if (static_cast<std::size_t>(__builtin_popcountll(m)) >= min_size) ++expect;
    }
    if (fam.size() != expect)
      throw invalid_input(std::string(name) +
                          ": incomplete family (need all subsets of the universe with size >= " +
                          std::to_string(min_size) + ")");
  };
  validate_family(chis, "consistency_check: chi map");
  validate_family(etas, "consistency_check: eta map");

  std::vector<Violation> out;

  // chi: inclusion-exclusion and monotonicity
  if (!chis.empty()) {
    std::vector<std::pair<std::uint32_t, double>> masked;
    IndexSet universe;
    for (const auto& [s, v] : chis) {
      IndexSet u;
      std::set_union(universe.begin(), universe.end(), s.begin(), s.end(),
                     std::back_inserter(u));
      universe = std::move(u);
    }
    auto to_mask = [&](const IndexSet& s) {
      std::uint32_t m = 0;
      for (int x : s) {
        auto it = std::lower_bound(universe.begin(), universe.end(), x);
        m |= 1u << (it - universe.begin());
      }
      return m;
    };
    auto from_mask = [&](std::uint32_t m) {
      IndexSet s;
      for (std::size_t b = 0; b < universe.size(); ++b)
        if (m & (1u << b)) s.push_back(universe[b]);
      return s;
    };
    for (const auto& [s, v] : chis) masked.emplace_back(to_mask(s), v);

    for (const auto& [mi, vi] : masked) {
      double sum = 0.0;
      for (const auto& [mj, vj] : masked) {
        if ((mj & mi) == mi) {
          int extra = __builtin_popcount(mj & ~mi);
          sum += (extra % 2 == 0 ? 1.0 : -1.0) * vj;
          if (extra == 1 && vj > vi + tol)
            out.push_back({ViolationKind::chi_monotonicity, from_mask(mi), from_mask(mj),
                           vj - vi});
        }
      }
      if (sum < -tol)
        out.push_back({ViolationKind::inclusion_exclusion, from_mask(mi), {}, -sum});
    }
    // monotonicity across non-adjacent nestings
    for (const auto& [mi, vi] : masked)
      for (const auto& [mj, vj] : masked)
        if (mi != mj && (mj & mi) == mi && __builtin_popcount(mj & ~mi) > 1 && vj > vi + tol)
          out.push_back({ViolationKind::chi_monotonicity, from_mask(mi), from_mask(mj),
                         vj - vi});
  }

  for (const auto& [si, vi] : etas)
    for (const auto& [sj, vj] : etas)
      if (si != sj && is_subset(si, sj) && vj > vi + tol)
        out.push_back({ViolationKind::eta_monotonicity, si, sj, vj - vi});

  return out;
}

}  // namespace extremes
