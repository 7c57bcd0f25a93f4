#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "extremes/coefficients.hpp"
#include "extremes/common.hpp"
#include "extremes/data.hpp"
#include "extremes/stats.hpp"

namespace extremes {

struct Face {
  IndexSet indices;
  double mass = 0.0;
  int count = 0;
};

/// Collection of variable groups with empirical exponent-measure mass.
struct FaceSet {
  std::vector<Face> faces;
  std::string method;
  nlohmann::json params;

  bool contains(const IndexSet& s) const {
    for (const auto& f : faces)
      if (f.indices == s) return true;
    return false;
  }

  /// Faces not strictly contained in any other face of the set.
  FaceSet maximal() const {
    FaceSet out;
    out.method = method + "+maximal";
    out.params = params;
    for (const auto& f : faces) {
      bool dominated = false;
      for (const auto& g : faces)
        if (f.indices != g.indices && is_subset(f.indices, g.indices)) {
          dominated = true;
          break;
        }
      if (!dominated) out.faces.push_back(f);
    }
    return out;
  }
};

inline void to_json(nlohmann::json& j, const Face& f) {
  std::vector<int> one_based;
  for (int i : f.indices) one_based.push_back(i + 1);
  j = {{"indices", one_based}, {"mass", f.mass}, {"count", f.count}};
}

inline void from_json(const nlohmann::json& j, Face& f) {
  f.indices.clear();
  for (int i : j.at("indices").get<std::vector<int>>()) f.indices.push_back(i - 1);
  std::sort(f.indices.begin(), f.indices.end());
  f.mass = j.at("mass").get<double>();
  f.count = j.at("count").get<int>();
}

inline void to_json(nlohmann::json& j, const FaceSet& s) {
  j = {{"method", s.method}, {"params", s.params}, {"faces", s.faces}};
}

inline void from_json(const nlohmann::json& j, FaceSet& s) {
  s.method = j.at("method").get<std::string>();
  s.params = j.at("params");
  s.faces = j.at("faces").get<std::vector<Face>>();
}

/// Face detection by epsilon-thickened rectangles: each linf exceedance
/// x = row/threshold is assigned to I(x) = {i : x_i > epsilon}; empirical
/// masses are counts normalized by k. Faces with mass > u are returned.
inline FaceSet goix_faces(const ExceedanceSet& exc, double epsilon, double u) {
  if (exc.norm != Norm::linf)
    throw invalid_input("goix_faces: exceedances must be extracted with the linf norm");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw invalid_input("goix_faces: epsilon in (0,1)");
  if (!(u >= 0.0)) throw invalid_input("goix_faces: u must be nonnegative");
  std::map<IndexSet, int> counts;
  for (int r = 0; r < exc.k; ++r) {
    IndexSet face;
    for (int j = 0; j < exc.d(); ++j) {
      // row/threshold > epsilon  <=>  radius*angle > epsilon*threshold
      if (exc.radii[r] * exc.angles(r, j) > epsilon * exc.threshold) face.push_back(j);
    }
    if (!face.empty()) counts[face] += 1;
  }
  FaceSet out;
  out.method = "goix";
  out.params = {{"epsilon", epsilon}, {"u", u}};
  for (const auto& [ind, c] : counts) {
    double mass = static_cast<double>(c) / exc.k;
    if (mass > u) out.faces.push_back({ind, mass, c});
  }
  return out;
}

struct RegionMass {
  double mass = 0.0;
  std::optional<double> rv_index;  // Hill estimate; near 1 indicates face mass
  int count = 0;
};

/// Empirical mass of the region {min_{i in I} X_i > t, max_{i not in I} X_i
/// <= (min_{i in I} X_i)^delta} at t = n/k, with a Hill estimate of the decay
/// of the structure variable on the constrained rows.
inline RegionMass simpson_region_mass(const StandardizedSample& sample, const IndexSet& subset,
                                      double delta, int k) {
  if (subset.empty()) throw invalid_input("simpson_region_mass: empty subset");
  if (!(delta >= 0.0 && delta < 1.0)) throw invalid_input("simpson_region_mass: delta in [0,1)");
  if (k < 1 || k >= sample.n()) throw invalid_input("simpson_region_mass: need 1 <= k < n");
  const int n = sample.n(), d = sample.d();
  const double t = static_cast<double>(n) / k;
  std::vector<double> structure;  // min over I on rows satisfying the max constraint
  int count = 0;
  for (int r = 0; r < n; ++r) {
    double mn = std::numeric_limits<double>::infinity();
    for (int j : subset) mn = std::min(mn, sample.pareto(r, j));
    double mx = 0.0;
    for (int j = 0; j < d; ++j)
      if (!std::binary_search(subset.begin(), subset.end(), j))
        mx = std::max(mx, sample.pareto(r, j));
    // max_{i not in I}(X_i/t) <= t^{delta-1} (min_I X_i/t)^delta simplifies to
    // max <= min^delta
    if (mx <= std::pow(mn, delta) || subset.size() == static_cast<std::size_t>(d)) {
      structure.push_back(mn);
      if (mn > t) ++count;
    }
  }
  RegionMass out;
  out.count = count;
  out.mass = static_cast<double>(count) / k;
  if (count >= 2) {
    double s = 0.0;
    for (double w : structure)
      if (w > t) s += std::log(w / t);
    out.rv_index = s / count;
  }
  return out;
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
inline Vector euclid_simplex_projection(const Vector& x) {
  const int d = static_cast<int>(x.size());
  double total = 0.0;
  for (int i = 0; i < d; ++i) {
    if (x[i] < 0.0) throw invalid_input("euclid_simplex_projection: negative coordinate");
    total += x[i];
  }
  if (total == 0.0) throw invalid_input("euclid_simplex_projection: zero vector");
  std::vector<double> u(x.data(), x.data() + d);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumsum = 0.0, tau = 0.0;
  for (int j = 0; j < d; ++j) {
    cumsum += u[j];
    double cand = (cumsum - 1.0) / (j + 1);
    if (u[j] - cand > 0.0) tau = cand;  // largest feasible rho wins
  }
  Vector y(d);
  for (int i = 0; i < d; ++i) y[i] = std::max(x[i] - tau, 0.0);
  return y;
}

/// Face detection via Euclidean projection of l1 exceedances onto the
/// simplex; the support of the projection is the face, masses are relative
/// frequencies. Faces with mass > u are returned.
inline FaceSet meyer_faces(const ExceedanceSet& exc, double u) {
  if (exc.norm != Norm::l1)
    throw invalid_input("meyer_faces: exceedances must be extracted with the l1 norm");
  if (!(u >= 0.0)) throw invalid_input("meyer_faces: u must be nonnegative");
  std::map<IndexSet, int> counts;
  for (int r = 0; r < exc.k; ++r) {
    Vector x = exc.row(r) / exc.threshold;
    Vector p = euclid_simplex_projection(x);
    IndexSet face;
    for (int j = 0; j < exc.d(); ++j)
      if (p[j] > 0.0) face.push_back(j);
    counts[face] += 1;
  }
  FaceSet out;
  out.method = "meyer";
  out.params = {{"u", u}};
  for (const auto& [ind, c] : counts) {
    double mass = static_cast<double>(c) / exc.k;
    if (mass > u) out.faces.push_back({ind, mass, c});
  }
  return out;
}

enum class AprioriCriterion { cond_chi, eta_test };

inline AprioriCriterion apriori_criterion_from_name(const std::string& s) {
  if (s == "cond_chi") return AprioriCriterion::cond_chi;
  if (s == "eta_test") return AprioriCriterion::eta_test;
  throw invalid_input("unknown apriori criterion: " + s);
}

/// Bottom-up lattice search for maximal groups of concomitantly extreme
/// variables. Groups grow one element at a time while the criterion holds:
///   cond_chi  - chi of the group relative to its parent stays above the
///               threshold,
///   eta_test  - the Hill estimate of eta does not reject eta = 1 (one-sided
///               normal approximation at the given level).
/// Masses reported are chi at q = 1 - k/n.
inline FaceSet apriori_faces(const StandardizedSample& sample, int k, AprioriCriterion criterion,
                             double threshold_or_level, std::size_t frontier_cap = 100000) {
  const int n = sample.n(), d = sample.d();
  if (k < 1 || k >= n) throw invalid_input("apriori_faces: need 1 <= k < n");
  const double q = 1.0 - static_cast<double>(k) / n;
  if (criterion == AprioriCriterion::cond_chi && !(threshold_or_level >= 0.0))
    throw invalid_input("apriori_faces: cond_chi threshold must be nonnegative");
  if (criterion == AprioriCriterion::eta_test &&
      !(threshold_or_level > 0.0 && threshold_or_level < 1.0))
    throw invalid_input("apriori_faces: eta_test level must be in (0,1)");
  const double z = criterion == AprioriCriterion::eta_test
                       ? normal_quantile(1.0 - threshold_or_level)
                       : 0.0;

  auto passes = [&](const IndexSet& group, double parent_chi, double* group_chi) {
    *group_chi = detail::chi_value(sample.ranks, group, q);
    if (criterion == AprioriCriterion::cond_chi) {
      if (parent_chi <= 0.0) return false;
      return *group_chi / parent_chi >= threshold_or_level;
    }
    EtaEstimate eta = eta_hill(sample, group, k);
    return eta.value + z * *eta.std_err >= 1.0;
  };

  std::map<IndexSet, double> survivors;  // all surviving groups with their chi
  std::vector<std::pair<IndexSet, double>> level;
  for (int j = 0; j < d; ++j) {
    IndexSet s = {j};
    double chi = detail::chi_value(sample.ranks, s, q);
    level.push_back({s, chi});
    survivors[s] = chi;
  }

  while (!level.empty()) {
    // join step: extend each group by one trailing element, prune candidates
    // with a non-surviving subset
    std::map<IndexSet, double> parents(level.begin(), level.end());
    std::vector<std::pair<IndexSet, double>> candidates;  // (set, parent chi)
    for (const auto& [g, chi] : level) {
      for (int e = g.back() + 1; e < d; ++e) {
        IndexSet cand = g;
        cand.push_back(e);
        bool all_subsets_ok = true;
        for (std::size_t drop = 0; drop + 1 < cand.size() && all_subsets_ok; ++drop) {
          IndexSet sub = cand;
          sub.erase(sub.begin() + drop);
          if (!parents.count(sub)) all_subsets_ok = false;
        }
        if (all_subsets_ok) candidates.push_back({cand, chi});
        if (candidates.size() > frontier_cap)
          throw computation_error(
              "apriori_faces: candidate frontier exceeded cap of " +
              std::to_string(frontier_cap) + " sets at size " + std::to_string(cand.size()));
      }
    }
    level.clear();
    for (auto& [cand, parent_chi] : candidates) {
      double chi = 0.0;
      if (passes(cand, parent_chi, &chi)) {
        level.push_back({cand, chi});
        survivors[cand] = chi;
      }
    }
  }

  FaceSet out;
  out.method = "apriori";
  out.params = {{"k", k},
                {"criterion", criterion == AprioriCriterion::cond_chi ? "cond_chi" : "eta_test"},
                {"threshold_or_level", threshold_or_level},
                {"note", "cond_chi is the ratio of group chi to parent chi"}};
  for (const auto& [g, chi] : survivors) {
    bool maximal = true;
    for (const auto& [h, c2] : survivors)
      if (g != h && is_subset(g, h)) {
        maximal = false;
        break;
      }
    if (maximal)
      out.faces.push_back(
          {g, chi, detail::joint_exceedance_count(sample.ranks, g, q)});
  }
  return out;
}

enum class GreedyDirection { prune, expand };

struct GreedyStep {
  IndexSet face;
  double chi = 0.0;
};

struct GreedyResult {
  IndexSet face;
  double chi = 0.0;
  std::vector<GreedyStep> trace;
};

/// Greedy hill-climb on a seed face at level q = 1 - k/n. Pruning removes the
/// element whose removal maximally increases chi while the face keeps at
/// least two elements; expansion adds the element that keeps chi highest,
/// subject to chi staying above min_chi.
inline GreedyResult greedy_adjust_face(const StandardizedSample& sample, const IndexSet& seed,
                                       int k, GreedyDirection direction, double min_chi = 0.0) {
  if (seed.empty()) throw invalid_input("greedy_adjust_face: empty seed face");
  if (!is_sorted_unique(seed)) throw invalid_input("greedy_adjust_face: seed not sorted/unique");
  if (k < 1 || k >= sample.n()) throw invalid_input("greedy_adjust_face: need 1 <= k < n");
  const double q = 1.0 - static_cast<double>(k) / sample.n();
  const int d = sample.d();

  GreedyResult res;
  res.face = seed;
  res.chi = detail::chi_value(sample.ranks, seed, q);
  res.trace.push_back({res.face, res.chi});

  while (true) {
    IndexSet best_face;
    double best_chi = -1.0;
    if (direction == GreedyDirection::prune && res.face.size() > 2) {
      for (std::size_t drop = 0; drop < res.face.size(); ++drop) {
        IndexSet cand = res.face;
        cand.erase(cand.begin() + drop);
        double chi = detail::chi_value(sample.ranks, cand, q);
        if (chi > best_chi) {
          best_chi = chi;
          best_face = cand;
        }
      }
      if (best_chi <= res.chi) break;  // no strict improvement
    } else if (direction == GreedyDirection::expand) {
      for (int e = 0; e < d; ++e) {
        if (std::binary_search(res.face.begin(), res.face.end(), e)) continue;
        IndexSet cand = res.face;
        cand.insert(std::upper_bound(cand.begin(), cand.end(), e), e);
        double chi = detail::chi_value(sample.ranks, cand, q);
        if (chi > best_chi) {
          best_chi = chi;
          best_face = cand;
        }
      }
      if (best_face.empty() || best_chi < min_chi) break;  // nothing admissible
    } else {
      break;
    }
    res.face = best_face;
    res.chi = best_chi;
    res.trace.push_back({res.face, res.chi});
  }
  return res;
}

}  // namespace extremes
