#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "extremes/common.hpp"
#include "extremes/data.hpp"
#include "extremes/faces.hpp"
#include "extremes/rng.hpp"

namespace extremes {

/// Weighted sample of extremal angles on the unit sphere/simplex of `norm`.
struct AngularCloud {
  Matrix angles;  // k x d, rows normalized in `norm`
  Norm norm = Norm::l1;
  std::vector<double> weights;  // nonnegative, sum to 1

  int size() const { return static_cast<int>(angles.rows()); }
  int d() const { return static_cast<int>(angles.cols()); }

  void validate() const {
    if (angles.rows() == 0) throw invalid_input("AngularCloud: empty");
    if (static_cast<int>(weights.size()) != angles.rows())
      throw invalid_input("AngularCloud: weight count mismatch");
    double total = 0.0;
    for (int r = 0; r < angles.rows(); ++r) {
      if (weights[r] < 0.0) throw invalid_input("AngularCloud: negative weight");
      total += weights[r];
      double nr = vector_norm(angles.row(r).transpose(), norm);
      if (std::abs(nr - 1.0) > 1e-12)
        throw invalid_input("AngularCloud: row " + std::to_string(r) + " not normalized");
    }
    if (std::abs(total - 1.0) > 1e-12) throw invalid_input("AngularCloud: weights must sum to 1");
  }
};

inline AngularCloud angular_cloud(const ExceedanceSet& exc) {
  AngularCloud cloud;
  cloud.angles = exc.angles;
  cloud.norm = exc.norm;
  cloud.weights.assign(exc.k, 1.0 / exc.k);
  return cloud;
}

/// 1 - cos(x, y); scale invariant in both arguments.
inline double angular_dissimilarity(const Eigen::Ref<const Vector>& x,
                                    const Eigen::Ref<const Vector>& y) {
  double nx = x.norm(), ny = y.norm();
  if (nx == 0.0 || ny == 0.0) throw invalid_input("angular_dissimilarity: zero vector");
  for (int i = 0; i < x.size(); ++i)
    if (x[i] < 0.0 || y[i] < 0.0)
      throw invalid_input("angular_dissimilarity: negative coordinate");
  double v = 1.0 - x.dot(y) / (nx * ny);
  return std::max(0.0, std::min(1.0, v));
}

struct ClusterResult {
  Matrix centers;  // p x d, rows on the cloud's unit sphere
  std::vector<int> assignment;  // 0-based cluster per angle row
  double cost = 0.0;
  int iterations = 0;
  std::vector<int> counts;          // rows per cluster
  std::vector<double> weight_share; // weight mass per cluster
};

namespace detail {

inline int count_distinct_rows(const Matrix& m) {
  std::set<std::vector<double>> seen;
  for (int r = 0; r < m.rows(); ++r)
    seen.insert(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return static_cast<int>(seen.size());
}

}  // namespace detail

/// Spherical k-means on extremal angles with the 1-cos dissimilarity.
/// Lloyd iteration with k-means++-style seeding, best of `restarts`
/// deterministic restarts (ties by restart index). Rows are processed in a
/// canonical sorted order so the result does not depend on row labeling.
inline ClusterResult spherical_kmeans(const AngularCloud& input, int p, std::uint64_t seed = 1,
                                      int restarts = 25, int max_iterations = 100) {
  input.validate();
  if (restarts < 1) throw invalid_input("spherical_kmeans: restarts >= 1");
  const int k = input.size(), d = input.d();
  if (p < 1) throw invalid_input("spherical_kmeans: p >= 1");
  if (p > detail::count_distinct_rows(input.angles))
    throw invalid_input("spherical_kmeans: p exceeds the number of distinct angle rows");

  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int j = 0; j < d; ++j)
      if (input.angles(a, j) != input.angles(b, j)) return input.angles(a, j) < input.angles(b, j);
    return input.weights[a] < input.weights[b];
  });
  AngularCloud cloud;
  cloud.norm = input.norm;
  cloud.angles.resize(k, d);
  cloud.weights.resize(k);
  for (int r = 0; r < k; ++r) {
    cloud.angles.row(r) = input.angles.row(order[r]);
    cloud.weights[r] = input.weights[order[r]];
  }

  auto diss = [&](const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
    double v = 1.0 - x.dot(y) / (x.norm() * y.norm());
    return std::max(0.0, std::min(1.0, v));
  };

  ClusterResult best;
  best.cost = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < restarts; ++restart) {
    Rng rng(seed, static_cast<std::uint64_t>(restart));

    // k-means++ style seeding on the dissimilarity, weighted by cloud weights
    Matrix centers(p, d);
    std::vector<double> nearest(k, std::numeric_limits<double>::infinity());
    {
      double u = rng.uniform();
      double acc = 0.0;
      int first = k - 1;
      for (int r = 0; r < k; ++r) {
        acc += cloud.weights[r];
        if (u <= acc) {
          first = r;
          break;
        }
      }
      centers.row(0) = cloud.angles.row(first);
    }
    for (int c = 1; c < p; ++c) {
      double total = 0.0;
      for (int r = 0; r < k; ++r) {
        double dd = diss(cloud.angles.row(r).transpose(), centers.row(c - 1).transpose());
        nearest[r] = std::min(nearest[r], dd);
        total += cloud.weights[r] * nearest[r];
      }
      int pick = -1;
      if (total > 0.0) {
        double u = rng.uniform() * total;
        double acc = 0.0;
        for (int r = 0; r < k; ++r) {
          acc += cloud.weights[r] * nearest[r];
          if (u <= acc) {
            pick = r;
            break;
          }
        }
      }
      if (pick < 0) {
        // all remaining points sit on chosen centers; take the first row not
        // equal to an existing center
        for (int r = 0; r < k && pick < 0; ++r) {
          bool dup = false;
          for (int cc = 0; cc < c; ++cc)
            if ((cloud.angles.row(r) - centers.row(cc)).cwiseAbs().maxCoeff() == 0.0) dup = true;
          if (!dup) pick = r;
        }
        if (pick < 0) pick = 0;
      }
      centers.row(c) = cloud.angles.row(pick);
    }

    std::vector<int> assign(k, -1);
    double prev_cost = std::numeric_limits<double>::infinity();
    int iter = 0;
    bool reseeded = false;
    for (iter = 1; iter <= max_iterations; ++iter) {
      // assignment step
      bool changed = false;
      double cost = 0.0;
      for (int r = 0; r < k; ++r) {
        int arg = 0;
        double bestd = std::numeric_limits<double>::infinity();
        for (int c = 0; c < p; ++c) {
          double dd = diss(cloud.angles.row(r).transpose(), centers.row(c).transpose());
          if (dd < bestd) {
            bestd = dd;
            arg = c;
          }
        }
        if (assign[r] != arg) changed = true;
        assign[r] = arg;
        cost += cloud.weights[r] * bestd;
      }
      if (!reseeded && cost > prev_cost + 1e-12)
        throw computation_error("spherical_kmeans: cost increased across an iteration");
      prev_cost = cost;
      if (!changed && iter > 1) break;

      // update step: the cosine-optimal center is the weighted mean of the
      // l2-normalized angles; the result is then renormalized to the cloud
      // norm (the dissimilarity is scale invariant)
      reseeded = false;
      Matrix sums = Matrix::Zero(p, d);
      std::vector<double> mass(p, 0.0);
      for (int r = 0; r < k; ++r) {
        sums.row(assign[r]) += cloud.weights[r] * cloud.angles.row(r) / cloud.angles.row(r).norm();
        mass[assign[r]] += cloud.weights[r];
      }
      for (int c = 0; c < p; ++c) {
        bool empty = true;
        for (int r = 0; r < k; ++r)
          if (assign[r] == c) empty = false;
        if (empty) {
          // re-seed at the point farthest from its current center
          int far = 0;
          double fard = -1.0;
          for (int r = 0; r < k; ++r) {
            double dd = diss(cloud.angles.row(r).transpose(), centers.row(assign[r]).transpose());
            if (dd > fard) {
              fard = dd;
              far = r;
            }
          }
          centers.row(c) = cloud.angles.row(far);
          reseeded = true;
          continue;
        }
        double nr = vector_norm(sums.row(c).transpose(), cloud.norm);
        if (nr > 0.0) centers.row(c) = sums.row(c) / nr;
      }
    }

    double final_cost = 0.0;
    for (int r = 0; r < k; ++r)
      final_cost += cloud.weights[r] *
                    diss(cloud.angles.row(r).transpose(), centers.row(assign[r]).transpose());
    if (final_cost < best.cost) {
      best.centers = centers;
      best.assignment = assign;
      best.cost = final_cost;
      best.iterations = iter;
    }
  }

  // map the assignment back to the caller's row order
  std::vector<int> assignment(k);
  for (int r = 0; r < k; ++r) assignment[order[r]] = best.assignment[r];
  best.assignment = std::move(assignment);

  best.counts.assign(p, 0);
  best.weight_share.assign(p, 0.0);
  for (int r = 0; r < k; ++r) {
    best.counts[best.assignment[r]] += 1;
    best.weight_share[best.assignment[r]] += input.weights[r];
  }
  for (int c = 0; c < p; ++c)
    if (best.counts[c] == 0)
      throw computation_error("spherical_kmeans: empty cluster in final result");
  return best;
}

/// Threshold cluster centers into candidate faces: I_j = {i : c_ji > cut},
/// weighted by the cluster's share of exceedances.
inline FaceSet centers_to_faces(const ClusterResult& result, double cut) {
  if (!(cut > 0.0 && cut < 1.0)) throw invalid_input("centers_to_faces: cut in (0,1)");
  FaceSet out;
  out.method = "cluster";
  out.params = {{"p", result.centers.rows()}, {"cut", cut}};
  std::map<IndexSet, Face> merged;  // clusters may threshold to the same face
  for (int c = 0; c < result.centers.rows(); ++c) {
    IndexSet face;
    for (int j = 0; j < result.centers.cols(); ++j)
      if (result.centers(c, j) > cut) face.push_back(j);
    if (face.empty()) {
      warn("centers_to_faces: cluster " + std::to_string(c + 1) + " produced an empty face");
      continue;
    }
    Face& f = merged[face];
    f.indices = face;
    f.mass += result.weight_share[c];
    f.count += result.counts[c];
  }
  for (auto& [ind, f] : merged) out.faces.push_back(f);
  if (out.faces.empty()) throw invalid_input("centers_to_faces: all faces empty at this cut");
  return out;
}

}  // namespace extremes
