#pragma once

#include <cmath>
#include <vector>

#include "extremes/angular.hpp"
#include "extremes/common.hpp"
#include "extremes/rng.hpp"

namespace extremes {

/// Eigenstructure of the angular second-moment matrix Sigma = E(Theta Theta^T).
struct ExtremalPCA {
  Matrix sigma;        // d x d, symmetric PSD
  Vector eigenvalues;  // non-increasing, nonnegative
  Matrix eigenvectors; // columns orthonormal, aligned with eigenvalues
  Norm norm = Norm::l2;

  int d() const { return static_cast<int>(sigma.rows()); }
};

/// Weighted second-moment matrix of the angles with a sorted symmetric
/// eigendecomposition. Eigenvector signs follow the convention that the first
/// coordinate of magnitude above 1e-12 is positive.
inline ExtremalPCA estimate_sigma(const AngularCloud& cloud) {
  cloud.validate();
  const int d = cloud.d();
  Matrix sigma = Matrix::Zero(d, d);
  for (int r = 0; r < cloud.size(); ++r) {
    Vector theta = cloud.angles.row(r).transpose();
    sigma.noalias() += cloud.weights[r] * theta * theta.transpose();
  }
  sigma = 0.5 * (sigma + sigma.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> solver(sigma);
  if (solver.info() != Eigen::Success)
    throw computation_error("estimate_sigma: eigendecomposition failed");
  ExtremalPCA out;
  out.sigma = sigma;
  out.norm = cloud.norm;
  out.eigenvalues.resize(d);
  out.eigenvectors.resize(d, d);
  for (int i = 0; i < d; ++i) {  // Eigen sorts ascending; we want non-increasing
    out.eigenvalues[i] = std::max(0.0, solver.eigenvalues()[d - 1 - i]);
    Vector v = solver.eigenvectors().col(d - 1 - i);
    for (int c = 0; c < d; ++c) {
      if (std::abs(v[c]) > 1e-12) {
        if (v[c] < 0.0) v = -v;
        break;
      }
    }
    out.eigenvectors.col(i) = v;
  }
  return out;
}

/// Mean squared reconstruction error of the angles when projected onto the
/// span of the first p eigenvectors. Equals trace(Sigma) minus the leading
/// eigenvalue sum, which is 1 - sum of the first p eigenvalues for l2 clouds.
inline double pca_loss(const ExtremalPCA& pca, int p) {
  if (p < 1 || p > pca.d()) throw invalid_input("pca_loss: need 1 <= p <= d");
  double lead = 0.0;
  for (int i = 0; i < p; ++i) lead += pca.eigenvalues[i];
  return std::max(0.0, pca.sigma.trace() - lead);
}

struct SubspaceDistance {
  double value = 0.0;          // sup over the nonnegative l2 sphere
  double operator_norm = 0.0;  // unrestricted upper bound
};

/// Distance between subspaces: sup over unit vectors in the nonnegative
/// orthant of ||P_S x - P_S2 x||_2, estimated by multi-start projected
/// gradient ascent and bounded above by the operator norm of P_S - P_S2.
inline SubspaceDistance subspace_distance(const Matrix& basis_a, const Matrix& basis_b,
                                          int random_starts = 50, std::uint64_t seed = 7) {
  if (basis_a.rows() != basis_b.rows())
    throw invalid_input("subspace_distance: ambient dimensions differ");
  const int d = static_cast<int>(basis_a.rows());
  auto check_orthonormal = [&](const Matrix& b, const char* name) {
    if (b.cols() < 1 || b.cols() > d) throw invalid_input(std::string(name) + ": bad basis size");
    Matrix g = b.transpose() * b;
    if ((g - Matrix::Identity(b.cols(), b.cols())).cwiseAbs().maxCoeff() > 1e-8)
      throw invalid_input(std::string(name) + ": basis not orthonormal");
  };
  check_orthonormal(basis_a, "subspace_distance: S");
  check_orthonormal(basis_b, "subspace_distance: S'");

  Matrix diff = basis_a * basis_a.transpose() - basis_b * basis_b.transpose();
  Matrix a = diff * diff;  // symmetric PSD; maximize x^T A x on the sphere

  SubspaceDistance out;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a);
  out.operator_norm = std::sqrt(std::max(0.0, solver.eigenvalues().maxCoeff()));

  auto project = [&](Vector x) {
    for (int i = 0; i < d; ++i) x[i] = std::max(0.0, x[i]);
    double n = x.norm();
    if (n == 0.0) {
      x.setZero();
      x[0] = 1.0;
      n = 1.0;
    }
    return Vector(x / n);
  };
  auto objective = [&](const Vector& x) { return x.dot(a * x); };

  auto ascend = [&](Vector x) {
    x = project(x);
    double f = objective(x);
    double step = 1.0;
    for (int it = 0; it < 200; ++it) {
      Vector g = 2.0 * (a * x);
      Vector cand = project(x + step * g);
      double fc = objective(cand);
      if (fc > f + 1e-15) {
        x = cand;
        f = fc;
        step *= 1.5;
      } else {
        step *= 0.5;
        if (step < 1e-12) break;
      }
    }
    return f;
  };

  double best = 0.0;
  // one-hot starts plus the folded top eigenvector, then random starts
  for (int i = 0; i < d; ++i) {
    Vector e = Vector::Zero(d);
    e[i] = 1.0;
    best = std::max(best, ascend(e));
  }
  best = std::max(best, ascend(solver.eigenvectors().col(d - 1).cwiseAbs()));
  Rng rng(seed);
  for (int s = 0; s < random_starts; ++s) {
    Vector x(d);
    for (int i = 0; i < d; ++i) x[i] = std::abs(rng.normal());
    best = std::max(best, ascend(x));
  }
  out.value = std::min(std::sqrt(best), out.operator_norm);
  return out;
}

/// Positive bijection used before projecting: identity above the floor,
/// exponential decay below it, so reconstructions stay strictly positive.
/// The exponent is clamped so the result cannot underflow to zero.
inline double positivity_bijection(double x, double floor_value) {
  if (x >= floor_value) return x;
  return floor_value * std::exp(std::max(x / floor_value - 1.0, -700.0));
}

inline double positivity_bijection_inverse(double y, double floor_value) {
  if (!(y > 0.0)) throw invalid_input("positivity_bijection_inverse: y must be positive");
  return y >= floor_value ? y : floor_value * (1.0 + std::log(y / floor_value));
}

/// Reconstruct rows with the first p principal components: map through the
/// inverse bijection, project onto the leading eigenspace, map back. Output
/// rows are componentwise positive; optionally renormalized to the simplex.
inline Matrix reconstruct(const ExtremalPCA& pca, const Matrix& rows, int p,
                          double bijection_floor = 1e-3, bool renormalize_simplex = false) {
  if (p < 1 || p > pca.d()) throw invalid_input("reconstruct: need 1 <= p <= d");
  if (!(bijection_floor > 0.0)) throw invalid_input("reconstruct: floor must be positive");
  if (rows.cols() != pca.d()) throw invalid_input("reconstruct: dimension mismatch");
  Matrix v = pca.eigenvectors.leftCols(p);
  Matrix out(rows.rows(), rows.cols());
  for (int r = 0; r < rows.rows(); ++r) {
    Vector u(rows.cols());
    for (int j = 0; j < rows.cols(); ++j)
      u[j] = positivity_bijection_inverse(rows(r, j), bijection_floor);
    Vector proj = v * (v.transpose() * u);
    for (int j = 0; j < rows.cols(); ++j)
      out(r, j) = positivity_bijection(proj[j], bijection_floor);
    if (renormalize_simplex) out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace extremes
