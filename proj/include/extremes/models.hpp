#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <vector>

#include "extremes/common.hpp"
#include "extremes/data.hpp"
#include "extremes/integrate.hpp"
#include "extremes/rng.hpp"
#include "extremes/stats.hpp"

namespace extremes {

// ---------------------------------------------------------------------------
// max-linear
// ---------------------------------------------------------------------------

/// Z_i = max_j a_ij eps_j with nonnegative A whose rows sum to 1, so the
/// margins are standard Frechet.
struct MaxLinearModel {
  Matrix a;  // d x p

  int d() const { return static_cast<int>(a.rows()); }
  int factors() const { return static_cast<int>(a.cols()); }

  explicit MaxLinearModel(Matrix coef) : a(std::move(coef)) {
    if (a.rows() < 1 || a.cols() < 1) throw invalid_input("MaxLinearModel: empty matrix");
    for (int i = 0; i < a.rows(); ++i) {
      double s = 0.0;
      for (int j = 0; j < a.cols(); ++j) {
        if (a(i, j) < 0.0) throw invalid_input("MaxLinearModel: negative coefficient");
        s += a(i, j);
      }
      if (std::abs(s - 1.0) > 1e-12)
        throw invalid_input("MaxLinearModel: row " + std::to_string(i + 1) +
                            " does not sum to 1");
    }
    for (int j = 0; j < a.cols(); ++j)
      if (a.col(j).maxCoeff() <= 0.0)
        throw invalid_input("MaxLinearModel: column " + std::to_string(j + 1) + " is all zero");
  }
};

inline ObservationMatrix simulate_max_linear(const MaxLinearModel& model, int n,
                                             std::uint64_t seed) {
  if (n < 2) throw invalid_input("simulate_max_linear: n >= 2");
  Rng rng(seed);
  const int d = model.d(), p = model.factors();
  Matrix z(n, d);
  for (int r = 0; r < n; ++r) {
    for (int i = 0; i < d; ++i) z(r, i) = 0.0;
    for (int j = 0; j < p; ++j) {
      double eps = rng.frechet();
      for (int i = 0; i < d; ++i) z(r, i) = std::max(z(r, i), model.a(i, j) * eps);
    }
  }
  return ObservationMatrix(std::move(z), {});
}

// ---------------------------------------------------------------------------
// recursive max-linear on a DAG
// ---------------------------------------------------------------------------

struct DagEdge {
  int parent = 0;
  int child = 0;
  double beta = 1.0;  // coefficient beta_{child,parent}
};

/// Z_i = max( max_{j in pa(i)} beta_ij Z_j , beta_ii eps_i ) on a DAG.
struct RecursiveMLModel {
  int dim = 0;
  std::vector<DagEdge> edges;
  std::vector<double> diag;  // beta_ii > 0
  std::vector<int> topo_order;

  RecursiveMLModel(int d_, std::vector<DagEdge> e, std::vector<double> diag_)
      : dim(d_), edges(std::move(e)), diag(std::move(diag_)) {
    if (dim < 1) throw invalid_input("RecursiveMLModel: dimension >= 1");
    if (static_cast<int>(diag.size()) != dim)
      throw invalid_input("RecursiveMLModel: diagonal size mismatch");
    for (double b : diag)
      if (!(b > 0.0)) throw invalid_input("RecursiveMLModel: beta_ii must be positive");
    std::vector<int> indeg(dim, 0);
    std::vector<std::vector<int>> out(dim);
    for (const auto& ed : edges) {
      if (ed.parent < 0 || ed.parent >= dim || ed.child < 0 || ed.child >= dim ||
          ed.parent == ed.child)
        throw invalid_input("RecursiveMLModel: bad edge");
      if (!(ed.beta > 0.0)) throw invalid_input("RecursiveMLModel: edge beta must be positive");
      indeg[ed.child] += 1;
      out[ed.parent].push_back(ed.child);
    }
    std::queue<int> ready;
    for (int i = 0; i < dim; ++i)
      if (indeg[i] == 0) ready.push(i);
    while (!ready.empty()) {
      int v = ready.front();
      ready.pop();
      topo_order.push_back(v);
      for (int w : out[v])
        if (--indeg[w] == 0) ready.push(w);
    }
    if (static_cast<int>(topo_order.size()) != dim)
      throw invalid_input("RecursiveMLModel: graph has a directed cycle");
  }
};

inline ObservationMatrix simulate_recursive_ml(const RecursiveMLModel& model, int n,
                                               std::uint64_t seed) {
  if (n < 2) throw invalid_input("simulate_recursive_ml: n >= 2");
  Rng rng(seed);
  const int d = model.dim;
  std::vector<std::vector<std::pair<int, double>>> parents(d);
  for (const auto& e : model.edges) parents[e.child].push_back({e.parent, e.beta});
  Matrix z(n, d);
  Vector row(d);
  for (int r = 0; r < n; ++r) {
    for (int v : model.topo_order) {
      double val = model.diag[v] * rng.frechet();
      for (const auto& [p, b] : parents[v]) val = std::max(val, b * row[p]);
      row[v] = val;
    }
    z.row(r) = row;
  }
  return ObservationMatrix(std::move(z), {});
}

/// Expand the recursive model into an equivalent d-factor max-linear model:
/// a_ij is the best product of beta coefficients over directed paths from j
/// to i, times beta_jj, with rows rescaled to sum to 1 afterwards. Pairwise
/// extremal dependence is unchanged by the rescaling.
inline MaxLinearModel recursive_to_max_linear(const RecursiveMLModel& model) {
  const int d = model.dim;
  std::vector<std::vector<std::pair<int, double>>> parents(d);
  for (const auto& e : model.edges) parents[e.child].push_back({e.parent, e.beta});
  Matrix a = Matrix::Zero(d, d);
  for (int v : model.topo_order) {
    a(v, v) = model.diag[v];
    for (const auto& [p, b] : parents[v])
      for (int j = 0; j < d; ++j) a(v, j) = std::max(a(v, j), b * a(p, j));
  }
  for (int i = 0; i < d; ++i) a.row(i) /= a.row(i).sum();
  return MaxLinearModel(a);
}

// ---------------------------------------------------------------------------
// logistic
// ---------------------------------------------------------------------------

struct LogisticModel {
  int dim = 0;
  double theta = 0.5;

  LogisticModel(int d_, double theta_) : dim(d_), theta(theta_) {
    if (dim < 2) throw invalid_input("LogisticModel: dimension >= 2");
    if (!(theta > 0.0 && theta < 1.0)) throw invalid_input("LogisticModel: theta in (0,1)");
  }
};

inline double log_logistic_exponent_density(const LogisticModel& model, const Vector& y) {
  const int d = model.dim;
  if (y.size() != d) throw invalid_input("logistic density: dimension mismatch");
  double s = 0.0, logsum = 0.0;
  for (int i = 0; i < d; ++i) {
    if (!(y[i] > 0.0)) throw invalid_input("logistic density: y must be positive");
    s += std::pow(y[i], -1.0 / model.theta);
    logsum += std::log(y[i]);
  }
  double out = (model.theta - d) * std::log(s);
  for (int i = 1; i <= d - 1; ++i) out += std::log(i / model.theta - 1.0);
  out += (-1.0 / model.theta - 1.0) * logsum;
  return out;
}

inline double logistic_exponent_density(const LogisticModel& model, const Vector& y) {
  return std::exp(log_logistic_exponent_density(model, y));
}

/// Max-stable logistic sample via the positive-stable mixture
/// Z_i = (S / E_i)^theta, S positive theta-stable, E_i standard exponential.
inline ObservationMatrix simulate_logistic(const LogisticModel& model, int n,
                                           std::uint64_t seed) {
  if (n < 2) throw invalid_input("simulate_logistic: n >= 2");
  Rng rng(seed);
  Matrix z(n, model.dim);
  for (int r = 0; r < n; ++r) {
    double s = rng.positive_stable(model.theta);
    for (int i = 0; i < model.dim; ++i)
      z(r, i) = std::pow(s / rng.exponential(), model.theta);
  }
  return ObservationMatrix(std::move(z), {});
}

// ---------------------------------------------------------------------------
// Husler-Reiss
// ---------------------------------------------------------------------------

/// Parameterized by a conditionally negative definite variogram matrix Gamma
/// with zero diagonal; Sigma^(m) = (Gamma_im + Gamma_jm - Gamma_ij)/2 over
/// i,j != m must be positive definite.
class HuslerReissModel {
 public:
  explicit HuslerReissModel(Matrix gamma) : gamma_(std::move(gamma)) {
    const int d = static_cast<int>(gamma_.rows());
    if (d < 2 || gamma_.cols() != d) throw invalid_input("HuslerReissModel: need square d >= 2");
    for (int i = 0; i < d; ++i) {
      if (gamma_(i, i) != 0.0) throw invalid_input("HuslerReissModel: diagonal must be zero");
      for (int j = 0; j < d; ++j) {
        if (std::abs(gamma_(i, j) - gamma_(j, i)) > 1e-12)
          throw invalid_input("HuslerReissModel: Gamma not symmetric");
        if (gamma_(i, j) < 0.0) throw invalid_input("HuslerReissModel: Gamma must be nonnegative");
      }
    }
    chol_.resize(d);
    for (int m = 0; m < d; ++m) {
      Matrix s = sigma_anchor(m);
      Eigen::SelfAdjointEigenSolver<Matrix> es(s);
      if (m == 0 && es.eigenvalues().minCoeff() <= 1e-10)
        throw invalid_input(
            "HuslerReissModel: Gamma not conditionally negative definite (Sigma^(1) smallest "
            "eigenvalue " +
            std::to_string(es.eigenvalues().minCoeff()) + ")");
      Eigen::LLT<Matrix> llt(s);
      if (llt.info() != Eigen::Success)
        throw invalid_input("HuslerReissModel: Sigma^(" + std::to_string(m + 1) +
                            ") not positive definite");
      chol_[m] = llt.matrixL();
    }
    lambda1_ = std::make_shared<Lambda1Cache>();
  }

  const Matrix& gamma() const { return gamma_; }
  int d() const { return static_cast<int>(gamma_.rows()); }

  /// Sigma^(m): covariance of the anchored Gaussian representation, indices
  /// in original order with m omitted.
  Matrix sigma_anchor(int m) const {
    const int d = this->d();
    if (m < 0 || m >= d) throw invalid_input("sigma_anchor: anchor out of range");
    Matrix s(d - 1, d - 1);
    int ii = 0;
    for (int i = 0; i < d; ++i) {
      if (i == m) continue;
      int jj = 0;
      for (int j = 0; j < d; ++j) {
        if (j == m) continue;
        s(ii, jj) = 0.5 * (gamma_(i, m) + gamma_(j, m) - gamma_(i, j));
        ++jj;
      }
      ++ii;
    }
    return s;
  }

  const Matrix& chol_anchor(int m) const { return chol_.at(m); }

  /// Exponent measure of E \ [0,1]^d, exact via normal CDFs up to d = 3 and
  /// randomized QMC above (error reported in the result).
  MvnResult lambda1() const {
    std::scoped_lock lock(lambda1_->mutex);
    if (!lambda1_->value) {
      const int d = this->d();
      double total = 0.0, err = 0.0;
      for (int m = 0; m < d; ++m) {
        Vector b(d - 1);
        int ii = 0;
        for (int i = 0; i < d; ++i) {
          if (i == m) continue;
          b[ii++] = gamma_(i, m) / 2.0;
        }
        MvnResult r = mvn_cdf(b, sigma_anchor(m));
        total += r.value;
        err += r.error;
      }
      lambda1_->value = MvnResult{total, err};
    }
    return *lambda1_->value;
  }

 private:
  struct Lambda1Cache {
    std::mutex mutex;
    std::optional<MvnResult> value;
  };
  Matrix gamma_;
  std::vector<Matrix> chol_;  // lower Cholesky of Sigma^(m) per anchor
  std::shared_ptr<Lambda1Cache> lambda1_;
};

/// Log exponent measure density, anchored at m (value is anchor invariant).
inline double log_hr_exponent_density(const HuslerReissModel& model, const Vector& y, int m) {
  const int d = model.d();
  if (y.size() != d) throw invalid_input("hr density: dimension mismatch");
  if (m < 0 || m >= d) throw invalid_input("hr density: anchor out of range");
  for (int i = 0; i < d; ++i)
    if (!(y[i] > 0.0)) throw invalid_input("hr density: y must be positive");
  Vector w(d - 1);
  double loggs = 0.0;
  int ii = 0;
  for (int i = 0; i < d; ++i) {
    if (i == m) continue;
    w[ii++] = std::log(y[i] / y[m]) + model.gamma()(i, m) / 2.0;
    loggs += std::log(y[i]);
  }
  const Matrix& l = model.chol_anchor(m);
  Vector half = l.triangularView<Eigen::Lower>().solve(w);
  double logdet = 0.0;
  for (int i = 0; i < d - 1; ++i) logdet += std::log(l(i, i));
  double logphi = -0.5 * (d - 1) * std::log(2.0 * pi) - logdet - 0.5 * half.squaredNorm();
  return -2.0 * std::log(y[m]) - loggs + logphi;
}

inline double hr_exponent_density(const HuslerReissModel& model, const Vector& y, int m = 0) {
  return std::exp(log_hr_exponent_density(model, y, m));
}

/// Multivariate Pareto density lambda(y)/Lambda_1 on the exceedance support
/// L = {y > 0 : max y_i >= 1}.
inline double hr_pareto_density(const HuslerReissModel& model, const Vector& y) {
  int arg = 0;
  y.maxCoeff(&arg);
  for (int i = 0; i < y.size(); ++i)
    if (!(y[i] > 0.0)) throw invalid_input("hr_pareto_density: y must be positive");
  if (y.maxCoeff() < 1.0) throw invalid_input("hr_pareto_density: y outside the support L");
  return std::exp(log_hr_exponent_density(model, y, arg)) / model.lambda1().value;
}

struct HrSimulation {
  ObservationMatrix data;
  double acceptance_rate = 0.0;
};

/// Exact multivariate Pareto sampler. Proposal: uniform anchor m, a Pareto
/// radius and the anchored log-Gaussian profile exp(N - Gamma_.m / 2); the
/// proposal is corrected to the target (exponent measure restricted to L,
/// normalized) by accepting with probability 1/#{j : Y_j > 1}.
inline HrSimulation simulate_hr_pareto(const HuslerReissModel& model, int n,
                                       std::uint64_t seed) {
  if (n < 2) throw invalid_input("simulate_hr_pareto: n >= 2");
  const int d = model.d();
  Rng rng(seed);
  Matrix out(n, d);
  long long proposals = 0;
  Vector y(d);
  for (int r = 0; r < n;) {
    ++proposals;
    int m = static_cast<int>(rng.integer(d));
    double radius = rng.pareto();
    Vector g = rng.mvn(model.chol_anchor(m));
    int ii = 0;
    int above = 0;
    for (int i = 0; i < d; ++i) {
      if (i == m) {
        y[i] = radius;
      } else {
        y[i] = radius * std::exp(g[ii] - model.gamma()(i, m) / 2.0);
        ++ii;
      }
      if (y[i] > 1.0) ++above;
    }
    if (above >= 1 && rng.uniform() * above <= 1.0) {
      out.row(r) = y;
      ++r;
    }
    if (proposals % 1000000 == 0 && static_cast<double>(r) / proposals < 1e-3)
      throw computation_error("simulate_hr_pareto: acceptance rate below 1e-3");
  }
  HrSimulation sim{ObservationMatrix(std::move(out), {}), 0.0};
  sim.acceptance_rate = static_cast<double>(n) / proposals;
  return sim;
}

/// Bivariate tail dependence coefficient chi(Gamma_ij) for the Husler-Reiss
/// family, by numeric integration of the partially integrated bivariate
/// density over the joint exceedance region. Cached and monotone decreasing.
inline double chi_oracle_hr(double gamma_ij) {
  if (!(gamma_ij >= 0.0)) throw invalid_input("chi_oracle_hr: gamma must be nonnegative");
  if (gamma_ij == 0.0) return 1.0;
  static std::mutex mutex;
  static std::map<double, double> cache;
  {
    std::scoped_lock lock(mutex);
    auto it = cache.find(gamma_ij);
    if (it != cache.end()) return it->second;
  }
  // chi = Lambda(y1>1, y2>1) = int_0^inf e^{-w} Phi((w - g/2)/sqrt(g)) dw,
  // the inner coordinate integrated in closed form.
  const double g = gamma_ij;
  double value = integrate_upper(
      [g](double w) { return std::exp(-w) * normal_cdf((w - g / 2.0) / std::sqrt(g)); }, 0.0,
      1e-12);
  value = std::max(0.0, std::min(1.0, value));
  std::scoped_lock lock(mutex);
  cache[gamma_ij] = value;
  return value;
}

/// Inverse of chi_oracle_hr, used to initialize likelihood fits.
inline double gamma_from_chi(double chi) {
  if (!(chi > 0.0 && chi < 1.0)) throw invalid_input("gamma_from_chi: chi in (0,1)");
  double z = normal_quantile(1.0 - chi / 2.0);
  return 4.0 * z * z;
}

}  // namespace extremes
