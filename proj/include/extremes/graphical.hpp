#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "extremes/coefficients.hpp"
#include "extremes/common.hpp"
#include "extremes/data.hpp"
#include "extremes/integrate.hpp"
#include "extremes/models.hpp"
#include "extremes/stats.hpp"

namespace extremes {

// ---------------------------------------------------------------------------
// graphs
// ---------------------------------------------------------------------------

enum class GraphKind { tree, block, general };

inline std::string graph_kind_name(GraphKind k) {
  switch (k) {
    case GraphKind::tree: return "tree";
    case GraphKind::block: return "block";
    case GraphKind::general: return "general";
  }
  return "general";
}

struct ExtremalGraph {
  int d = 0;
  std::vector<std::pair<int, int>> edges;  // i < j, sorted
  GraphKind kind = GraphKind::general;
  std::vector<IndexSet> cliques;     // blocks for tree/block graphs
  std::vector<IndexSet> separators;  // singleton separators with multiplicity

  bool has_edge(int i, int j) const {
    if (i > j) std::swap(i, j);
    return std::binary_search(edges.begin(), edges.end(), std::make_pair(i, j));
  }
  std::vector<int> neighbors(int v) const {
    std::vector<int> out;
    for (auto [a, b] : edges) {
      if (a == v) out.push_back(b);
      if (b == v) out.push_back(a);
    }
    return out;
  }
};

namespace detail {

struct BlockStructure {
  bool connected = false;
  std::vector<IndexSet> blocks;  // biconnected components as vertex sets
  std::map<std::pair<int, int>, int> edge_block;  // edge -> block id
};

inline BlockStructure biconnected_components(int d, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<std::pair<int, int>>> adj(d);  // (neighbor, edge id)
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    adj[edges[e].first].push_back({edges[e].second, e});
    adj[edges[e].second].push_back({edges[e].first, e});
  }
  std::vector<int> disc(d, -1), low(d, 0);
  std::vector<int> edge_stack;
  BlockStructure out;
  int timer = 0;
  int visited = 0;

  std::function<void(int, int)> dfs = [&](int v, int parent_edge) {
    disc[v] = low[v] = timer++;
    ++visited;
    for (auto [w, e] : adj[v]) {
      if (e == parent_edge) continue;
      if (disc[w] == -1) {
        edge_stack.push_back(e);
        dfs(w, e);
        low[v] = std::min(low[v], low[w]);
        if (low[w] >= disc[v]) {
          IndexSet verts;
          int id = static_cast<int>(out.blocks.size());
          while (true) {
            int top = edge_stack.back();
            edge_stack.pop_back();
            out.edge_block[edges[top]] = id;
            verts.push_back(edges[top].first);
            verts.push_back(edges[top].second);
            if (top == e) break;
          }
          std::sort(verts.begin(), verts.end());
          verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
          out.blocks.push_back(std::move(verts));
        }
      } else if (disc[w] < disc[v]) {
        edge_stack.push_back(e);
        low[v] = std::min(low[v], disc[w]);
      }
    }
  };
  if (d > 0) dfs(0, -1);
  out.connected = visited == d;
  return out;
}

}  // namespace detail

/// Classify the graph and derive its clique/separator structure. Trees and
/// block graphs get blocks as cliques and cut vertices (with multiplicity) as
/// singleton separators.
inline ExtremalGraph make_graph(int d, std::vector<std::pair<int, int>> edges) {
  if (d < 1) throw invalid_input("make_graph: d >= 1");
  for (auto& [a, b] : edges) {
    if (a == b || a < 0 || b < 0 || a >= d || b >= d) throw invalid_input("make_graph: bad edge");
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  ExtremalGraph g;
  g.d = d;
  g.edges = std::move(edges);

  auto bs = detail::biconnected_components(d, g.edges);
  bool all_cliques = true;
  bool all_edges = true;
  for (const auto& block : bs.blocks) {
    const int s = static_cast<int>(block.size());
    if (s > 2) all_edges = false;
    int internal = 0;
    for (std::size_t i = 0; i < block.size(); ++i)
      for (std::size_t j = i + 1; j < block.size(); ++j)
        if (g.has_edge(block[i], block[j])) ++internal;
    if (internal != s * (s - 1) / 2) all_cliques = false;
  }
  if (bs.connected && all_edges &&
      static_cast<int>(g.edges.size()) == d - 1) {
    g.kind = GraphKind::tree;
  } else if (bs.connected && all_cliques) {
    g.kind = GraphKind::block;
  } else {
    g.kind = GraphKind::general;
    return g;
  }
  g.cliques = bs.blocks;
  std::vector<int> block_count(d, 0);
  for (const auto& block : bs.blocks)
    for (int v : block) block_count[v] += 1;
  for (int v = 0; v < d; ++v)
    for (int c = 1; c < block_count[v]; ++c) g.separators.push_back({v});
  return g;
}

inline bool is_valid_block_graph(const ExtremalGraph& g, int max_clique) {
  if (g.kind != GraphKind::tree && g.kind != GraphKind::block) return false;
  for (const auto& c : g.cliques)
    if (static_cast<int>(c.size()) > max_clique) return false;
  return true;
}

inline void to_json(nlohmann::json& j, const ExtremalGraph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (auto [a, b] : g.edges) edges.push_back({a + 1, b + 1});
  j = {{"d", g.d}, {"edges", edges}, {"kind", graph_kind_name(g.kind)}};
}

inline void from_json(const nlohmann::json& j, ExtremalGraph& g) {
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : j.at("edges"))
    edges.push_back({e[0].get<int>() - 1, e[1].get<int>() - 1});
  g = make_graph(j.at("d").get<int>(), std::move(edges));
}

// ---------------------------------------------------------------------------
// Husler-Reiss precision and conditional independence
// ---------------------------------------------------------------------------

/// K^(m) = (Sigma^(m))^{-1}; rows/columns follow the original variable order
/// with the anchor omitted.
inline Matrix hr_precision(const HuslerReissModel& model, int m) {
  Matrix s = model.sigma_anchor(m);
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success)
    throw invalid_input("hr_precision: Sigma^(m) not positive definite");
  return llt.solve(Matrix::Identity(s.rows(), s.cols()));
}

struct CiPattern {
  std::vector<std::pair<int, int>> non_edges;
  std::vector<std::pair<int, int>> anchor_mismatch;  // pairs where two anchors disagree
};

/// Model-implied conditional independencies: pair {i,j} is a non-edge when
/// the precision entry (or the row sum, for pairs involving the anchor)
/// vanishes within tol. Cross-validated against a second anchor.
inline CiPattern ci_pattern(const HuslerReissModel& model, double tol = 1e-8, int anchor = 0,
                            int check_anchor = 1) {
  const int d = model.d();
  auto pattern_for = [&](int m) {
    Matrix k = hr_precision(model, m);
    std::vector<int> orig;  // row index in K -> original variable
    for (int i = 0; i < d; ++i)
      if (i != m) orig.push_back(i);
    std::set<std::pair<int, int>> non_edges;
    for (int a = 0; a < d - 1; ++a) {
      double rowsum = k.row(a).sum();
      if (std::abs(rowsum) <= tol)
        non_edges.insert(std::minmax(orig[a], m));
      for (int b = a + 1; b < d - 1; ++b)
        if (std::abs(k(a, b)) <= tol) non_edges.insert(std::minmax(orig[a], orig[b]));
    }
    return non_edges;
  };
  auto first = pattern_for(anchor);
  auto second = pattern_for(check_anchor);
  CiPattern out;
  out.non_edges.assign(first.begin(), first.end());
  std::set<std::pair<int, int>> sym;
  std::set_symmetric_difference(first.begin(), first.end(), second.begin(), second.end(),
                                std::inserter(sym, sym.begin()));
  out.anchor_mismatch.assign(sym.begin(), sym.end());
  if (!out.anchor_mismatch.empty())
    warn("ci_pattern: anchors disagree on " + std::to_string(out.anchor_mismatch.size()) +
         " pairs (numerical instability)");
  return out;
}

/// Complete a variogram from per-edge values by summing along the unique
/// paths of the tree.
inline Matrix tree_gamma(const ExtremalGraph& tree, const std::vector<double>& edge_gammas) {
  if (tree.kind != GraphKind::tree) throw invalid_input("tree_gamma: graph is not a tree");
  if (edge_gammas.size() != tree.edges.size())
    throw invalid_input("tree_gamma: need one value per edge");
  for (double g : edge_gammas)
    if (!(g > 0.0)) throw invalid_input("tree_gamma: edge values must be positive");
  const int d = tree.d;
  std::vector<std::vector<std::pair<int, double>>> adj(d);
  for (std::size_t e = 0; e < tree.edges.size(); ++e) {
    auto [a, b] = tree.edges[e];
    adj[a].push_back({b, edge_gammas[e]});
    adj[b].push_back({a, edge_gammas[e]});
  }
  Matrix gamma = Matrix::Zero(d, d);
  for (int s = 0; s < d; ++s) {
    std::vector<bool> seen(d, false);
    std::vector<int> stack = {s};
    seen[s] = true;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (auto [w, g] : adj[v]) {
        if (seen[w]) continue;
        seen[w] = true;
        gamma(s, w) = gamma(s, v) + g;
        stack.push_back(w);
      }
    }
  }
  return gamma;
}

// ---------------------------------------------------------------------------
// tree densities
// ---------------------------------------------------------------------------

struct EdgeDensity {
  enum class Family { husler_reiss, logistic };
  Family family = Family::husler_reiss;
  double param = 1.0;  // Gamma_ij or theta

  static EdgeDensity hr(double gamma) { return {Family::husler_reiss, gamma}; }
  static EdgeDensity logistic(double theta) { return {Family::logistic, theta}; }
};

/// Multivariate Pareto distribution factorizing over a tree from bivariate
/// exponent measure densities. When every edge is Husler-Reiss the normalizer
/// is exact (the composed model is again Husler-Reiss with path-summed
/// variogram); otherwise it is computed by randomized QMC with reported error.
class TreeParetoModel {
 public:
  TreeParetoModel(ExtremalGraph tree, std::vector<EdgeDensity> densities)
      : tree_(std::move(tree)), densities_(std::move(densities)) {
    if (tree_.kind != GraphKind::tree) throw invalid_input("TreeParetoModel: graph not a tree");
    if (densities_.size() != tree_.edges.size())
      throw invalid_input("TreeParetoModel: need one density per edge");
    bool all_hr = true;
    for (const auto& e : densities_) {
      if (e.family == EdgeDensity::Family::husler_reiss) {
        if (!(e.param > 0.0)) throw invalid_input("TreeParetoModel: HR edge gamma must be > 0");
        Matrix g(2, 2);
        g << 0.0, e.param, e.param, 0.0;
        edge_models_.push_back(std::make_shared<HuslerReissModel>(std::move(g)));
      } else {
        if (!(e.param > 0.0 && e.param < 1.0))
          throw invalid_input("TreeParetoModel: logistic theta in (0,1)");
        edge_models_.push_back(nullptr);
        all_hr = false;
      }
    }
    if (all_hr) {
      std::vector<double> gammas;
      for (const auto& e : densities_) gammas.push_back(e.param);
      full_hr_ = std::make_shared<HuslerReissModel>(tree_gamma(tree_, gammas));
      MvnResult r = full_hr_->lambda1();
      normalizer_ = r.value;
      normalizer_error_ = r.error;
    } else {
      QmcResult r = integrate_over_exceedance_support(
          [this](const Vector& y) { return std::exp(log_unnormalized(y)); }, tree_.d);
      normalizer_ = r.value;
      normalizer_error_ = r.error;
    }
  }

  double log_unnormalized(const Vector& y) const {
    const int d = tree_.d;
    if (y.size() != d) throw invalid_input("TreeParetoModel: dimension mismatch");
    double out = 0.0;
    for (int v = 0; v < d; ++v) {
      if (!(y[v] > 0.0)) throw invalid_input("TreeParetoModel: y must be positive");
      out += -2.0 * std::log(y[v]);
    }
    Vector pair(2);
    for (std::size_t e = 0; e < tree_.edges.size(); ++e) {
      auto [a, b] = tree_.edges[e];
      pair[0] = y[a];
      pair[1] = y[b];
      double logl;
      if (densities_[e].family == EdgeDensity::Family::husler_reiss) {
        logl = log_hr_exponent_density(*edge_models_[e], pair, 0);
      } else {
        logl = log_logistic_exponent_density(LogisticModel(2, densities_[e].param), pair);
      }
      out += logl + 2.0 * std::log(y[a]) + 2.0 * std::log(y[b]);
    }
    return out;
  }

  double density(const Vector& y) const {
    if (y.maxCoeff() < 1.0) throw invalid_input("TreeParetoModel: y outside the support L");
    return std::exp(log_unnormalized(y)) / normalizer_;
  }

  double normalizer() const { return normalizer_; }
  double normalizer_error() const { return normalizer_error_; }
  const ExtremalGraph& tree() const { return tree_; }
  /// Set when every edge is Husler-Reiss.
  const HuslerReissModel* composed_hr() const { return full_hr_.get(); }

 private:
  ExtremalGraph tree_;
  std::vector<EdgeDensity> densities_;
  std::vector<std::shared_ptr<HuslerReissModel>> edge_models_;
  std::shared_ptr<HuslerReissModel> full_hr_;
  double normalizer_ = 1.0;
  double normalizer_error_ = 0.0;
};

inline double tree_density(const ExtremalGraph& tree, const std::vector<EdgeDensity>& densities,
                           const Vector& y) {
  return TreeParetoModel(tree, densities).density(y);
}

// ---------------------------------------------------------------------------
// structure learning
// ---------------------------------------------------------------------------

/// Kruskal minimum spanning tree with lexicographic tie-breaking. Infinite
/// weights mark forbidden edges.
inline ExtremalGraph mst_learn(const Matrix& weights) {
  const int d = static_cast<int>(weights.rows());
  if (weights.cols() != d || d < 2) throw invalid_input("mst_learn: need square matrix, d >= 2");
  struct E {
    double w;
    int a, b;
  };
  std::vector<E> edges;
  for (int i = 0; i < d; ++i) {
    if (weights(i, i) != 0.0) throw invalid_input("mst_learn: diagonal must be zero");
    for (int j = i + 1; j < d; ++j) {
      if (std::abs(weights(i, j) - weights(j, i)) > 1e-12)
        throw invalid_input("mst_learn: weights not symmetric");
      if (std::isnan(weights(i, j))) throw invalid_input("mst_learn: NaN weight");
      if (std::isinf(weights(i, j))) continue;  // forbidden edge
      edges.push_back({weights(i, j), i, j});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const E& x, const E& y) {
    return std::tie(x.w, x.a, x.b) < std::tie(y.w, y.a, y.b);
  });
  std::vector<int> parent(d);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<std::pair<int, int>> chosen;
  for (const auto& e : edges) {
    int ra = find(e.a), rb = find(e.b);
    if (ra == rb) continue;
    parent[ra] = rb;
    chosen.push_back({e.a, e.b});
    if (static_cast<int>(chosen.size()) == d - 1) break;
  }
  if (static_cast<int>(chosen.size()) != d - 1)
    throw invalid_input("mst_learn: graph disconnected after removing forbidden edges");
  return make_graph(d, std::move(chosen));
}

/// Pairwise empirical chi matrix at level q (diagonal 1).
inline Matrix pairwise_chi_matrix(const StandardizedSample& sample, double q) {
  const int d = sample.d();
  Matrix chi = Matrix::Ones(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      double v = detail::chi_value(sample.ranks, {i, j}, q);
      chi(i, j) = chi(j, i) = v;
    }
  return chi;
}

/// -log chi weights for minimum spanning tree learning; nonpositive chi maps
/// to a forbidden edge.
inline Matrix chi_weight_matrix(const Matrix& chi) {
  Matrix w = Matrix::Zero(chi.rows(), chi.cols());
  for (int i = 0; i < chi.rows(); ++i)
    for (int j = 0; j < chi.cols(); ++j)
      if (i != j)
        w(i, j) = chi(i, j) > 0.0 ? -std::log(chi(i, j))
                                  : std::numeric_limits<double>::infinity();
  return w;
}

// ---------------------------------------------------------------------------
// censored likelihood
// ---------------------------------------------------------------------------

/// Clique observations rescaled by the censoring threshold: rows of z = y/u
/// restricted to the clique, keeping rows with max z > 1.
struct CliqueData {
  IndexSet clique;
  double threshold = 1.0;
  Matrix z;  // rows: kept observations, columns: clique coordinates

  CliqueData(const ExceedanceSet& data, IndexSet clique_, double threshold_)
      : clique(std::move(clique_)), threshold(threshold_) {
    if (clique.size() < 1 || clique.size() > 3)
      throw invalid_input("CliqueData: clique size must be 1..3");
    if (!is_sorted_unique(clique)) throw invalid_input("CliqueData: clique not sorted/unique");
    if (clique.back() >= data.d()) throw invalid_input("CliqueData: index out of range");
    if (!(threshold > 0.0)) throw invalid_input("CliqueData: threshold must be positive");
    const int p = static_cast<int>(clique.size());
    std::vector<Vector> rows;
    for (int r = 0; r < data.k; ++r) {
      Vector zr(p);
      double mx = 0.0;
      for (int c = 0; c < p; ++c) {
        zr[c] = data.radii[r] * data.angles(r, clique[c]) / threshold;
        mx = std::max(mx, zr[c]);
      }
      if (mx > 1.0) rows.push_back(zr);
    }
    z.resize(static_cast<int>(rows.size()), p);
    for (std::size_t i = 0; i < rows.size(); ++i) z.row(static_cast<int>(i)) = rows[i];
  }

  int rows() const { return static_cast<int>(z.rows()); }
};

namespace detail {

/// Log of the bivariate/trivariate HR Pareto density with components at or
/// below 1 censored (integrated over (0,1]); z is already rescaled.
inline double censored_log_density(const HuslerReissModel& model, const Vector& z) {
  const int p = model.d();
  IndexSet above, below;
  for (int i = 0; i < p; ++i)
    (z[i] > 1.0 ? above : below).push_back(i);
  if (above.empty()) throw invalid_input("censored_log_density: no component above 1");

  // anchor at the largest uncensored component
  int m = above[0];
  for (int i : above)
    if (z[i] > z[m]) m = i;

  const Matrix sigma = model.sigma_anchor(m);
  std::vector<int> pos(p, -1);  // variable -> row in sigma
  {
    int ii = 0;
    for (int i = 0; i < p; ++i)
      if (i != m) pos[i] = ii++;
  }
  IndexSet arest;  // uncensored, anchor excluded
  for (int i : above)
    if (i != m) arest.push_back(i);

  double out = -2.0 * std::log(z[m]);
  const auto& gamma = model.gamma();

  auto wval = [&](int i) { return std::log(z[i] / z[m]) + gamma(i, m) / 2.0; };
  auto cval = [&](int i) { return -std::log(z[m]) + gamma(i, m) / 2.0; };

  if (arest.empty()) {
    // all non-anchor components censored
    if (below.empty()) return out;  // p == 1
    if (below.size() == 1) {
      int b = below[0];
      out += log_normal_cdf(cval(b) / std::sqrt(sigma(pos[b], pos[b])));
    } else {
      int b1 = below[0], b2 = below[1];
      double v = bvn_cdf(cval(b1), cval(b2), sigma(pos[b1], pos[b1]), sigma(pos[b1], pos[b2]),
                         sigma(pos[b2], pos[b2]));
      out += std::log(std::max(v, 1e-300));
    }
    return out;
  }

  // uncensored part: Gaussian density of w over arest
  Matrix saa(arest.size(), arest.size());
  Vector wa(arest.size());
  for (std::size_t i = 0; i < arest.size(); ++i) {
    wa[i] = wval(arest[i]);
    out += -std::log(z[arest[i]]);
    for (std::size_t j = 0; j < arest.size(); ++j)
      saa(i, j) = sigma(pos[arest[i]], pos[arest[j]]);
  }
  out += log_mvn_pdf(wa, saa);

  if (!below.empty()) {
    // censored part: conditional Gaussian CDF at the bounds
    Eigen::LLT<Matrix> llt(saa);
    Matrix sba(below.size(), arest.size());
    for (std::size_t i = 0; i < below.size(); ++i)
      for (std::size_t j = 0; j < arest.size(); ++j)
        sba(i, j) = sigma(pos[below[i]], pos[arest[j]]);
    Vector mu = sba * llt.solve(wa);
    Matrix sbb(below.size(), below.size());
    for (std::size_t i = 0; i < below.size(); ++i)
      for (std::size_t j = 0; j < below.size(); ++j)
        sbb(i, j) = sigma(pos[below[i]], pos[below[j]]);
    Matrix cond = sbb - sba * llt.solve(sba.transpose());
    if (below.size() == 1) {
      double sd = std::sqrt(std::max(cond(0, 0), 1e-30));
      out += log_normal_cdf((cval(below[0]) - mu[0]) / sd);
    } else {
      double v = bvn_cdf(cval(below[0]) - mu[0], cval(below[1]) - mu[1], cond(0, 0), cond(0, 1),
                         cond(1, 1));
      out += std::log(std::max(v, 1e-300));
    }
  }
  return out;
}

inline double censored_loglik_prepared(const CliqueData& data, const HuslerReissModel& model) {
  const double log_norm = std::log(model.lambda1().value);
  double total = 0.0;
  for (int r = 0; r < data.rows(); ++r) {
    double term = censored_log_density(model, data.z.row(r).transpose()) - log_norm;
    if (!std::isfinite(term))
      throw computation_error("censored likelihood: non-finite contribution (degenerate Gamma)");
    total += term;
  }
  return total;
}

/// Univariate separator term: density y^{-2} above 1, rows below excluded.
inline double separator_loglik(const CliqueData& data) {
  double total = 0.0;
  for (int r = 0; r < data.rows(); ++r) total += -2.0 * std::log(data.z(r, 0));
  return total;
}

}  // namespace detail

/// Censored composite log-likelihood of a clique of size 2 or 3 under a
/// Husler-Reiss block: components above the threshold contribute density
/// coordinates, components below enter through Gaussian CDFs of the partially
/// integrated density; rows with no clique component above threshold are
/// excluded.
inline double censored_clique_loglik(const ExceedanceSet& data, const IndexSet& clique,
                                     const Matrix& gamma_block, double threshold) {
  if (clique.size() < 2 || clique.size() > 3)
    throw invalid_input("censored_clique_loglik: clique size must be 2 or 3");
  CliqueData cd(data, clique, threshold);
  HuslerReissModel model(gamma_block);
  return detail::censored_loglik_prepared(cd, model);
}

struct CliqueFit {
  Matrix gamma;
  double loglik = 0.0;
  bool converged = false;
  bool at_bound = false;
  int rows_used = 0;
};

namespace detail {

inline constexpr double gamma_lower = 1e-6;
inline constexpr double gamma_upper = 50.0;

/// Nelder-Mead in log-Gamma space over the search box, invalid parameter
/// blocks penalized. Dimension 1 (pair) or 3 (triple).
template <typename F>
std::pair<Vector, double> nelder_mead_max(F f, Vector start, double scale, int max_iter,
                                          double rel_tol, bool* converged) {
  const int n = static_cast<int>(start.size());
  std::vector<Vector> xs(n + 1, start);
  std::vector<double> fs(n + 1);
  for (int i = 1; i <= n; ++i) xs[i][i - 1] += scale;
  for (int i = 0; i <= n; ++i) fs[i] = f(xs[i]);
  auto order = [&]() {
    for (int i = 0; i <= n; ++i)
      for (int j = i + 1; j <= n; ++j)
        if (fs[j] > fs[i]) {
          std::swap(fs[i], fs[j]);
          std::swap(xs[i], xs[j]);
        }
  };
  *converged = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    order();  // fs[0] best, fs[n] worst
    double spread = std::abs(fs[0] - fs[n]);
    if (spread <= rel_tol * (std::abs(fs[0]) + rel_tol)) {
      *converged = true;
      break;
    }
    Vector centroid = Vector::Zero(n);
    for (int i = 0; i < n; ++i) centroid += xs[i];
    centroid /= n;
    Vector refl = centroid + (centroid - xs[n]);
    double fr = f(refl);
    if (fr > fs[0]) {
      Vector exp_ = centroid + 2.0 * (centroid - xs[n]);
      double fe = f(exp_);
      if (fe > fr) {
        xs[n] = exp_;
        fs[n] = fe;
      } else {
        xs[n] = refl;
        fs[n] = fr;
      }
    } else if (fr > fs[n - 1]) {
      xs[n] = refl;
      fs[n] = fr;
    } else {
      Vector con = centroid + 0.5 * (xs[n] - centroid);
      double fc = f(con);
      if (fc > fs[n]) {
        xs[n] = con;
        fs[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
          fs[i] = f(xs[i]);
        }
      }
    }
  }
  order();
  return {xs[0], fs[0]};
}

inline Matrix gamma_block_from_logs(const IndexSet& clique, const Vector& logs) {
  const int p = static_cast<int>(clique.size());
  Matrix g = Matrix::Zero(p, p);
  if (p == 2) {
    g(0, 1) = g(1, 0) = std::exp(logs[0]);
  } else {
    g(0, 1) = g(1, 0) = std::exp(logs[0]);
    g(0, 2) = g(2, 0) = std::exp(logs[1]);
    g(1, 2) = g(2, 1) = std::exp(logs[2]);
  }
  return g;
}

}  // namespace detail

/// Maximize the censored clique likelihood over the free variogram entries
/// (log-parameterized, box [1e-6, 50]), multi-start Nelder-Mead.
inline CliqueFit fit_clique(const ExceedanceSet& data, const IndexSet& clique, double threshold,
                            std::optional<Matrix> init = std::nullopt) {
  if (clique.size() < 2 || clique.size() > 3)
    throw invalid_input("fit_clique: clique size must be 2 or 3");
  CliqueData cd(data, clique, threshold);
  const int p = static_cast<int>(clique.size());
  const int nfree = p == 2 ? 1 : 3;
  if (cd.rows() < nfree + 1)
    throw invalid_input("fit_clique: too few rows above threshold for clique " +
                        index_set_name(clique));

  Vector start(nfree);
  if (init) {
    if (init->rows() != p || init->cols() != p) throw invalid_input("fit_clique: bad init shape");
    if (p == 2) {
      start[0] = std::log((*init)(0, 1));
    } else {
      start[0] = std::log((*init)(0, 1));
      start[1] = std::log((*init)(0, 2));
      start[2] = std::log((*init)(1, 2));
    }
  } else {
    // moment-style initialization from pairwise empirical chi on the kept rows
    int idx = 0;
    for (int a = 0; a < p; ++a)
      for (int b = a + 1; b < p; ++b) {
        int joint = 0;
        for (int r = 0; r < cd.rows(); ++r)
          if (cd.z(r, a) > 1.0 && cd.z(r, b) > 1.0) ++joint;
        int any = 0;
        for (int r = 0; r < cd.rows(); ++r)
          if (cd.z(r, a) > 1.0 || cd.z(r, b) > 1.0) ++any;
        double chi = any > 0 ? 2.0 * joint / (joint + any) : 0.5;  // crude but bounded
        chi = std::min(0.99, std::max(0.01, chi));
        start[idx++] = std::log(gamma_from_chi(chi));
      }
  }
  for (int i = 0; i < nfree; ++i)
    start[i] = std::min(std::log(detail::gamma_upper) - 0.5,
                        std::max(std::log(detail::gamma_lower) + 0.5, start[i]));

  auto objective = [&](const Vector& logs) {
    for (int i = 0; i < nfree; ++i) {
      if (logs[i] < std::log(detail::gamma_lower) || logs[i] > std::log(detail::gamma_upper))
        return -1e12 * (1.0 + logs.cwiseAbs().sum());
    }
    Matrix g = detail::gamma_block_from_logs(clique, logs);
    try {
      HuslerReissModel model(g);
      return detail::censored_loglik_prepared(cd, model);
    } catch (const std::exception&) {
      return -1e12 * (1.0 + logs.cwiseAbs().sum());
    }
  };

  CliqueFit best;
  best.loglik = -std::numeric_limits<double>::infinity();
  best.rows_used = cd.rows();
  const double shifts[3] = {0.0, -0.7, 0.7};
  for (double shift : shifts) {
    Vector s0 = start.array() + shift;
    bool conv = false;
    auto [logs, value] = detail::nelder_mead_max(objective, s0, 0.4, 500, 1e-8, &conv);
    if (value > best.loglik) {
      best.loglik = value;
      best.gamma = detail::gamma_block_from_logs(clique, logs);
      best.converged = conv;
      best.at_bound = false;
      for (int i = 0; i < nfree; ++i) {
        double g = std::exp(logs[i]);
        if (g < detail::gamma_lower * 1.5 || g > detail::gamma_upper / 1.5) best.at_bound = true;
      }
    }
  }
  if (!best.converged)
    warn("fit_clique: optimizer did not converge for clique " + index_set_name(clique));
  if (best.at_bound)
    warn("fit_clique: estimate at the search-box boundary for clique " + index_set_name(clique));
  return best;
}

// ---------------------------------------------------------------------------
// fitted models and greedy search
// ---------------------------------------------------------------------------

struct CliqueParam {
  IndexSet clique;
  Matrix gamma;
  double loglik = 0.0;
  bool converged = true;
};

struct FittedModel {
  ExtremalGraph graph;
  Matrix gamma;  // full d x d, path-completed
  std::vector<CliqueParam> clique_params;
  double loglik = 0.0;  // censored composite likelihood (cliques over separators)
  int n_params = 0;
  double aic = 0.0;
};

inline void to_json(nlohmann::json& j, const CliqueParam& c) {
  std::vector<int> one_based;
  for (int v : c.clique) one_based.push_back(v + 1);
  j = {{"clique", one_based},
       {"gamma", matrix_to_json(c.gamma)},
       {"loglik", c.loglik},
       {"converged", c.converged}};
}

inline void to_json(nlohmann::json& j, const FittedModel& m) {
  j = {{"graph", m.graph},
       {"gamma", matrix_to_json(m.gamma)},
       {"clique_params", m.clique_params},
       {"loglik", m.loglik},
       {"n_params", m.n_params},
       {"aic", m.aic}};
}

namespace detail {

/// Path-sum completion of the variogram over a tree/block graph: direct
/// entries inside cliques, sums along the unique shortest path between
/// blocks elsewhere.
inline Matrix complete_gamma(const ExtremalGraph& graph,
                             const std::vector<CliqueParam>& cliques) {
  const int d = graph.d;
  Matrix direct = Matrix::Constant(d, d, -1.0);
  for (const auto& cp : cliques) {
    for (std::size_t a = 0; a < cp.clique.size(); ++a)
      for (std::size_t b = a + 1; b < cp.clique.size(); ++b) {
        direct(cp.clique[a], cp.clique[b]) = cp.gamma(a, b);
        direct(cp.clique[b], cp.clique[a]) = cp.gamma(a, b);
      }
  }
  std::vector<std::vector<int>> adj(d);
  for (auto [a, b] : graph.edges) {
    if (direct(a, b) < 0.0)
      throw invalid_input("complete_gamma: missing clique parameter for edge");
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  Matrix gamma = Matrix::Zero(d, d);
  for (int s = 0; s < d; ++s) {
    std::vector<double> dist(d, -1.0);
    std::vector<int> order = {s};
    dist[s] = 0.0;
    for (std::size_t head = 0; head < order.size(); ++head) {
      int v = order[head];
      for (int w : adj[v]) {
        if (dist[w] >= 0.0) continue;
        dist[w] = dist[v] + direct(v, w);
        order.push_back(w);
      }
    }
    for (int v = 0; v < d; ++v) {
      if (dist[v] < 0.0) throw invalid_input("complete_gamma: graph disconnected");
      gamma(s, v) = dist[v];
    }
  }
  // symmetrize: BFS from either endpoint walks the same unique block path
  gamma = 0.5 * (gamma + gamma.transpose());
  return gamma;
}

}  // namespace detail

/// Fit one Husler-Reiss block per clique of a tree/block graph and assemble
/// the composite censored likelihood, parameter count and AIC.
inline FittedModel fit_graph_model(const ExceedanceSet& data, const ExtremalGraph& graph,
                                   double threshold) {
  if (graph.kind != GraphKind::tree && graph.kind != GraphKind::block)
    throw invalid_input("fit_graph_model: graph must be a tree or block graph");
  FittedModel out;
  out.graph = graph;
  double clique_ll = 0.0;
  int params = 0;
  for (const auto& clique : graph.cliques) {
    CliqueFit fit = fit_clique(data, clique, threshold);
    out.clique_params.push_back({clique, fit.gamma, fit.loglik, fit.converged});
    clique_ll += fit.loglik;
    params += static_cast<int>(clique.size() * (clique.size() - 1) / 2);
  }
  double sep_ll = 0.0;
  for (const auto& sep : graph.separators)
    sep_ll += detail::separator_loglik(CliqueData(data, sep, threshold));
  out.loglik = clique_ll - sep_ll;
  out.n_params = params;
  if (params != static_cast<int>(graph.edges.size()))
    throw computation_error("fit_graph_model: parameter bookkeeping mismatch");
  out.aic = 2.0 * params - 2.0 * out.loglik;
  out.gamma = detail::complete_gamma(graph, out.clique_params);
  return out;
}

struct GreedyStepRecord {
  std::optional<std::pair<int, int>> added_edge;  // empty for the starting tree
  double aic = 0.0;
  int n_edges = 0;
};

struct GreedySearchResult {
  std::vector<FittedModel> path;
  std::vector<GreedyStepRecord> records;
  int best_index = 0;

  const FittedModel& best() const { return path.at(best_index); }
};

/// Greedy forward AIC selection over block graphs with cliques of size at
/// most `max_clique`, starting from a spanning tree: at each step the
/// admissible edge (merging two 2-cliques that share a vertex into a
/// triangle) with the lowest AIC is added while the AIC improves. Only
/// affected cliques are refit.
inline GreedySearchResult greedy_block_search(const ExceedanceSet& data,
                                              const ExtremalGraph& start_tree, double threshold,
                                              int max_clique = 3) {
  if (start_tree.kind != GraphKind::tree)
    throw invalid_input("greedy_block_search: start graph must be a tree");
  if (max_clique < 2 || max_clique > 3)
    throw invalid_input("greedy_block_search: max_clique must be 2 or 3");

  GreedySearchResult result;
  FittedModel current = fit_graph_model(data, start_tree, threshold);
  if (!is_valid_block_graph(current.graph, max_clique))
    throw computation_error("greedy_block_search: invalid starting structure");
  result.path.push_back(current);
  result.records.push_back({std::nullopt, current.aic,
                            static_cast<int>(current.graph.edges.size())});

  if (max_clique < 3) {
    result.best_index = 0;
    return result;
  }

  while (true) {
    // admissible additions: {i,j} at distance two through v where both
    // connecting blocks are plain edges
    std::set<std::pair<int, int>> edge_in_triangle;
    for (const auto& c : current.graph.cliques)
      if (c.size() == 3)
        for (std::size_t a = 0; a < c.size(); ++a)
          for (std::size_t b = a + 1; b < c.size(); ++b)
            edge_in_triangle.insert({c[a], c[b]});
    struct Candidate {
      int i, v, j;
    };
    std::vector<Candidate> candidates;
    for (int v = 0; v < current.graph.d; ++v) {
      auto nb = current.graph.neighbors(v);
      for (std::size_t x = 0; x < nb.size(); ++x)
        for (std::size_t y = x + 1; y < nb.size(); ++y) {
          int i = std::min(nb[x], nb[y]), j = std::max(nb[x], nb[y]);
          if (current.graph.has_edge(i, j)) continue;
          if (edge_in_triangle.count(std::minmax(i, v)) ||
              edge_in_triangle.count(std::minmax(j, v)))
            continue;
          candidates.push_back({i, v, j});
        }
    }
    if (candidates.empty()) break;

    double best_aic = current.aic;
    std::optional<Candidate> best_cand;
    FittedModel best_model;
    for (const auto& cand : candidates) {
      std::vector<std::pair<int, int>> edges = current.graph.edges;
      edges.push_back(std::minmax(cand.i, cand.j));
      ExtremalGraph g = make_graph(current.graph.d, std::move(edges));
      if (!is_valid_block_graph(g, max_clique))
        throw computation_error("greedy_block_search: candidate left the block-graph class");

      // refit only the new triangle; other cliques carry over
      IndexSet tri = make_index_set({cand.i, cand.v, cand.j});
      Matrix init = Matrix::Zero(3, 3);
      {
        auto pairval = [&](int a, int b) {
          double v01 = current.gamma(a, b);
          return v01;
        };
        init(0, 1) = init(1, 0) = pairval(tri[0], tri[1]);
        init(0, 2) = init(2, 0) = pairval(tri[0], tri[2]);
        init(1, 2) = init(2, 1) = pairval(tri[1], tri[2]);
      }
      CliqueFit tri_fit = fit_clique(data, tri, threshold, init);

      FittedModel next;
      next.graph = g;
      double clique_ll = 0.0;
      int params = 0;
      for (const auto& clique : g.cliques) {
        if (clique == tri) {
          next.clique_params.push_back({clique, tri_fit.gamma, tri_fit.loglik,
                                        tri_fit.converged});
          clique_ll += tri_fit.loglik;
        } else {
          bool found = false;
          for (const auto& cp : current.clique_params)
            if (cp.clique == clique) {
              next.clique_params.push_back(cp);
              clique_ll += cp.loglik;
              found = true;
              break;
            }
          if (!found)
            throw computation_error("greedy_block_search: clique set changed unexpectedly");
        }
        params += static_cast<int>(clique.size() * (clique.size() - 1) / 2);
      }
      double sep_ll = 0.0;
      for (const auto& sep : g.separators)
        sep_ll += detail::separator_loglik(CliqueData(data, sep, threshold));
      next.loglik = clique_ll - sep_ll;
      next.n_params = params;
      if (params != static_cast<int>(g.edges.size()))
        throw computation_error("greedy_block_search: parameter bookkeeping mismatch");
      next.aic = 2.0 * params - 2.0 * next.loglik;
      next.gamma = detail::complete_gamma(g, next.clique_params);

      if (next.aic < best_aic - 1e-12) {
        best_aic = next.aic;
        best_cand = cand;
        best_model = std::move(next);
      }
    }
    if (!best_cand) break;
    current = std::move(best_model);
    result.path.push_back(current);
    result.records.push_back({std::minmax(best_cand->i, best_cand->j), current.aic,
                              static_cast<int>(current.graph.edges.size())});
  }

  result.best_index = 0;
  for (std::size_t i = 1; i < result.path.size(); ++i)
    if (result.path[i].aic < result.path[result.best_index].aic)
      result.best_index = static_cast<int>(i);
  return result;
}

/// Model-implied pairwise chi matrix from the completed variogram.
inline Matrix model_chi_matrix(const FittedModel& fitted) {
  const int d = fitted.graph.d;
  Matrix chi = Matrix::Ones(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      double v = chi_oracle_hr(fitted.gamma(i, j));
      chi(i, j) = chi(j, i) = v;
    }
  return chi;
}

}  // namespace extremes
