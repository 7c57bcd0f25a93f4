#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "extremes/common.hpp"

namespace extremes {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw invalid_input("matrix_from_json: expected nested array");
  const int n = static_cast<int>(j.size());
  const int d = static_cast<int>(j[0].size());
  Matrix m(n, d);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(j[i].size()) != d)
      throw invalid_input("matrix_from_json: ragged rows");
    for (int c = 0; c < d; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

/// Raw n x d data with station labels.
struct ObservationMatrix {
  Matrix values;
  std::vector<std::string> labels;

  int n() const { return static_cast<int>(values.rows()); }
  int d() const { return static_cast<int>(values.cols()); }

  ObservationMatrix() = default;
  ObservationMatrix(Matrix v, std::vector<std::string> lab)
      : values(std::move(v)), labels(std::move(lab)) {
    if (labels.empty()) {
      labels.resize(values.cols());
      for (int j = 0; j < values.cols(); ++j) labels[j] = "V" + std::to_string(j + 1);
    }
    validate();
  }

  void validate() const {
    if (values.rows() < 2) throw invalid_input("ObservationMatrix: need at least 2 rows");
    if (values.cols() < 2) throw invalid_input("ObservationMatrix: need at least 2 columns");
    if (static_cast<int>(labels.size()) != values.cols())
      throw invalid_input("ObservationMatrix: label count does not match columns");
    for (int j = 0; j < values.cols(); ++j) {
      bool distinct = false;
      for (int i = 0; i < values.rows(); ++i) {
        if (!std::isfinite(values(i, j)))
          throw invalid_input("ObservationMatrix: missing or non-finite entry in column " +
                              labels[j]);
        if (values(i, j) != values(0, j)) distinct = true;
      }
      if (!distinct)
        throw invalid_input("ObservationMatrix: column " + labels[j] + " is constant");
    }
  }
};

/// Rank-transformed data on the standard-Pareto scale.
struct StandardizedSample {
  Matrix pareto;  // entries 1/(1 - rank/(n+1))
  Matrix ranks;   // average ranks; half-integral under ties
  ObservationMatrix source;

  int n() const { return static_cast<int>(pareto.rows()); }
  int d() const { return static_cast<int>(pareto.cols()); }
  const std::vector<std::string>& labels() const { return source.labels; }
};

/// Threshold exceedances: radii and unit-sphere angles of the k largest rows.
struct ExceedanceSet {
  Norm norm = Norm::l1;
  int k = 0;
  double threshold = 0.0;     // (k+1)-th largest radius
  std::vector<double> radii;  // non-increasing, length k
  Matrix angles;              // k x d, rows normalized in `norm`
  std::vector<int> indices;   // original row indices, aligned with radii

  int d() const { return static_cast<int>(angles.cols()); }
  /// Pareto-scale row of exceedance r (radius * angle).
  Vector row(int r) const { return radii[r] * angles.row(r).transpose(); }
};

/// Column-wise average ranks (ties share the mean of the ranks they span).
inline Matrix average_ranks(const Matrix& values) {
  const int n = static_cast<int>(values.rows()), d = static_cast<int>(values.cols());
  Matrix ranks(n, d);
  std::vector<int> ord(n);
  for (int j = 0; j < d; ++j) {
    std::iota(ord.begin(), ord.end(), 0);
    std::sort(ord.begin(), ord.end(),
              [&](int a, int b) { return values(a, j) < values(b, j); });
    int i = 0;
    while (i < n) {
      int e = i;
      while (e + 1 < n && values(ord[e + 1], j) == values(ord[i], j)) ++e;
      double avg = (i + e) / 2.0 + 1.0;  // average of ranks i+1..e+1
      for (int t = i; t <= e; ++t) ranks(ord[t], j) = avg;
      i = e + 1;
    }
  }
  return ranks;
}

/// Per-column average ranks and the Pareto transform rank/(n+1).
inline StandardizedSample rank_transform(const ObservationMatrix& data) {
  data.validate();
  const int n = data.n(), d = data.d();
  Matrix ranks = average_ranks(data.values);
  Matrix pareto(n, d);
  for (int j = 0; j < d; ++j)
    for (int r = 0; r < n; ++r) pareto(r, j) = (n + 1.0) / (n + 1.0 - ranks(r, j));
  return {std::move(pareto), std::move(ranks), data};
}

/// Keep the k rows with the largest `norm`-radius; threshold is the (k+1)-th
/// largest radius and ties at the threshold are broken by row index.
inline ExceedanceSet extract_exceedances(const StandardizedSample& sample, Norm norm, int k) {
  const int n = sample.n(), d = sample.d();
  if (k < 1 || k >= n) throw invalid_input("extract_exceedances: need 1 <= k < n");
  std::vector<double> radius(n);
  for (int i = 0; i < n; ++i) radius[i] = vector_norm(sample.pareto.row(i).transpose(), norm);
  std::vector<double> sorted = radius;
  std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end(), std::greater<double>());
  const double t = sorted[k];

  std::vector<int> keep;
  keep.reserve(k);
  for (int i = 0; i < n && static_cast<int>(keep.size()) < k; ++i)
    if (radius[i] > t) keep.push_back(i);
  for (int i = 0; i < n && static_cast<int>(keep.size()) < k; ++i)
    if (radius[i] == t) keep.push_back(i);
  std::stable_sort(keep.begin(), keep.end(),
                   [&](int a, int b) { return radius[a] > radius[b]; });

  ExceedanceSet out;
  out.norm = norm;
  out.k = k;
  out.threshold = t;
  out.radii.resize(k);
  out.indices = keep;
  out.angles.resize(k, d);
  for (int r = 0; r < k; ++r) {
    out.radii[r] = radius[keep[r]];
    out.angles.row(r) = sample.pareto.row(keep[r]) / radius[keep[r]];
  }
  return out;
}

/// Radial-quantile entry point: q = 0.9 keeps the top 10% of radii.
inline ExceedanceSet extract_exceedances_quantile(const StandardizedSample& sample, Norm norm,
                                                  double quantile) {
  if (!(quantile > 0.0 && quantile < 1.0))
    throw invalid_input("extract_exceedances_quantile: quantile must be in (0,1)");
  int k = static_cast<int>(std::floor(sample.n() * (1.0 - quantile)));
  k = std::max(1, std::min(sample.n() - 1, k));
  return extract_exceedances(sample, norm, k);
}

/// Absolute-level entry point; converts the radius level to a count k.
inline ExceedanceSet extract_exceedances_level(const StandardizedSample& sample, Norm norm,
                                               double level) {
  if (!(level > 0.0)) throw invalid_input("extract_exceedances_level: level must be positive");
  int k = 0;
  for (int i = 0; i < sample.n(); ++i)
    if (vector_norm(sample.pareto.row(i).transpose(), norm) > level) ++k;
  if (k < 1) throw invalid_input("extract_exceedances_level: no rows above level");
  k = std::min(sample.n() - 1, k);
  return extract_exceedances(sample, norm, k);
}

inline void to_json(nlohmann::json& j, const ObservationMatrix& m) {
  j = {{"values", matrix_to_json(m.values)},
       {"labels", m.labels},
       {"n", m.n()},
       {"d", m.d()}};
}

inline void from_json(const nlohmann::json& j, ObservationMatrix& m) {
  m = ObservationMatrix(matrix_from_json(j.at("values")),
                        j.at("labels").get<std::vector<std::string>>());
}

inline void to_json(nlohmann::json& j, const StandardizedSample& s) {
  j = {{"pareto", matrix_to_json(s.pareto)},
       {"ranks", matrix_to_json(s.ranks)},
       {"source", s.source}};
}

inline void from_json(const nlohmann::json& j, StandardizedSample& s) {
  s.pareto = matrix_from_json(j.at("pareto"));
  s.ranks = matrix_from_json(j.at("ranks"));
  s.source = j.at("source").get<ObservationMatrix>();
}

inline void to_json(nlohmann::json& j, const ExceedanceSet& e) {
  j = {{"norm", norm_name(e.norm)}, {"k", e.k},           {"threshold", e.threshold},
       {"radii", e.radii},          {"angles", matrix_to_json(e.angles)},
       {"indices", e.indices}};
}

inline void from_json(const nlohmann::json& j, ExceedanceSet& e) {
  e.norm = norm_from_name(j.at("norm").get<std::string>());
  e.k = j.at("k").get<int>();
  e.threshold = j.at("threshold").get<double>();
  e.radii = j.at("radii").get<std::vector<double>>();
  e.angles = matrix_from_json(j.at("angles"));
  e.indices = j.at("indices").get<std::vector<int>>();
}

/// CSV with a header row of column labels, one observation per row.
inline ObservationMatrix read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw invalid_input("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw invalid_input(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> labels;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) labels.push_back(cell);
  }
  const int d = static_cast<int>(labels.size());
  std::vector<double> flat;
  int n = 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int c = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        flat.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw invalid_input(path + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      ++c;
    }
    if (c != d)
      throw invalid_input(path + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(d) + " fields, got " + std::to_string(c));
    ++n;
  }
  Matrix values(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) values(i, j) = flat[i * d + j];
  return ObservationMatrix(std::move(values), std::move(labels));
}

inline void write_csv(const std::string& path, const Matrix& values,
                      const std::vector<std::string>& labels) {
  std::ofstream out(path);
  if (!out) throw invalid_input("cannot write " + path);
  out.precision(17);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (j) out << ',';
    out << labels[j];
  }
  out << '\n';
  for (int i = 0; i < values.rows(); ++i) {
    for (int j = 0; j < values.cols(); ++j) {
      if (j) out << ',';
      out << values(i, j);
    }
    out << '\n';
  }
}

}  // namespace extremes
