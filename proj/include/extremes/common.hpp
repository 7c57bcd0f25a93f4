#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace extremes {

inline constexpr const char* version = "0.1.0";

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown on precondition violations and invalid inputs.
class invalid_input : public std::runtime_error {
 public:
  explicit invalid_input(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when an algorithm cannot proceed (divergence, blow-up guards).
class computation_error : public std::runtime_error {
 public:
  explicit computation_error(const std::string& what) : std::runtime_error(what) {}
};

enum class Norm { l1, l2, linf };

inline std::string norm_name(Norm n) {
  switch (n) {
    case Norm::l1: return "l1";
    case Norm::l2: return "l2";
    case Norm::linf: return "linf";
  }
  return "l1";
}

inline Norm norm_from_name(const std::string& s) {
  if (s == "l1") return Norm::l1;
  if (s == "l2") return Norm::l2;
  if (s == "linf" || s == "inf") return Norm::linf;
  throw invalid_input("unknown norm tag: " + s);
}

inline double vector_norm(const Eigen::Ref<const Vector>& x, Norm n) {
  switch (n) {
    case Norm::l1: return x.cwiseAbs().sum();
    case Norm::l2: return x.norm();
    case Norm::linf: return x.cwiseAbs().maxCoeff();
  }
  return 0.0;
}

/// Sorted set of 0-based variable indices.
using IndexSet = std::vector<int>;

inline IndexSet make_index_set(std::initializer_list<int> xs) {
  IndexSet s(xs);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

inline bool is_sorted_unique(const IndexSet& s) {
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s[i] <= s[i - 1]) return false;
  return true;
}

inline bool is_subset(const IndexSet& a, const IndexSet& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

inline std::string index_set_name(const IndexSet& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i] + 1);  // 1-based in messages and reports
  }
  return out + "}";
}

}  // namespace extremes
