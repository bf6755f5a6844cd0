#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "stcar/graph.hpp"

namespace stcar {

/// Section-year lattice of counts, log tow-distance offsets and covariates.
/// Row layout of X is k*T + t; column 0 is the implicit intercept.
struct Dataset {
  ArealGraph graph;
  int T = 0;
  int n_cov = 0;                       // covariates excluding intercept
  std::vector<std::string> cov_names;  // length n_cov
  Eigen::MatrixXd X;                   // (K*T) x (n_cov+1)
  Eigen::MatrixXd offset;              // K x T, log tow distance
  Eigen::MatrixXd counts;              // K x T, non-negative integers
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> observed;  // K x T
  std::vector<std::string> section_labels;  // external ids, size K
  std::vector<int> year_labels;             // external years, size T

  int K() const { return graph.n_sections; }
  int row(int k, int t) const { return k * T + t; }
  int n_observed() const {
    int n = 0;
    for (int k = 0; k < K(); ++k)
      for (int t = 0; t < T; ++t) n += observed(k, t);
    return n;
  }
  int cov_index(const std::string& name) const;  // -1 if absent

  /// Structural checks (shapes, finite offsets, counts >= 0). Throws on
  /// violation; used by ingest and by the simulator.
  void validate() const;

  /// Copy restricted to year indices [0, keep_T).
  Dataset truncate_years(int keep_T) const;
};

/// Canonical covariate schema used by ingest and the simulator.
std::vector<std::string> standard_cov_names();

}  // namespace stcar
