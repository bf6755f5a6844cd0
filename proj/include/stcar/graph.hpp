#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace stcar {

/// Eigen-decomposition cache for the proper-CAR precision D - lambda*W.
/// gamma holds the eigenvalues of D^{-1/2} W D^{-1/2}, so
///   log det(D - lambda W) = log_det_D + sum_i log(1 - lambda * gamma_i)
/// which makes the log-determinant O(K) in lambda.
struct CarSpectral {
  Eigen::VectorXd gamma;
  double log_det_D = 0.0;
};

/// Areal adjacency structure over K river sections (0-based ids internally).
/// Immutable after build_graph; safe to share across chains.
struct ArealGraph {
  int n_sections = 0;
  std::vector<std::pair<int, int>> edges;  // a < b, unique
  std::vector<int> degrees;
  std::vector<int> group_of;       // section -> group id in 0..n_groups-1
  std::vector<int> component_of;   // connected-component label per section
  int n_groups = 0;
  int n_components = 0;
  Eigen::SparseMatrix<double> W;   // binary, symmetric, zero diagonal
  CarSpectral spectral;
  std::vector<std::string> warnings;  // e.g. cross-group edges

  int group_size(int g) const {
    int n = 0;
    for (int x : group_of) n += (x == g);
    return n;
  }
};

/// Validates and assembles the graph; computes degrees, components and the
/// spectral cache. Throws std::invalid_argument on duplicate edges,
/// self-loops, out-of-range ids or isolated sections.
ArealGraph build_graph(int n_sections,
                       const std::vector<std::pair<int, int>>& edges,
                       const std::vector<int>& group_of);

/// Q = (D - lambda*W) / sigma2, sparse symmetric positive definite.
/// Requires 0 <= lambda < 1 and sigma2 > 0 (std::domain_error otherwise).
Eigen::SparseMatrix<double> car_precision(const ArealGraph& g, double lambda,
                                          double sigma2);

/// log det(D - lambda*W) via the spectral cache. Requires 0 <= lambda < 1.
double log_det_precision(const ArealGraph& g, double lambda);

/// Exact draw from MVN(0, sigma2 * (D - lambda*W)^{-1}) via sparse Cholesky.
Eigen::VectorXd sample_car(const ArealGraph& g, double lambda, double sigma2,
                           std::mt19937_64& rng);

}  // namespace stcar
