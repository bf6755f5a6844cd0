#include "stcar/graph.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace stcar {

ArealGraph build_graph(int n_sections,
                       const std::vector<std::pair<int, int>>& edges,
                       const std::vector<int>& group_of) {
  if (n_sections <= 0) throw std::invalid_argument("graph needs at least one section");
  if ((int)group_of.size() != n_sections)
    throw std::invalid_argument("group_of size does not match n_sections");

  ArealGraph g;
  g.n_sections = n_sections;
  g.group_of = group_of;
  g.degrees.assign(n_sections, 0);

  std::set<std::pair<int, int>> seen;
  for (auto [a, b] : edges) {
    if (a == b)
      throw std::invalid_argument("self-loop on section " + std::to_string(a));
    if (a < 0 || b < 0 || a >= n_sections || b >= n_sections)
      throw std::invalid_argument("edge references unknown section id");
    if (a > b) std::swap(a, b);
    if (!seen.insert({a, b}).second)
      throw std::invalid_argument("duplicate edge (" + std::to_string(a) + "," +
                                  std::to_string(b) + ")");
    g.edges.push_back({a, b});
    g.degrees[a]++;
    g.degrees[b]++;
    if (group_of[a] != group_of[b])
      g.warnings.push_back("edge (" + std::to_string(a) + "," + std::to_string(b) +
                           ") crosses groups");
  }

  for (int k = 0; k < n_sections; ++k) {
    if (g.degrees[k] == 0)
      throw std::invalid_argument("section " + std::to_string(k) +
                                  " is isolated (no neighbors)");
  }

  g.n_groups = 1 + *std::max_element(group_of.begin(), group_of.end());
  for (int x : group_of)
    if (x < 0) throw std::invalid_argument("negative group id");

  // connected components by label propagation
  g.component_of.assign(n_sections, -1);
  std::vector<std::vector<int>> adj(n_sections);
  for (auto [a, b] : g.edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  int comp = 0;
  for (int s = 0; s < n_sections; ++s) {
    if (g.component_of[s] >= 0) continue;
    std::vector<int> stack{s};
    g.component_of[s] = comp;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v : adj[u])
        if (g.component_of[v] < 0) {
          g.component_of[v] = comp;
          stack.push_back(v);
        }
    }
    comp++;
  }
  g.n_components = comp;

  std::vector<Eigen::Triplet<double>> trip;
  for (auto [a, b] : g.edges) {
    trip.push_back({a, b, 1.0});
    trip.push_back({b, a, 1.0});
  }
  g.W.resize(n_sections, n_sections);
  g.W.setFromTriplets(trip.begin(), trip.end());

  // spectral cache: eigenvalues of D^{-1/2} W D^{-1/2}
  Eigen::MatrixXd S = Eigen::MatrixXd(g.W);
  Eigen::VectorXd dsqrt_inv(n_sections);
  double ldD = 0.0;
  for (int k = 0; k < n_sections; ++k) {
    dsqrt_inv[k] = 1.0 / std::sqrt((double)g.degrees[k]);
    ldD += std::log((double)g.degrees[k]);
  }
  S = dsqrt_inv.asDiagonal() * S * dsqrt_inv.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  g.spectral.gamma = es.eigenvalues();
  g.spectral.log_det_D = ldD;
  return g;
}

static void check_car_domain(double lambda, double sigma2) {
  if (!(lambda >= 0.0 && lambda < 1.0))
    throw std::domain_error("lambda must lie in [0,1)");
  if (!(sigma2 > 0.0)) throw std::domain_error("sigma2 must be positive");
}

Eigen::SparseMatrix<double> car_precision(const ArealGraph& g, double lambda,
                                          double sigma2) {
  check_car_domain(lambda, sigma2);
  Eigen::SparseMatrix<double> Q = g.W * (-lambda / sigma2);
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < g.n_sections; ++k)
    trip.push_back({k, k, g.degrees[k] / sigma2});
  Eigen::SparseMatrix<double> Dm(g.n_sections, g.n_sections);
  Dm.setFromTriplets(trip.begin(), trip.end());
  return Q + Dm;
}

double log_det_precision(const ArealGraph& g, double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0))
    throw std::domain_error("lambda must lie in [0,1)");
  double acc = g.spectral.log_det_D;
  for (int i = 0; i < g.spectral.gamma.size(); ++i)
    acc += std::log1p(-lambda * g.spectral.gamma[i]);
  return acc;
}

Eigen::VectorXd sample_car(const ArealGraph& g, double lambda, double sigma2,
                           std::mt19937_64& rng) {
  check_car_domain(lambda, sigma2);
  Eigen::SparseMatrix<double> A = car_precision(g, lambda, 1.0);
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(A);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("CAR precision Cholesky failed");
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd z(g.n_sections);
  for (int k = 0; k < g.n_sections; ++k) z[k] = nd(rng);
  // A = P^T L L^T P  =>  x = P^T L^{-T} z has covariance A^{-1}
  Eigen::VectorXd x = llt.matrixU().solve(z);
  x = llt.permutationPinv() * x;
  return std::sqrt(sigma2) * x;
}

}  // namespace stcar
