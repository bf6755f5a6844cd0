#include <doctest.h>

#include <random>

#include "stcar/stats.hpp"
#include "stcar/synth.hpp"

using namespace stcar;

namespace {

std::pair<Dataset, Parameters> fixture(Variant v, int T = 4,
                                       std::uint64_t seed = 1) {
  SimConfig cfg;
  cfg.spec.variant = v;
  cfg.truth = default_truth(v);
  cfg.group_sizes = {2, 2, 2};
  cfg.T = T;
  cfg.seed = seed;
  // tiny offsets and counts keep log-joint magnitudes low, so identity
  // and finite-difference checks are not swamped by rounding noise
  cfg.ranges.tow_lo_m = 1.0;
  cfg.ranges.tow_hi_m = 1.05;
  cfg.ranges.predator_count_max = 20.0;
  return simulate_dataset(cfg);
}

// random unconstrained point with finite log density
Eigen::VectorXd random_point(const LogDensity& ld, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 0.5);
  for (int attempt = 0; attempt < 100; ++attempt) {
    Eigen::VectorXd u(ld.dim());
    for (int i = 0; i < ld.dim(); ++i) u[i] = nd(rng);
    if (std::isfinite(ld(u, nullptr))) return u;
  }
  throw std::runtime_error("no finite point found");
}

double fd_grad(const LogDensity& ld, Eigen::VectorXd u, int i, double h) {
  u[i] += h;
  double up = ld(u, nullptr);
  u[i] -= 2 * h;
  double dn = ld(u, nullptr);
  return (up - dn) / (2 * h);
}

}  // namespace

TEST_CASE("linear predictor basics") {
  auto [d, truth] = fixture(Variant::M1);
  Parameters p = truth;
  p.beta.setZero();
  p.theta.setZero();
  double lp = linear_predictor(p, d, 2, 1);
  CHECK(lp == doctest::Approx(d.offset(2, 1)).epsilon(1e-14));

  Parameters p2 = p;
  p2.theta[2] = 0.7;
  CHECK(linear_predictor(p2, d, 2, 1) - lp == doctest::Approx(0.7));
}

TEST_CASE("M4 linear predictor hand fixture") {
  auto [d, truth] = fixture(Variant::M4, 2);
  Parameters p = truth;
  int k = 3, t = 1;
  double expect = d.X.row(d.row(k, t)).dot(p.beta) + d.offset(k, t) + p.phi(k, t);
  CHECK(linear_predictor(p, d, k, t) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("adding one count changes log_joint by ln mu (factorials dropped)") {
  auto [d, truth] = fixture(Variant::M2);
  ModelSpec spec;
  spec.variant = Variant::M2;
  double base = log_joint(truth, d, spec);
  Dataset d2 = d;
  d2.counts(1, 2) += 1.0;
  double bumped = log_joint(truth, d2, spec);
  CHECK(bumped - base ==
        doctest::Approx(linear_predictor(truth, d, 1, 2)).epsilon(1e-10));
}

TEST_CASE("unobserved cells contribute nothing") {
  auto [d, truth] = fixture(Variant::M1);
  ModelSpec spec;
  spec.variant = Variant::M1;
  Dataset d2 = d;
  d2.observed(0, 0) = false;
  d2.counts(0, 0) = 0;
  Dataset d3 = d2;
  d3.counts(0, 0) = 0;  // masked count is ignored entirely
  CHECK(log_joint(truth, d2, spec) == log_joint(truth, d3, spec));
  CHECK(log_joint(truth, d, spec) != log_joint(truth, d2, spec));
}

TEST_CASE("domain violations give -inf, not a crash") {
  auto [d, truth] = fixture(Variant::M4);
  ModelSpec spec;
  spec.variant = Variant::M4;
  Parameters p = truth;
  p.lambda = 1.0;
  CHECK(log_joint(p, d, spec) == -std::numeric_limits<double>::infinity());
  p = truth;
  p.sigma2_phi = -1.0;
  CHECK(log_joint(p, d, spec) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("M3b collapses to M3a when r vanishes") {
  // with r = 0 every rho_g equals P, so duplicating one eta series across
  // the three groups reproduces the M3a predictor exactly; holding the
  // shared temporal block (eta, sigma2_eta, P = rho) fixed, the log-joint
  // difference is a parameter-independent constant (the r prior plus the
  // two duplicated AR series densities)
  auto [d3b, truth] = fixture(Variant::M3b);
  ModelSpec sa, sb;
  sa.variant = Variant::M3a;
  sb.variant = Variant::M3b;

  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 0.4);
  Eigen::VectorXd eta_shared(d3b.T);
  for (int t = 0; t < d3b.T; ++t) eta_shared[t] = nd(rng);

  double ref = std::nan("");
  for (int rep = 0; rep < 100; ++rep) {
    Parameters pb = truth;
    pb.variant = Variant::M3b;
    pb.r.setZero();
    pb.P = 0.37;
    pb.sigma2_eta = 0.8;
    pb.sigma2_phi = std::exp(nd(rng));
    pb.lambda = 1.0 / (1.0 + std::exp(-nd(rng)));
    for (int i = 0; i < pb.beta.size(); ++i) pb.beta[i] += nd(rng);
    for (int k = 0; k < d3b.K(); ++k) pb.phi(k, 0) = nd(rng);
    pb.eta.resize(3, d3b.T);
    for (int g = 0; g < 3; ++g) pb.eta.row(g) = eta_shared.transpose();

    Parameters pa = pb;
    pa.variant = Variant::M3a;
    pa.rho = pb.P;
    pa.eta = eta_shared.transpose();

    double diff = log_joint(pb, d3b, sb) - log_joint(pa, d3b, sa);
    if (std::isnan(ref)) ref = diff;
    CHECK(std::abs(diff - ref) < 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("M2 on a cycle at lambda 0 reduces to M1 with halved variance") {
  // cycle graph: all degrees 2
  std::vector<std::pair<int, int>> edges = {{0, 1}, {1, 2}, {2, 3}, {0, 3}};
  SimConfig cfg;
  cfg.spec.variant = Variant::M2;
  cfg.truth = default_truth(Variant::M2);
  cfg.group_sizes = {4};
  cfg.T = 3;
  auto [d, truth] = simulate_dataset(cfg);
  d.graph = build_graph(4, edges, {0, 0, 0, 0});

  ModelSpec s1, s2;
  s1.variant = Variant::M1;
  s2.variant = Variant::M2;

  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0.0, 0.3);
  double ref = std::nan("");
  // sigma2 is pinned: the inverse-gamma hyperprior is evaluated at
  // sigma2_phi vs sigma2_phi/2, a fixed offset only when sigma2 is fixed
  for (int rep = 0; rep < 50; ++rep) {
    Parameters p2 = truth;
    p2.lambda = 0.0;
    p2.sigma2_phi = 0.9;
    p2.phi.resize(4, 1);
    for (int k = 0; k < 4; ++k) p2.phi(k, 0) = nd(rng);
    for (int i = 0; i < p2.beta.size(); ++i) p2.beta[i] += nd(rng);

    Parameters p1 = p2;
    p1.variant = Variant::M1;
    p1.sigma2_theta = p2.sigma2_phi / 2.0;
    p1.theta = p2.phi.col(0);

    double diff = log_joint(p2, d, s2) - log_joint(p1, d, s1);
    if (std::isnan(ref)) ref = diff;
    CHECK(std::abs(diff - ref) < 1e-10);
  }
}

TEST_CASE("unconstrain/constrain round trip") {
  for (Variant v :
       {Variant::M1, Variant::M2, Variant::M3a, Variant::M3b, Variant::M4}) {
    auto [d, truth] = fixture(v);
    ParamLayout L = ParamLayout::make(v, d.n_cov + 1, d.K(), d.T,
                                      d.graph.n_groups);
    Eigen::VectorXd u = L.unconstrain(truth);
    Parameters back = L.constrain(u);
    Eigen::VectorXd u2 = L.unconstrain(back);
    CHECK((u - u2).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("log density equals constrained joint plus jacobian") {
  std::mt19937_64 rng(17);
  for (Variant v :
       {Variant::M1, Variant::M2, Variant::M3a, Variant::M3b, Variant::M4}) {
    auto [d, truth] = fixture(v);
    ModelSpec spec;
    spec.variant = v;
    LogDensity ld(spec, d);
    const ParamLayout& L = ld.layout();
    for (int rep = 0; rep < 5; ++rep) {
      Eigen::VectorXd u = random_point(ld, rng);
      double direct = ld(u, nullptr);
      double composed = log_joint(L.constrain(u), d, spec) + L.log_jacobian(u);
      CHECK(direct == doctest::Approx(composed).epsilon(1e-10));
    }
  }
}

TEST_CASE("analytic gradient matches finite differences") {
  std::mt19937_64 rng(23);
  for (Variant v :
       {Variant::M1, Variant::M2, Variant::M3a, Variant::M3b, Variant::M4}) {
    auto [d, truth] = fixture(v);
    ModelSpec spec;
    spec.variant = v;
    LogDensity ld(spec, d);
    for (int rep = 0; rep < 5; ++rep) {
      Eigen::VectorXd u = random_point(ld, rng);
      Eigen::VectorXd grad;
      ld(u, &grad);
      for (int i = 0; i < ld.dim(); ++i) {
        double fd = fd_grad(ld, u, i, 1e-5);
        double scale = std::max({1.0, std::abs(fd), std::abs(grad[i])});
        CHECK(std::abs(grad[i] - fd) / scale < 1e-5);
      }
    }
  }
}

TEST_CASE("log_joint invariant under section relabeling") {
  auto [d, truth] = fixture(Variant::M2);
  ModelSpec spec;
  spec.variant = Variant::M2;
  const int K = d.K();
  std::vector<int> perm = {3, 0, 5, 1, 4, 2};

  Dataset pd = d;
  std::vector<std::pair<int, int>> pedges;
  std::vector<int> pgroups(K);
  for (auto [a, b] : d.graph.edges) {
    auto e = std::minmax(perm[a], perm[b]);
    pedges.push_back({e.first, e.second});
  }
  for (int k = 0; k < K; ++k) pgroups[perm[k]] = d.graph.group_of[k];
  pd.graph = build_graph(K, pedges, pgroups);
  Parameters pt = truth;
  for (int k = 0; k < K; ++k) {
    pd.counts(perm[k], Eigen::all) = d.counts(k, Eigen::all);
    pd.offset(perm[k], Eigen::all) = d.offset(k, Eigen::all);
    for (int t = 0; t < d.T; ++t)
      pd.X.row(pd.row(perm[k], t)) = d.X.row(d.row(k, t));
    pt.phi(perm[k], 0) = truth.phi(k, 0);
  }
  CHECK(log_joint(pt, pd, spec) ==
        doctest::Approx(log_joint(truth, d, spec)).epsilon(1e-12));
}

TEST_CASE("sample_prior marginals") {
  ArealGraph g = make_chain_graph({2, 2, 2});
  ModelSpec spec;
  spec.variant = Variant::M3b;
  std::mt19937_64 rng(31);
  const int n = 100000;
  Eigen::VectorXd betas(n), lambdas(n), rho1(n);
  for (int i = 0; i < n; ++i) {
    Parameters p = sample_prior(spec, g, 3, rng);
    betas[i] = p.beta[0];
    lambdas[i] = p.lambda;
    rho1[i] = p.rho_g(0);
  }
  double var = betas.squaredNorm() / n - std::pow(betas.mean(), 2);
  CHECK(std::abs(var - 100.0) < 2.0);
  CHECK(ks_uniform_distance(lambdas) <= 0.01);
  // Fig. S1 property: rho_g approximately U(0,1) under the r prior
  CHECK(ks_uniform_distance(rho1) <= 0.02);
}

TEST_CASE("M3b requires three tributaries") {
  ArealGraph g = make_chain_graph({3, 3});
  ModelSpec spec;
  spec.variant = Variant::M3b;
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(sample_prior(spec, g, 3, rng), std::invalid_argument);
}

TEST_CASE("variant parsing") {
  CHECK(variant_from_string("1") == Variant::M1);
  CHECK(variant_from_string("3a") == Variant::M3a);
  CHECK(variant_from_string("3b") == Variant::M3b);
  CHECK(to_string(Variant::M4) == "4");
  CHECK_THROWS_AS(variant_from_string("7"), std::invalid_argument);
}
