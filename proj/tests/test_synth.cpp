#include <doctest.h>

#include "stcar/synth.hpp"

using namespace stcar;

TEST_CASE("chain graph topology") {
  ArealGraph g = make_chain_graph({14, 13, 10});
  CHECK(g.n_sections == 37);
  CHECK(g.n_components == 3);
  CHECK(g.n_groups == 3);
  CHECK(g.group_size(0) == 14);
  CHECK(g.group_size(2) == 10);
  CHECK_THROWS_AS(make_chain_graph({3, 1}), std::invalid_argument);
}

TEST_CASE("fixed seed reproduces the dataset exactly") {
  SimConfig cfg;
  cfg.spec.variant = Variant::M3a;
  cfg.truth = default_truth(Variant::M3a);
  cfg.group_sizes = {4, 3};
  cfg.T = 5;
  cfg.seed = 42;
  auto [a, ta] = simulate_dataset(cfg);
  auto [b, tb] = simulate_dataset(cfg);
  CHECK((a.counts - b.counts).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.X - b.X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.offset - b.offset).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ta.phi - tb.phi).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("counts follow the generative mean") {
  SimConfig cfg;
  cfg.spec.variant = Variant::M1;
  cfg.truth = default_truth(Variant::M1);
  cfg.truth->sigma2_theta = 1e-8;  // effects ~ 0: fixed-effect Poisson only
  cfg.group_sizes = {5, 5};
  cfg.T = 200;
  cfg.seed = 2;
  auto [d, truth] = simulate_dataset(cfg);
  // standardized residual sum over all cells is ~ N(0, n)
  double z = 0.0;
  int n = 0;
  for (int k = 0; k < d.K(); ++k)
    for (int t = 0; t < d.T; ++t) {
      double mu = std::exp(linear_predictor(truth, d, k, t));
      z += (d.counts(k, t) - mu) / std::sqrt(mu);
      n++;
    }
  CHECK(std::abs(z) < 4 * std::sqrt((double)n));
}

TEST_CASE("overflow guard") {
  SimConfig cfg;
  cfg.spec.variant = Variant::M1;
  cfg.truth = default_truth(Variant::M1);
  cfg.truth->beta[0] = 40.0;
  cfg.group_sizes = {3};
  cfg.T = 2;
  CHECK_THROWS_AS(simulate_dataset(cfg), std::invalid_argument);
}

TEST_CASE("M4 maps are serially uncorrelated at rho 0") {
  SimConfig cfg;
  cfg.spec.variant = Variant::M4;
  cfg.truth = default_truth(Variant::M4);
  cfg.truth->rho = 0.0;
  cfg.group_sizes = {3, 3};
  cfg.T = 200;
  cfg.seed = 3;
  auto [d, truth] = simulate_dataset(cfg);
  // lag-1 correlation of each section's Phi series
  for (int k = 0; k < d.K(); ++k) {
    Eigen::VectorXd x = truth.phi.row(k).head(d.T - 1);
    Eigen::VectorXd y = truth.phi.row(k).tail(d.T - 1);
    double mx = x.mean(), my = y.mean();
    double r = ((x.array() - mx) * (y.array() - my)).sum() /
               std::sqrt((x.array() - mx).square().sum() *
                         (y.array() - my).square().sum());
    CHECK(std::abs(r) < 0.2);
  }
  // pooled across sections for the tight pooled bound
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (int k = 0; k < d.K(); ++k) {
    Eigen::VectorXd x = truth.phi.row(k).head(d.T - 1);
    Eigen::VectorXd y = truth.phi.row(k).tail(d.T - 1);
    num += ((x.array() - x.mean()) * (y.array() - y.mean())).sum();
    dx += (x.array() - x.mean()).square().sum();
    dy += (y.array() - y.mean()).square().sum();
  }
  CHECK(std::abs(num / std::sqrt(dx * dy)) < 0.05);
}

TEST_CASE("masked cells carry no counts") {
  SimConfig cfg;
  cfg.spec.variant = Variant::M2;
  cfg.truth = default_truth(Variant::M2);
  cfg.group_sizes = {3, 3};
  cfg.T = 4;
  cfg.missing_cells = {{1, 1}, {4, 0}};
  auto [d, truth] = simulate_dataset(cfg);
  CHECK(!d.observed(1, 1));
  CHECK(!d.observed(4, 0));
  CHECK(d.counts(1, 1) == 0.0);
  CHECK(d.n_observed() == 6 * 4 - 2);
  CHECK_THROWS_AS(([&] {
                    SimConfig bad = cfg;
                    bad.missing_cells = {{9, 0}};
                    simulate_dataset(bad);
                  }()),
                  std::invalid_argument);
}

TEST_CASE("single-rep SBC yields one rank row and no test") {
  ModelSpec spec;
  spec.variant = Variant::M1;
  spec.beta_var = 0.25;  // keep prior draws in a sane count range
  SimConfig sim;
  sim.group_sizes = {3, 3};
  sim.T = 3;
  sim.seed = 5;
  sim.ranges.tow_lo_m = 50.0;
  sim.ranges.tow_hi_m = 150.0;
  SamplerConfig sc;
  sc.n_chains = 2;
  sc.warmup_iters = 200;
  sc.sampling_iters = 300;
  sc.seed = 5;
  SbcResult res = sbc_run(spec, sim, 1, sc, 255);
  CHECK(res.n_reps == 1);
  CHECK(res.ranks.rows() + (int)res.nonconverged_reps.size() == 1);
  if (res.ranks.rows() == 1) {
    CHECK(std::isnan(res.chi2_pvalue(0)));
    for (int j = 0; j < res.ranks.cols(); ++j) {
      CHECK(res.ranks(0, j) >= 0);
      CHECK(res.ranks(0, j) <= 255);
    }
    CHECK(res.param_names.size() == (size_t)res.ranks.cols());
    CHECK(res.param_names[0] == "beta.intercept");
  }
}
