#include <doctest.h>

#include <random>

#include "stcar/posterior.hpp"
#include "stcar/stats.hpp"
#include "stcar/synth.hpp"

using namespace stcar;

namespace {

PosteriorDraws single_chain(const std::vector<std::string>& names,
                            const Eigen::MatrixXd& m) {
  PosteriorDraws d;
  d.names = names;
  ChainResult c;
  c.draws = m;
  d.chains.push_back(std::move(c));
  return d;
}

}  // namespace

TEST_CASE("hpdi on standard normal draws") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd v(100000);
  for (int i = 0; i < v.size(); ++i) v[i] = nd(rng);
  Interval h = hpdi(v, 0.80);
  CHECK(std::abs(h.low + 1.2816) < 0.02);
  CHECK(std::abs(h.high - 1.2816) < 0.02);
}

TEST_CASE("hpdi degenerate and error cases") {
  Eigen::VectorXd c = Eigen::VectorXd::Constant(60, 3.5);
  Interval h = hpdi(c, 0.8);
  CHECK(h.low == 3.5);
  CHECK(h.high == 3.5);
  CHECK_THROWS_AS(hpdi(Eigen::VectorXd::Zero(10), 0.8), std::invalid_argument);
  CHECK_THROWS_AS(hpdi(c, 1.0), std::invalid_argument);
}

TEST_CASE("hpdi on exponential draws is left-anchored and shorter") {
  std::mt19937_64 rng(2);
  std::exponential_distribution<double> ed(1.0);
  Eigen::VectorXd v(100000);
  for (int i = 0; i < v.size(); ++i) v[i] = ed(rng);
  Interval h = hpdi(v, 0.80);
  Interval e = equal_tail(v, 0.80);
  CHECK(h.low < 0.01);
  CHECK(h.high - h.low < e.high - e.low);
}

TEST_CASE("hpdi never longer than equal-tail on random skewed samples") {
  std::mt19937_64 rng(3);
  std::gamma_distribution<double> gd(0.7, 2.0);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd v(500);
    for (int i = 0; i < v.size(); ++i) v[i] = gd(rng);
    Interval h = hpdi(v, 0.8);
    Interval e = equal_tail(v, 0.8);
    CHECK(h.high - h.low <= e.high - e.low + 1e-12);
  }
}

TEST_CASE("summarize flags and ordering") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd m(1000, 2);
  for (int i = 0; i < m.rows(); ++i) {
    m(i, 0) = nd(rng);        // symmetric around 0
    m(i, 1) = 5.0 + nd(rng);  // all well above 0
  }
  PosteriorDraws d = single_chain({"a", "b"}, m);
  SummaryTable tab = summarize(d);
  const SummaryRow& a = tab.row("a");
  CHECK(!a.excludes_zero);
  CHECK(a.q10 <= a.q50);
  CHECK(a.q50 <= a.q90);
  // the 80% HPDI is never wider than the central 80% interval
  CHECK(a.hpdi_high - a.hpdi_low <= a.q90 - a.q10 + 1e-12);
  CHECK(tab.row("b").excludes_zero);
}

TEST_CASE("prob_greater conventions") {
  Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(100, 0.0, 1.0);
  Eigen::VectorXd a = b.array() + 1.0;
  CHECK(prob_greater(a, b) == 1.0);
  CHECK(prob_greater(b, b) == 0.5);
  CHECK_THROWS_AS(prob_greater(a, Eigen::VectorXd::Zero(3)),
                  std::invalid_argument);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  const int n = 100000;
  Eigen::VectorXd x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = nd(rng);
    y[i] = 1.0 + nd(rng);
  }
  // P(X > Y) = Phi(-1/sqrt(2)) ~= 0.2398
  CHECK(std::abs(prob_greater(x, y) - normal_cdf(-1.0 / std::sqrt(2.0))) < 0.01);
  CHECK(prob_greater(x, y) + prob_greater(y, x) == doctest::Approx(1.0));
}

TEST_CASE("conditional effects zero-coefficient and single-draw oracle") {
  SimConfig cfg;
  cfg.spec.variant = Variant::M1;
  cfg.truth = default_truth(Variant::M1);
  cfg.group_sizes = {3, 2};
  cfg.T = 4;
  auto [data, truth] = simulate_dataset(cfg);

  // 60 identical zero-beta draws
  ParamLayout L = ParamLayout::make(Variant::M1, data.n_cov + 1, data.K(),
                                    data.T, data.graph.n_groups);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(60, L.dim);
  m.col(L.i_ls2_theta).setOnes();
  PosteriorDraws d = single_chain(L.names(data.cov_names), m);

  EffectsOptions opt;
  opt.grid_points = 7;
  opt.percentiles = {20, 80};
  EffectsTable tab = conditional_effects(d, data, "marsh", opt);
  CHECK(tab.curves.size() == 2);
  for (const auto& c : tab.curves)
    for (size_t i = 0; i < c.grid.size(); ++i) {
      CHECK(c.median[i] == doctest::Approx(1000.0).epsilon(1e-12));
      CHECK(c.low[i] <= c.median[i]);
      CHECK(c.median[i] <= c.high[i]);
    }

  // hand-set coefficients, constant across draws
  double bt = 0.4, bm = -0.6, bmt = 0.25, bmg = 0.3;
  m.col(d.index_of("beta.turbidity")).setConstant(bt);
  m.col(d.index_of("beta.marsh")).setConstant(bm);
  m.col(d.index_of("beta.marsh_x_turbidity")).setConstant(bmt);
  m.col(d.index_of("beta.management")).setConstant(bmg);
  PosteriorDraws d2 = single_chain(d.names, m);
  EffectsTable tab2 = conditional_effects(d2, data, "marsh", opt);
  for (const auto& c : tab2.curves) {
    double turb = c.conditioning_value;
    for (size_t i = 0; i < c.grid.size(); ++i) {
      double x = c.grid[i];
      double expect =
          std::exp(turb * bt + x * bm + x * turb * bmt + bmg + std::log(1000.0));
      CHECK(c.median[i] == doctest::Approx(expect).epsilon(1e-10));
    }
  }

  CHECK_THROWS_AS(conditional_effects(d, data, "seagrass", opt),
                  std::invalid_argument);
}

TEST_CASE("conditional effects monotone under coefficient scaling") {
  SimConfig cfg;
  cfg.spec.variant = Variant::M1;
  cfg.truth = default_truth(Variant::M1);
  cfg.group_sizes = {3, 2};
  cfg.T = 4;
  auto [data, truth] = simulate_dataset(cfg);
  ParamLayout L = ParamLayout::make(Variant::M1, data.n_cov + 1, data.K(),
                                    data.T, data.graph.n_groups);

  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd(0.0, 0.1);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(200, L.dim);
  auto names = L.names(data.cov_names);
  PosteriorDraws base = single_chain(names, m);
  int jm = base.index_of("beta.marsh");
  for (int i = 0; i < m.rows(); ++i) m(i, jm) = 0.5 + std::abs(nd(rng));
  base = single_chain(names, m);

  Eigen::MatrixXd m2 = m;
  m2.col(jm) *= 2.0;  // marsh coefficient draws scaled up
  PosteriorDraws up = single_chain(names, m2);

  EffectsOptions opt;
  opt.grid_points = 5;
  opt.percentiles = {50};
  EffectsTable a = conditional_effects(base, data, "marsh", opt);
  EffectsTable b = conditional_effects(up, data, "marsh", opt);
  for (size_t i = 0; i < a.curves[0].grid.size(); ++i)
    if (a.curves[0].grid[i] > 0.0)
      CHECK(b.curves[0].median[i] >= a.curves[0].median[i]);
}

TEST_CASE("pseudo-posterior aggregation") {
  SimConfig cfg;
  cfg.spec.variant = Variant::M4;
  cfg.truth = default_truth(Variant::M4);
  cfg.group_sizes = {3, 3};
  cfg.T = 5;
  cfg.missing_cells = {{2, 1}, {2, 2}, {2, 3}};
  auto [data, truth] = simulate_dataset(cfg);

  ParamLayout L = ParamLayout::make(Variant::M4, data.n_cov + 1, data.K(),
                                    data.T, data.graph.n_groups);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 0.2);
  Eigen::MatrixXd m(300, L.dim);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < L.dim; ++j) m(i, j) = nd(rng);
  PosteriorDraws draws = single_chain(L.names(data.cov_names), m);

  // single-year window equals that year's mu draws
  AggregateTable one = aggregate_pseudo_posterior(draws, data, 4, 4);
  {
    int k = 1;
    Eigen::VectorXd mu(300);
    for (int d = 0; d < 300; ++d) {
      double lp = 0.0;
      for (int j = 0; j < data.n_cov + 1; ++j)
        lp += data.X(data.row(k, 4), j) * m(d, j);
      lp += data.offset(k, 4) + m(d, L.phi_index(k, 4));
      mu[d] = std::exp(lp);
    }
    CHECK(one.rows[k].median == doctest::Approx(quantile(mu, 0.5)).epsilon(1e-12));
  }

  // brute-force recomputation over a 3-year window
  AggregateTable win = aggregate_pseudo_posterior(draws, data, 1, 3);
  // section 2 has no observed years in 1..3 and is dropped
  CHECK(win.rows.size() == 5);
  for (const auto& r : win.rows) CHECK(r.section != 2);
  for (const auto& r : win.rows) {
    int k = r.section;
    Eigen::VectorXd xbar = Eigen::VectorXd::Zero(data.n_cov + 1);
    double obar = 0.0;
    Eigen::VectorXd phibar = Eigen::VectorXd::Zero(300);
    for (int t = 1; t <= 3; ++t) {
      xbar += data.X.row(data.row(k, t)).transpose();
      obar += data.offset(k, t);
      phibar += m.col(L.phi_index(k, t));
    }
    xbar /= 3.0;
    obar /= 3.0;
    phibar /= 3.0;
    Eigen::VectorXd mu(300);
    for (int d = 0; d < 300; ++d)
      mu[d] = std::exp(m.row(d).head(data.n_cov + 1).dot(xbar) + obar + phibar[d]);
    CHECK(r.median == doctest::Approx(quantile(mu, 0.5)).epsilon(1e-10));
    CHECK(r.years_used == 3);
  }

  // standardized medians: per-group mean 0, sd 1
  for (int g = 0; g < 2; ++g) {
    std::vector<double> z;
    for (const auto& r : win.rows)
      if (r.group == g) z.push_back(r.standardized_median);
    double mean = 0.0, ss = 0.0;
    for (double v : z) mean += v;
    mean /= z.size();
    for (double v : z) ss += (v - mean) * (v - mean);
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(std::sqrt(ss / (z.size() - 1)) - 1.0) < 1e-10);
  }

  CHECK_THROWS_AS(aggregate_pseudo_posterior(draws, data, 3, 7),
                  std::invalid_argument);
}

TEST_CASE("aggregation requires spatiotemporal draws") {
  SimConfig cfg;
  cfg.spec.variant = Variant::M2;
  cfg.truth = default_truth(Variant::M2);
  cfg.group_sizes = {3, 3};
  cfg.T = 3;
  auto [data, truth] = simulate_dataset(cfg);
  ParamLayout L = ParamLayout::make(Variant::M2, data.n_cov + 1, data.K(),
                                    data.T, data.graph.n_groups);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(100, L.dim);
  PosteriorDraws draws = single_chain(L.names(data.cov_names), m);
  CHECK_THROWS_AS(aggregate_pseudo_posterior(draws, data, 0, 2),
                  std::invalid_argument);
}
