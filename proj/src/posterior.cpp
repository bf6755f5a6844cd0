#include "stcar/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stcar {

Interval hpdi(const Eigen::VectorXd& draws, double level) {
  const int n = (int)draws.size();
  if (n < 50) throw std::invalid_argument("hpdi needs at least 50 draws");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("hpdi level must be in (0,1)");
  std::vector<double> v(draws.data(), draws.data() + n);
  std::sort(v.begin(), v.end());
  int m = (int)std::ceil(level * n);
  if (m < 1) m = 1;
  if (m > n) m = n;
  int best = 0;
  double best_w = v[m - 1] - v[0];
  for (int i = 1; i + m <= n; ++i) {
    double w = v[i + m - 1] - v[i];
    if (w < best_w) {
      best_w = w;
      best = i;
    }
  }
  return {v[best], v[best + m - 1]};
}

double quantile(const Eigen::VectorXd& draws, double q) {
  const int n = (int)draws.size();
  if (n == 0) throw std::invalid_argument("quantile of empty vector");
  std::vector<double> v(draws.data(), draws.data() + n);
  std::sort(v.begin(), v.end());
  double h = (n - 1) * q;
  int lo = (int)std::floor(h);
  int hi = std::min(lo + 1, n - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

Interval equal_tail(const Eigen::VectorXd& draws, double level) {
  double a = (1.0 - level) / 2.0;
  return {quantile(draws, a), quantile(draws, 1.0 - a)};
}

const SummaryRow& SummaryTable::row(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return r;
  throw std::invalid_argument("no summary row for " + name);
}

SummaryTable summarize(const PosteriorDraws& draws) {
  SummaryTable tab;
  for (int j = 0; j < draws.dim(); ++j) {
    Eigen::VectorXd col = draws.pooled(j);
    SummaryRow r;
    r.name = draws.names[j];
    r.q10 = quantile(col, 0.10);
    r.q50 = quantile(col, 0.50);
    r.q90 = quantile(col, 0.90);
    Interval h = hpdi(col, 0.80);
    r.hpdi_low = h.low;
    r.hpdi_high = h.high;
    r.excludes_zero = (h.low > 0.0) || (h.high < 0.0);
    tab.rows.push_back(r);
  }
  return tab;
}

double prob_greater(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("prob_greater: length mismatch");
  if (a.size() == 0) throw std::invalid_argument("prob_greater: empty");
  double acc = 0.0;
  for (int i = 0; i < a.size(); ++i)
    acc += (a[i] > b[i]) ? 1.0 : (a[i] == b[i] ? 0.5 : 0.0);
  return acc / a.size();
}

EffectsTable conditional_effects(const PosteriorDraws& draws,
                                 const Dataset& data, const std::string& vary,
                                 const EffectsOptions& opt) {
  if (vary != "turbidity" && vary != "marsh")
    throw std::invalid_argument("conditional_effects varies turbidity or marsh");
  const std::string other = (vary == "turbidity") ? "marsh" : "turbidity";
  for (const std::string& c : {vary, other, std::string("marsh_x_turbidity")})
    if (data.cov_index(c) < 0)
      throw std::invalid_argument("covariate absent from model: " + c);

  Eigen::VectorXd b_turb = draws.pooled("beta.turbidity");
  Eigen::VectorXd b_marsh = draws.pooled("beta.marsh");
  Eigen::VectorXd b_int = draws.pooled("beta.marsh_x_turbidity");
  Eigen::VectorXd b_mgmt = data.cov_index("management") >= 0
                               ? draws.pooled("beta.management")
                               : Eigen::VectorXd::Zero(b_turb.size());
  Eigen::VectorXd b0 = opt.include_intercept
                           ? draws.pooled("beta.intercept")
                           : Eigen::VectorXd::Zero(b_turb.size());

  // empirical values over observed cells
  auto observed_values = [&](const std::string& name) {
    int j = data.cov_index(name) + 1;  // +1 for the intercept column
    std::vector<double> vals;
    for (int k = 0; k < data.K(); ++k)
      for (int t = 0; t < data.T; ++t)
        if (data.observed(k, t)) vals.push_back(data.X(data.row(k, t), j));
    return Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size()).eval();
  };
  Eigen::VectorXd vary_vals = observed_values(vary);
  Eigen::VectorXd cond_vals = observed_values(other);

  double lo = vary_vals.minCoeff(), hi = vary_vals.maxCoeff();
  std::vector<double> grid(opt.grid_points);
  for (int i = 0; i < opt.grid_points; ++i)
    grid[i] = lo + (hi - lo) * i / std::max(1, opt.grid_points - 1);

  const int n = (int)b_turb.size();
  EffectsTable tab;
  tab.vary = vary;
  for (double pct : opt.percentiles) {
    EffectsCurve curve;
    curve.conditioning_percentile = pct;
    curve.conditioning_value = quantile(cond_vals, pct / 100.0);
    curve.grid = grid;
    Eigen::VectorXd mu(n);
    for (double x : grid) {
      double turb = (vary == "turbidity") ? x : curve.conditioning_value;
      double marsh = (vary == "marsh") ? x : curve.conditioning_value;
      for (int d = 0; d < n; ++d)
        mu[d] = std::exp(b0[d] + turb * b_turb[d] + marsh * b_marsh[d] +
                         marsh * turb * b_int[d] + b_mgmt[d] + opt.log_offset);
      curve.median.push_back(quantile(mu, 0.5));
      Interval h = hpdi(mu, opt.level);
      curve.low.push_back(h.low);
      curve.high.push_back(h.high);
    }
    tab.curves.push_back(std::move(curve));
  }
  return tab;
}

AggregateTable aggregate_pseudo_posterior(const PosteriorDraws& draws,
                                          const Dataset& data, int year_lo,
                                          int year_hi, double level) {
  if (year_lo < 0 || year_hi >= data.T || year_lo > year_hi)
    throw std::invalid_argument("aggregation window out of range");
  bool has_st = true;
  try {
    draws.index_of("phi.0.0");
  } catch (const std::exception&) {
    has_st = false;
  }
  if (!has_st)
    throw std::invalid_argument(
        "pseudo-posterior aggregation needs spatiotemporal (model 4) draws");

  const int n = draws.total_draws();
  const int nb = data.n_cov + 1;
  Eigen::MatrixXd B(n, nb);
  B.col(0) = draws.pooled("beta.intercept");
  for (int j = 0; j < data.n_cov; ++j)
    B.col(j + 1) = draws.pooled("beta." + data.cov_names[j]);

  AggregateTable tab;
  for (int k = 0; k < data.K(); ++k) {
    std::vector<int> yrs;
    for (int t = year_lo; t <= year_hi; ++t)
      if (data.observed(k, t)) yrs.push_back(t);
    if (yrs.empty()) continue;  // no trawl data in window: excluded

    Eigen::VectorXd xbar = Eigen::VectorXd::Zero(nb);
    double obar = 0.0;
    Eigen::VectorXd phibar = Eigen::VectorXd::Zero(n);
    for (int t : yrs) {
      xbar += data.X.row(data.row(k, t)).transpose();
      obar += data.offset(k, t);
      phibar += draws.pooled("phi." + std::to_string(k) + "." +
                             std::to_string(t));
    }
    xbar /= (double)yrs.size();
    obar /= (double)yrs.size();
    phibar /= (double)yrs.size();

    Eigen::VectorXd mu = ((B * xbar).array() + obar + phibar.array()).exp();
    AggregateRow row;
    row.section = k;
    row.label = k < (int)data.section_labels.size() ? data.section_labels[k]
                                                    : std::to_string(k);
    row.group = data.graph.group_of[k];
    row.years_used = (int)yrs.size();
    row.median = quantile(mu, 0.5);
    Interval h = hpdi(mu, level);
    row.hpdi_low = h.low;
    row.hpdi_high = h.high;
    row.standardized_median = 0.0;
    tab.rows.push_back(row);
  }

  // within-group standardization of the medians
  for (int g = 0; g < data.graph.n_groups; ++g) {
    std::vector<int> idx;
    for (int i = 0; i < (int)tab.rows.size(); ++i)
      if (tab.rows[i].group == g) idx.push_back(i);
    if (idx.size() < 2) continue;
    double mean = 0.0;
    for (int i : idx) mean += tab.rows[i].median;
    mean /= idx.size();
    double ss = 0.0;
    for (int i : idx) ss += (tab.rows[i].median - mean) * (tab.rows[i].median - mean);
    double sd = std::sqrt(ss / (idx.size() - 1.0));
    if (sd <= 0.0) continue;
    for (int i : idx)
      tab.rows[i].standardized_median = (tab.rows[i].median - mean) / sd;
  }
  return tab;
}

}  // namespace stcar
