#include "stcar/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stcar {

namespace {

CountInterval sorted_window_interval(std::vector<double> v, double level) {
  std::sort(v.begin(), v.end());
  const int n = (int)v.size();
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
  return {(long)std::llround(v[best]), (long)std::llround(v[best + m - 1])};
}

}  // namespace

CountInterval prediction_interval(const Eigen::VectorXd& count_draws,
                                  double level) {
  if (count_draws.size() < 500)
    throw std::invalid_argument("prediction_interval needs >= 500 draws");
  std::vector<double> v(count_draws.data(),
                        count_draws.data() + count_draws.size());
  return sorted_window_interval(std::move(v), level);
}

CountInterval prediction_interval_equal_tail(const Eigen::VectorXd& count_draws,
                                             double level) {
  if (count_draws.size() < 500)
    throw std::invalid_argument("prediction_interval needs >= 500 draws");
  double a = (1.0 - level) / 2.0;
  return {(long)std::llround(quantile(count_draws, a)),
          (long)std::llround(quantile(count_draws, 1.0 - a))};
}

Eigen::MatrixXd forecast_year(const ModelSpec& spec,
                              const PosteriorDraws& draws, const Dataset& data,
                              const Eigen::MatrixXd& X_new,
                              const Eigen::VectorXd& offset_new,
                              std::mt19937_64& rng) {
  const int K = data.K(), T = data.T, nb = data.n_cov + 1;
  const int n = draws.total_draws();
  const Variant v = spec.variant;
  const ArealGraph& g = data.graph;

  if (X_new.rows() != K || X_new.cols() != nb || offset_new.size() != K)
    throw std::invalid_argument("forecast_year: new-year input shape mismatch");

  Eigen::MatrixXd B(n, nb);
  B.col(0) = draws.pooled("beta.intercept");
  for (int j = 0; j < data.n_cov; ++j)
    B.col(j + 1) = draws.pooled("beta." + data.cov_names[j]);

  auto col = [&](const std::string& name) { return draws.pooled(name); };

  // per-draw random effect for the new year, one column per section
  Eigen::MatrixXd eff(n, K);
  std::normal_distribution<double> nd(0.0, 1.0);
  switch (v) {
    case Variant::M1: {
      for (int k = 0; k < K; ++k) eff.col(k) = col("theta." + std::to_string(k));
      break;
    }
    case Variant::M2: {
      for (int k = 0; k < K; ++k) eff.col(k) = col("phi." + std::to_string(k));
      break;
    }
    case Variant::M3a: {
      Eigen::VectorXd rho = col("rho"), s2 = col("sigma2_eta");
      Eigen::VectorXd eta_T = col("eta." + std::to_string(T - 1));
      for (int d = 0; d < n; ++d) {
        double eta_next = rho[d] * eta_T[d] + std::sqrt(s2[d]) * nd(rng);
        for (int k = 0; k < K; ++k)
          eff(d, k) = eta_next;
      }
      Eigen::MatrixXd phi(n, K);
      for (int k = 0; k < K; ++k) phi.col(k) = col("phi." + std::to_string(k));
      eff += phi;
      break;
    }
    case Variant::M3b: {
      Eigen::VectorXd P = col("P"), r1 = col("r.1"), r2 = col("r.2");
      Eigen::VectorXd s2 = col("sigma2_eta");
      const int G = g.n_groups;
      Eigen::MatrixXd eta_next(n, G);
      for (int gg = 0; gg < G; ++gg) {
        Eigen::VectorXd eta_T =
            col("eta." + std::to_string(gg) + "." + std::to_string(T - 1));
        for (int d = 0; d < n; ++d) {
          double rg = (gg == 0) ? r1[d] : (gg == 1 ? r2[d] : -r1[d] - r2[d]);
          double rho_g =
              1.0 / (1.0 + std::exp(-(std::log(P[d] / (1.0 - P[d])) + rg)));
          eta_next(d, gg) = rho_g * eta_T[d] + std::sqrt(s2[d]) * nd(rng);
        }
      }
      for (int k = 0; k < K; ++k) {
        Eigen::VectorXd phi_k = col("phi." + std::to_string(k));
        eff.col(k) = phi_k + eta_next.col(g.group_of[k]);
      }
      break;
    }
    case Variant::M4: {
      Eigen::VectorXd rho = col("rho"), s2 = col("sigma2_phi");
      Eigen::VectorXd lam = col("lambda");
      Eigen::MatrixXd phi_T(n, K);
      for (int k = 0; k < K; ++k)
        phi_T.col(k) =
            col("phi." + std::to_string(k) + "." + std::to_string(T - 1));
      for (int d = 0; d < n; ++d) {
        Eigen::VectorXd innov = sample_car(g, lam[d], s2[d], rng);
        for (int k = 0; k < K; ++k)
          eff(d, k) = rho[d] * phi_T(d, k) + innov[k];
      }
      break;
    }
  }

  Eigen::MatrixXd counts(n, K);
  counts.setConstant(std::nan(""));
  for (int k = 0; k < K; ++k) {
    if (!X_new.row(k).allFinite() || !std::isfinite(offset_new[k])) continue;
    Eigen::VectorXd lin = B * X_new.row(k).transpose();
    for (int d = 0; d < n; ++d) {
      double lmu = lin[d] + offset_new[k] + eff(d, k);
      if (lmu > 30.0) lmu = 30.0;  // predictive guard
      std::poisson_distribution<long long> pois(std::exp(lmu));
      counts(d, k) = (double)pois(rng);
    }
  }
  return counts;
}

void score_forecast(ForecastReport& rep, const Eigen::VectorXd& observed,
                    const std::vector<bool>& observed_mask, double level,
                    bool equal_tail_intervals) {
  const int K = (int)rep.count_draws.cols();
  rep.sections.clear();
  rep.n_evaluated = 0;
  double inside = 0.0, width = 0.0;
  for (int k = 0; k < K; ++k) {
    SectionForecast sf;
    sf.section = k;
    bool avail = rep.available.empty() ? true : rep.available[k];
    if (!avail || !observed_mask[k]) {
      rep.sections.push_back(sf);
      continue;
    }
    Eigen::VectorXd cd = rep.count_draws.col(k);
    sf.interval = equal_tail_intervals
                      ? prediction_interval_equal_tail(cd, level)
                      : prediction_interval(cd, level);
    sf.observed = observed[k];
    sf.inside = observed[k] >= sf.interval.low && observed[k] <= sf.interval.high;
    sf.evaluated = true;
    rep.n_evaluated++;
    inside += sf.inside;
    width += (double)(sf.interval.high - sf.interval.low);
    rep.sections.push_back(sf);
  }
  if (rep.n_evaluated == 0)
    throw std::invalid_argument("forecast scored with no evaluated sections");
  rep.coverage = inside / rep.n_evaluated;
  rep.mean_width = width / rep.n_evaluated;
}

double coverage(const ForecastReport& rep) {
  double inside = 0.0;
  int n = 0;
  for (const auto& s : rep.sections)
    if (s.evaluated) {
      inside += s.inside;
      n++;
    }
  if (n == 0) throw std::invalid_argument("coverage of empty report");
  return inside / n;
}

LfoResult run_lfo(const std::vector<ModelSpec>& specs,
                  const Dataset& dataset_full, int holdout_year,
                  const SamplerConfig& config, double level,
                  bool equal_tail_intervals) {
  const int T = dataset_full.T;
  if (T < 2) throw std::invalid_argument("LFO needs at least 2 years");
  bool found = false;
  for (int y : dataset_full.year_labels) found |= (y == holdout_year);
  if (!found)
    throw std::invalid_argument("holdout year " + std::to_string(holdout_year) +
                                " not present in dataset");
  if (dataset_full.year_labels.back() != holdout_year)
    throw std::invalid_argument(
        "only 1-step-ahead LFO is supported: holdout must be the final year");

  Dataset train = dataset_full.truncate_years(T - 1);
  const int K = dataset_full.K();
  Eigen::MatrixXd X_new(K, dataset_full.n_cov + 1);
  Eigen::VectorXd off_new(K), y_new(K);
  std::vector<bool> mask(K);
  for (int k = 0; k < K; ++k) {
    mask[k] = dataset_full.observed(k, T - 1);
    if (mask[k]) {
      X_new.row(k) = dataset_full.X.row(dataset_full.row(k, T - 1));
      off_new[k] = dataset_full.offset(k, T - 1);
      y_new[k] = dataset_full.counts(k, T - 1);
    } else {
      X_new.row(k).setConstant(std::nan(""));
      off_new[k] = std::nan("");
      y_new[k] = 0.0;
    }
  }

  LfoResult out;
  for (size_t i = 0; i < specs.size(); ++i) {
    ForecastReport rep;
    rep.model = to_string(specs[i].variant);
    try {
      SamplerConfig cfg = config;
      cfg.seed = config.seed ^ (0xb5ad4eceda1ce2a9ULL * (std::uint64_t)(i + 1));
      PosteriorDraws draws = run_inference(specs[i], train, cfg);
      std::mt19937_64 rng(cfg.seed ^ 0x1234567890abcdefULL);
      rep.count_draws = forecast_year(specs[i], draws, train, X_new, off_new, rng);
      rep.available = mask;
      score_forecast(rep, y_new, mask, level, equal_tail_intervals);
    } catch (const std::exception& e) {
      rep.failed = true;
      rep.failure = e.what();
    }
    out.reports.push_back(std::move(rep));
  }

  if (specs.size() > 1) {
    for (int i = 0; i < (int)out.reports.size(); ++i)
      if (!out.reports[i].failed) out.ranking.push_back(i);
    std::stable_sort(out.ranking.begin(), out.ranking.end(), [&](int a, int b) {
      double da = std::abs(out.reports[a].coverage - level);
      double db = std::abs(out.reports[b].coverage - level);
      if (da != db) return da < db;
      return out.reports[a].mean_width < out.reports[b].mean_width;
    });
  }
  return out;
}

}  // namespace stcar
