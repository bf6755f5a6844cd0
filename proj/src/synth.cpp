#include "stcar/synth.hpp"

#include <cmath>
#include <stdexcept>

#include "stcar/stats.hpp"

namespace stcar {

ArealGraph make_chain_graph(const std::vector<int>& group_sizes) {
  std::vector<std::pair<int, int>> edges;
  std::vector<int> groups;
  int base = 0;
  for (int g = 0; g < (int)group_sizes.size(); ++g) {
    int n = group_sizes[g];
    if (n < 2) throw std::invalid_argument("each group chain needs >= 2 sections");
    for (int i = 0; i < n; ++i) groups.push_back(g);
    for (int i = 0; i + 1 < n; ++i) edges.push_back({base + i, base + i + 1});
    base += n;
  }
  return build_graph(base, edges, groups);
}

Parameters default_truth(Variant v) {
  Parameters p;
  p.variant = v;
  p.beta.resize(9);
  // intercept, turbidity, seagrass, marsh, marsh x turbidity, log predator,
  // management, rappahannock, york
  p.beta << -2.0, 0.48, 1.5, 0.7, 0.9, -0.15, 0.4, -0.5, -0.8;
  p.sigma2_theta = 0.3;
  p.sigma2_phi = 0.3;
  p.sigma2_eta = 0.1;
  p.lambda = 0.55;
  p.rho = 0.15;
  p.P = 0.5;
  p.r << 0.3, -0.2;
  return p;
}

std::pair<Dataset, Parameters> simulate_dataset(const SimConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  ArealGraph graph = make_chain_graph(cfg.group_sizes);
  const int K = graph.n_sections, T = cfg.T;
  const auto names = standard_cov_names();
  const int p = (int)names.size();

  Dataset d;
  d.graph = graph;
  d.T = T;
  d.n_cov = p;
  d.cov_names = names;
  d.X.resize((Eigen::Index)K * T, p + 1);
  d.offset.resize(K, T);
  d.counts.setZero(K, T);
  d.observed.setConstant(K, T, true);
  for (int k = 0; k < K; ++k) d.section_labels.push_back("s" + std::to_string(k));
  for (int t = 0; t < T; ++t) d.year_labels.push_back(1996 + t);

  const CovariateRanges& r = cfg.ranges;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto unif = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  for (int k = 0; k < K; ++k)
    for (int t = 0; t < T; ++t) {
      double turb = unif(r.turbidity_lo, r.turbidity_hi);
      double rsa = unif(r.rsa_lo, r.rsa_hi);
      double rma = unif(r.rma_lo, r.rma_hi);
      double logpred = std::log1p(unif(0.0, r.predator_count_max));
      double mgmt = (t >= r.management_switch_t) ? 1.0 : 0.0;
      double rapp = (graph.group_of[k] == 1) ? 1.0 : 0.0;
      double york = (graph.group_of[k] == 2) ? 1.0 : 0.0;
      Eigen::VectorXd row(p + 1);
      row << 1.0, turb, rsa, rma, rma * turb, logpred, mgmt, rapp, york;
      d.X.row(d.row(k, t)) = row;
      d.offset(k, t) = std::log(unif(r.tow_lo_m, r.tow_hi_m));
    }

  // parameters: scalars from truth or the prior; effects from the process
  Parameters par;
  if (cfg.truth) {
    par = *cfg.truth;
    par.variant = cfg.spec.variant;
    if (par.beta.size() != p + 1)
      throw std::invalid_argument("truth beta must have length " +
                                  std::to_string(p + 1));
    std::normal_distribution<double> nd(0.0, 1.0);
    switch (par.variant) {
      case Variant::M1: {
        par.theta.resize(K);
        for (int k = 0; k < K; ++k)
          par.theta[k] = std::sqrt(par.sigma2_theta) * nd(rng);
        break;
      }
      case Variant::M2: {
        par.phi.resize(K, 1);
        par.phi.col(0) = sample_car(graph, par.lambda, par.sigma2_phi, rng);
        break;
      }
      case Variant::M3a: {
        par.phi.resize(K, 1);
        par.phi.col(0) = sample_car(graph, par.lambda, par.sigma2_phi, rng);
        par.eta.resize(1, T);
        par.eta(0, 0) = std::sqrt(par.sigma2_eta) * nd(rng);
        for (int t = 1; t < T; ++t)
          par.eta(0, t) =
              par.rho * par.eta(0, t - 1) + std::sqrt(par.sigma2_eta) * nd(rng);
        break;
      }
      case Variant::M3b: {
        par.phi.resize(K, 1);
        par.phi.col(0) = sample_car(graph, par.lambda, par.sigma2_phi, rng);
        par.eta.resize(graph.n_groups, T);
        for (int g = 0; g < graph.n_groups; ++g) {
          double rg = par.rho_g(g);
          par.eta(g, 0) = std::sqrt(par.sigma2_eta) * nd(rng);
          for (int t = 1; t < T; ++t)
            par.eta(g, t) =
                rg * par.eta(g, t - 1) + std::sqrt(par.sigma2_eta) * nd(rng);
        }
        break;
      }
      case Variant::M4: {
        par.phi.resize(K, T);
        par.phi.col(0) = sample_car(graph, par.lambda, par.sigma2_phi, rng);
        for (int t = 1; t < T; ++t)
          par.phi.col(t) = par.rho * par.phi.col(t - 1) +
                           sample_car(graph, par.lambda, par.sigma2_phi, rng);
        break;
      }
    }
  } else {
    par = sample_prior(cfg.spec, graph, T, rng);
  }

  for (int k = 0; k < K; ++k)
    for (int t = 0; t < T; ++t) {
      double lmu = linear_predictor(par, d, k, t);
      if (lmu > 20.0)
        throw std::invalid_argument(
            "simulate_dataset: ln mu exceeds 20; rescale the fixture "
            "(smaller coefficients, covariate ranges, or offsets)");
      std::poisson_distribution<long long> pois(std::exp(lmu));
      d.counts(k, t) = (double)pois(rng);
    }

  for (auto [k, t] : cfg.missing_cells) {
    if (k < 0 || k >= K || t < 0 || t >= T)
      throw std::invalid_argument("missing cell out of range");
    d.observed(k, t) = false;
    d.counts(k, t) = 0;
  }
  d.validate();
  return {std::move(d), std::move(par)};
}

double SbcResult::chi2_pvalue(int param, int n_bins) const {
  const int n = (int)ranks.rows();
  if (n < 2) return std::nan("");
  std::vector<int> hist(n_bins, 0);
  for (int i = 0; i < n; ++i) {
    int b = (int)((long long)ranks(i, param) * n_bins / (n_ranks + 1));
    hist[std::min(b, n_bins - 1)]++;
  }
  double e = (double)n / n_bins, stat = 0.0;
  for (int b = 0; b < n_bins; ++b) stat += (hist[b] - e) * (hist[b] - e) / e;
  return 1.0 - chi2_cdf(stat, n_bins - 1.0);
}

SbcResult sbc_run(const ModelSpec& spec, const SimConfig& sim_config,
                  int n_reps, const SamplerConfig& sampler_config,
                  int n_ranks, double mu_log_bias) {
  SbcResult out;
  out.n_ranks = n_ranks;
  out.n_reps = n_reps;

  std::vector<Eigen::VectorXi> rank_rows;
  for (int rep = 0; rep < n_reps; ++rep) {
    SimConfig cfg = sim_config;
    cfg.spec = spec;
    cfg.truth.reset();  // full prior draw
    Dataset data;
    Parameters truth;
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      cfg.seed = sim_config.seed ^
                 (0x9e3779b97f4a7c15ULL * (std::uint64_t)(rep * 100 + attempt + 1));
      try {
        std::tie(data, truth) = simulate_dataset(cfg);
        ok = true;
      } catch (const std::invalid_argument&) {
        // prior draw produced an overflowing fixture; redraw
      }
    }
    if (!ok) throw std::runtime_error("sbc_run: could not simulate a rep");

    LogDensity target(spec, data, mu_log_bias);
    SamplerConfig sc = sampler_config;
    sc.seed = sampler_config.seed ^ (0xda3e39cb94b95bdbULL * (std::uint64_t)(rep + 1));
    PosteriorDraws draws = run_inference(target, sc);

    const ParamLayout& L = target.layout();
    int scalar_dim = L.dim;
    for (int i : {L.i_theta, L.i_phi, L.i_eta})
      if (i >= 0) scalar_dim = std::min(scalar_dim, i);
    if (out.param_names.empty()) {
      auto all = L.names(data.cov_names);
      out.param_names.assign(all.begin(), all.begin() + scalar_dim);
    }

    Eigen::VectorXd truth_c =
        L.constrained_values(L.unconstrain(truth)).head(scalar_dim);

    double maxr = 0.0;
    for (int j = 0; j < scalar_dim; ++j)
      maxr = std::max(maxr, split_rhat(draws, j).value);
    if (!(maxr < 1.05)) {
      out.nonconverged_reps.push_back(rep);
      continue;
    }

    Eigen::VectorXi row(scalar_dim);
    for (int j = 0; j < scalar_dim; ++j) {
      Eigen::VectorXd pooled = draws.pooled(j);
      const int np = (int)pooled.size();
      if (np < n_ranks)
        throw std::invalid_argument("sbc_run: need at least n_ranks pooled draws");
      int rank = 0;
      for (int i = 0; i < n_ranks; ++i) {
        int idx = (int)((long long)i * np / n_ranks);
        rank += pooled[idx] < truth_c[j];
      }
      row[j] = rank;
    }
    rank_rows.push_back(row);
  }

  out.ranks.resize((int)rank_rows.size(),
                   rank_rows.empty() ? 0 : (int)rank_rows[0].size());
  for (int i = 0; i < (int)rank_rows.size(); ++i)
    out.ranks.row(i) = rank_rows[i].transpose();
  return out;
}

}  // namespace stcar
