// stcar: hierarchical Bayesian CAR models for areal count data.
//
// Exit codes: 0 ok, 2 usage, 3 data validation, 4 sampler failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stcar/io.hpp"
#include "stcar/synth.hpp"

using namespace stcar;

namespace {

constexpr int kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitSampler = 4;

struct DataArgs {
  std::string records, adjacency, sections;
  bool center = false;
};

void add_data_flags(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--records", a.records, "section-year records CSV")
      ->required();
  cmd->add_option("--adjacency", a.adjacency, "edge list CSV")->required();
  cmd->add_option("--sections", a.sections, "section metadata CSV")->required();
  cmd->add_flag("--center-covariates", a.center,
                "subtract the observed-cell mean from each continuous "
                "covariate column before fitting");
}

void add_sampler_flags(CLI::App* cmd, SamplerConfig& c) {
  cmd->add_option("--chains", c.n_chains, "number of chains")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--warmup", c.warmup_iters, "warm-up iterations per chain")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--samples", c.sampling_iters,
                  "post-warmup iterations per chain")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", c.seed, "rng seed");
  cmd->add_option("--target-accept", c.target_accept,
                  "dual-averaging acceptance target");
  cmd->add_option("--max-tree-depth", c.max_tree_depth,
                  "trajectory doubling limit");
}

// Continuous covariates only; dummies and the management indicator are
// left alone. The interaction column is centered as its own column.
void center_covariates(Dataset& d) {
  for (const char* name :
       {"turbidity", "seagrass", "marsh", "marsh_x_turbidity", "log_predator"}) {
    int j = d.cov_index(name);
    if (j < 0) continue;
    double sum = 0.0;
    int n = 0;
    for (int k = 0; k < d.K(); ++k)
      for (int t = 0; t < d.T; ++t)
        if (d.observed(k, t)) {
          sum += d.X(d.row(k, t), j + 1);
          n++;
        }
    if (n == 0) continue;
    d.X.col(j + 1).array() -= sum / n;
  }
}

Dataset load_data(const DataArgs& a) {
  Dataset d = ingest(a.records, a.adjacency, a.sections);
  for (const auto& w : d.graph.warnings) std::cerr << "warning: " << w << "\n";
  if (a.center) center_covariates(d);
  return d;
}

std::vector<ModelSpec> parse_models(const std::string& csv) {
  std::vector<ModelSpec> specs;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    ModelSpec s;
    s.variant = variant_from_string(tok);
    specs.push_back(s);
  }
  if (specs.empty()) throw std::invalid_argument("--models list is empty");
  return specs;
}

int year_index(const Dataset& d, int year_label, const char* what) {
  for (int t = 0; t < d.T; ++t)
    if (d.year_labels[t] == year_label) return t;
  throw DataError(std::string(what) + ": year " + std::to_string(year_label) +
                  " not present in the data");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical Bayesian CAR models for areal count data"};
  app.require_subcommand(1);

  // fit
  auto* fit = app.add_subcommand("fit", "fit one model, write draws + summary");
  DataArgs fit_data;
  SamplerConfig fit_sc;
  std::string fit_model = "4", fit_out = "out";
  add_data_flags(fit, fit_data);
  add_sampler_flags(fit, fit_sc);
  fit->add_option("--model", fit_model, "1|2|3a|3b|4");
  fit->add_option("--out", fit_out, "output directory");

  // cv
  auto* cv = app.add_subcommand("cv", "leave-future-out cross-validation");
  DataArgs cv_data;
  SamplerConfig cv_sc = SamplerConfig::desk_scale();
  std::string cv_models = "1,2,3a,3b,4", cv_out = "out";
  int cv_holdout = 0;
  double cv_level = 0.80;
  bool cv_equal_tail = false;
  add_data_flags(cv, cv_data);
  add_sampler_flags(cv, cv_sc);
  cv->add_option("--models", cv_models, "comma-separated variants");
  cv->add_option("--holdout-year", cv_holdout, "withheld final year label")
      ->required();
  cv->add_option("--level", cv_level, "prediction interval level");
  cv->add_flag("--equal-tail", cv_equal_tail,
               "equal-tail prediction intervals instead of discrete HPDI");
  cv->add_option("--out", cv_out, "output directory");

  // simulate
  auto* sim = app.add_subcommand("simulate", "write a synthetic dataset");
  std::string sim_model = "4", sim_out = "out", sim_groups = "14,13,10";
  SimConfig sim_cfg;
  bool sim_prior_truth = false;
  sim->add_option("--model", sim_model, "1|2|3a|3b|4");
  sim->add_flag("--prior-truth", sim_prior_truth,
                "draw the truth from the full prior instead of the fixed "
                "realistic default (may require rescaled priors)");
  sim->add_option("--groups", sim_groups, "sections per tributary chain");
  sim->add_option("--years", sim_cfg.T, "number of years")
      ->check(CLI::PositiveNumber);
  sim->add_option("--seed", sim_cfg.seed, "rng seed");
  sim->add_option("--out", sim_out, "output directory");

  // sbc
  auto* sbc = app.add_subcommand("sbc", "simulation-based calibration");
  std::string sbc_model = "1", sbc_out = "out";
  SamplerConfig sbc_sc = SamplerConfig::desk_scale();
  SimConfig sbc_sim;
  int sbc_reps = 50, sbc_ranks = 1023;
  double sbc_bias = 0.0;
  sbc->add_option("--model", sbc_model, "1|2|3a|3b|4");
  sbc->add_option("--reps", sbc_reps, "replications")->check(CLI::PositiveNumber);
  sbc->add_option("--ranks", sbc_ranks, "thinned draws per rank statistic");
  sbc->add_option("--groups", sim_groups, "sections per tributary chain");
  sbc->add_option("--years", sbc_sim.T, "number of years");
  sbc->add_option("--sim-seed", sbc_sim.seed, "simulation rng seed");
  ModelSpec sbc_spec;
  sbc->add_option("--beta-var", sbc_spec.beta_var,
                  "fixed-effect prior variance (smaller values keep prior "
                  "draws from overflowing the Poisson mean)");
  sbc->add_option("--ig-shape", sbc_spec.ig_shape,
                  "inverse-gamma shape for the variance hyperpriors");
  sbc->add_option("--ig-scale", sbc_spec.ig_scale,
                  "inverse-gamma scale for the variance hyperpriors");
  sbc->add_option("--mu-log-bias", sbc_bias,
                  "additive ln-mu bias in the fitted likelihood "
                  "(negative control)");
  add_sampler_flags(sbc, sbc_sc);
  sbc->add_option("--out", sbc_out, "output directory");

  // summarize
  auto* summ = app.add_subcommand("summarize", "summary table from saved draws");
  std::string summ_draws = "out", summ_out;
  summ->add_option("--draws", summ_draws, "directory with chain_<i>.csv");
  summ->add_option("--out", summ_out, "output CSV (default <draws>/summary.csv)");

  // effects
  auto* eff = app.add_subcommand("effects", "conditional-effects curves");
  DataArgs eff_data;
  std::string eff_draws = "out", eff_vary = "marsh", eff_out;
  EffectsOptions eff_opt;
  std::string eff_pcts;
  add_data_flags(eff, eff_data);
  eff->add_option("--draws", eff_draws, "directory with chain_<i>.csv");
  eff->add_option("--vary", eff_vary, "turbidity|marsh");
  eff->add_option("--percentiles", eff_pcts,
                  "conditioning percentiles, comma-separated");
  eff->add_option("--grid", eff_opt.grid_points, "grid points per curve");
  eff->add_flag("--include-intercept", eff_opt.include_intercept,
                "add beta_0 to the conditional predictor");
  eff->add_option("--level", eff_opt.level, "credible band level");
  eff->add_option("--out", eff_out, "output CSV (default effects_<vary>.csv)");

  // aggregate
  auto* agg = app.add_subcommand("aggregate",
                                 "pseudo-posterior temporal aggregation");
  DataArgs agg_data;
  std::string agg_draws = "out", agg_out;
  int agg_from = 0, agg_to = 0;
  double agg_level = 0.80;
  add_data_flags(agg, agg_data);
  agg->add_option("--draws", agg_draws, "directory with chain_<i>.csv");
  agg->add_option("--from-year", agg_from, "window start (year label)")
      ->required();
  agg->add_option("--to-year", agg_to, "window end (year label, inclusive)")
      ->required();
  agg->add_option("--level", agg_level, "HPDI level");
  agg->add_option("--out", agg_out, "output CSV (default aggregate.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*fit) {
      ModelSpec spec;
      spec.variant = variant_from_string(fit_model);
      Dataset data = load_data(fit_data);
      PosteriorDraws draws;
      try {
        draws = run_inference(spec, data, fit_sc);
      } catch (const ChainFailure& e) {
        std::cerr << "sampler failure: " << e.what() << "\n";
        return kExitSampler;
      }
      std::filesystem::create_directories(fit_out);
      write_draws(draws, fit_out);
      write_summary_csv(summarize(draws), fit_out + "/summary.csv");
      write_manifest(draws, spec, fit_data.records, fit_data.adjacency,
                     fit_data.sections, fit_out);
      if (draws.n_chains() >= 2)
        std::cout << "max split R-hat: " << max_rhat(draws) << "\n";
      else
        std::cout << "split R-hat unavailable with a single chain\n";
    } else if (*cv) {
      Dataset data = load_data(cv_data);
      std::vector<ModelSpec> specs = parse_models(cv_models);
      LfoResult lfo =
          run_lfo(specs, data, cv_holdout, cv_sc, cv_level, cv_equal_tail);
      std::filesystem::create_directories(cv_out);
      write_cv_report(lfo, data, cv_out + "/cv_report.csv");
      write_cv_summary(lfo, cv_level, cv_out + "/cv_summary.json");
      bool any_ok = false;
      for (const auto& r : lfo.reports) {
        if (r.failed) {
          std::cerr << "model " << r.model << " failed: " << r.failure << "\n";
          continue;
        }
        any_ok = true;
        std::printf("model %s: coverage %.3f (%d sections)\n", r.model.c_str(),
                    r.coverage, r.n_evaluated);
      }
      if (!any_ok) return kExitSampler;
    } else if (*sim) {
      sim_cfg.spec.variant = variant_from_string(sim_model);
      if (!sim_prior_truth)
        sim_cfg.truth = default_truth(sim_cfg.spec.variant);
      sim_cfg.group_sizes.clear();
      std::stringstream ss(sim_groups);
      std::string tok;
      while (std::getline(ss, tok, ','))
        sim_cfg.group_sizes.push_back(std::stoi(tok));
      auto [data, truth] = simulate_dataset(sim_cfg);
      std::filesystem::create_directories(sim_out);
      write_dataset(data, sim_out + "/records.csv", sim_out + "/adjacency.csv",
                    sim_out + "/sections.csv");
      nlohmann::ordered_json j;
      j["model"] = to_string(truth.variant);
      j["beta"] = std::vector<double>(truth.beta.data(),
                                      truth.beta.data() + truth.beta.size());
      j["sigma2_theta"] = truth.sigma2_theta;
      j["sigma2_phi"] = truth.sigma2_phi;
      j["sigma2_eta"] = truth.sigma2_eta;
      j["lambda"] = truth.lambda;
      j["rho"] = truth.rho;
      j["P"] = truth.P;
      j["r"] = {truth.r[0], truth.r[1]};
      std::ofstream(sim_out + "/truth.json") << j.dump(2) << "\n";
    } else if (*sbc) {
      ModelSpec spec = sbc_spec;
      spec.variant = variant_from_string(sbc_model);
      sbc_sim.spec = spec;
      sbc_sim.group_sizes.clear();
      std::stringstream ss(sim_groups);
      std::string tok;
      while (std::getline(ss, tok, ','))
        sbc_sim.group_sizes.push_back(std::stoi(tok));
      SbcResult res =
          sbc_run(spec, sbc_sim, sbc_reps, sbc_sc, sbc_ranks, sbc_bias);
      std::filesystem::create_directories(sbc_out);
      {
        std::ofstream f(sbc_out + "/sbc_ranks.csv");
        for (size_t j = 0; j < res.param_names.size(); ++j)
          f << (j ? "," : "") << res.param_names[j];
        f << "\n";
        for (int i = 0; i < res.ranks.rows(); ++i) {
          for (int j = 0; j < res.ranks.cols(); ++j)
            f << (j ? "," : "") << res.ranks(i, j);
          f << "\n";
        }
      }
      nlohmann::ordered_json j;
      j["n_reps"] = res.n_reps;
      j["n_converged"] = (int)res.ranks.rows();
      j["nonconverged_reps"] = res.nonconverged_reps;
      j["n_ranks"] = res.n_ranks;
      nlohmann::ordered_json pv;
      for (size_t p = 0; p < res.param_names.size(); ++p)
        pv[res.param_names[p]] = res.chi2_pvalue((int)p);
      j["chi2_pvalue"] = pv;
      std::ofstream(sbc_out + "/sbc_summary.json") << j.dump(2) << "\n";
      for (size_t p = 0; p < res.param_names.size(); ++p)
        std::printf("%s: rank-uniformity p = %.4f\n",
                    res.param_names[p].c_str(), res.chi2_pvalue((int)p));
    } else if (*summ) {
      PosteriorDraws draws = read_draws(summ_draws);
      if (summ_out.empty()) summ_out = summ_draws + "/summary.csv";
      write_summary_csv(summarize(draws), summ_out);
    } else if (*eff) {
      Dataset data = load_data(eff_data);
      PosteriorDraws draws = read_draws(eff_draws);
      if (!eff_pcts.empty()) {
        eff_opt.percentiles.clear();
        std::stringstream ss(eff_pcts);
        std::string tok;
        while (std::getline(ss, tok, ','))
          eff_opt.percentiles.push_back(std::stod(tok));
      }
      EffectsTable tab = conditional_effects(draws, data, eff_vary, eff_opt);
      if (eff_out.empty()) eff_out = "effects_" + eff_vary + ".csv";
      write_effects_csv(tab, eff_out);
    } else if (*agg) {
      Dataset data = load_data(agg_data);
      PosteriorDraws draws = read_draws(agg_draws);
      int lo = year_index(data, agg_from, "--from-year");
      int hi = year_index(data, agg_to, "--to-year");
      AggregateTable tab =
          aggregate_pseudo_posterior(draws, data, lo, hi, agg_level);
      if (agg_out.empty()) agg_out = "aggregate.csv";
      write_aggregate_csv(tab, agg_out);
    }
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ChainFailure& e) {
    std::cerr << "sampler failure: " << e.what() << "\n";
    return kExitSampler;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
