#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "stcar/posterior.hpp"
#include "stcar/sampler.hpp"

namespace stcar {

struct CountInterval {
  long low = 0, high = 0;
};

/// Smallest-width integer interval containing at least `level` of the count
/// draws (discrete HPDI convention). Requires >= 500 draws.
CountInterval prediction_interval(const Eigen::VectorXd& count_draws,
                                  double level = 0.80);
/// Equal-tail alternative, offered behind the CLI flag.
CountInterval prediction_interval_equal_tail(const Eigen::VectorXd& count_draws,
                                             double level = 0.80);

struct SectionForecast {
  int section = 0;
  bool evaluated = false;  // covariates + observation available
  double observed = 0.0;
  CountInterval interval;
  bool inside = false;
};

struct ForecastReport {
  std::string model;
  Eigen::MatrixXd count_draws;  // n_draws x K (column unused if unavailable)
  std::vector<bool> available;
  std::vector<SectionForecast> sections;
  double coverage = 0.0;
  int n_evaluated = 0;
  double mean_width = 0.0;
  bool failed = false;
  std::string failure;
};

/// Posterior-predictive count draws for one future year. Sections whose
/// new-year covariate row contains NaN are skipped. Temporal effects are
/// propagated per variant (eta/Phi one step ahead); iid effects are reused.
Eigen::MatrixXd forecast_year(const ModelSpec& spec,
                              const PosteriorDraws& draws, const Dataset& data,
                              const Eigen::MatrixXd& X_new,
                              const Eigen::VectorXd& offset_new,
                              std::mt19937_64& rng);

/// Fill interval/coverage fields of a report from draws + held-out counts.
void score_forecast(ForecastReport& rep, const Eigen::VectorXd& observed,
                    const std::vector<bool>& observed_mask, double level,
                    bool equal_tail_intervals = false);

double coverage(const ForecastReport& rep);

struct LfoResult {
  std::vector<ForecastReport> reports;  // one per requested model
  std::vector<int> ranking;  // indices into reports, best first (if >1 model)
};

/// Leave-future-out CV: fit each model on all years but the last, forecast
/// the final (holdout) year, rank by |coverage - level| then interval
/// sharpness. holdout_year is the external year label and must be the
/// dataset's final year (only 1-step-ahead LFO is supported).
LfoResult run_lfo(const std::vector<ModelSpec>& specs,
                  const Dataset& dataset_full, int holdout_year,
                  const SamplerConfig& config, double level = 0.80,
                  bool equal_tail_intervals = false);

}  // namespace stcar
