#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "stcar/sampler.hpp"

namespace stcar {

struct Interval {
  double low = 0.0, high = 0.0;
};

/// Shortest contiguous interval containing ceil(level*n) sorted draws.
/// Requires at least 50 draws.
Interval hpdi(const Eigen::VectorXd& draws, double level = 0.80);

/// Equal-tail interval at the same level (for comparisons).
Interval equal_tail(const Eigen::VectorXd& draws, double level = 0.80);

double quantile(const Eigen::VectorXd& draws, double q);

struct SummaryRow {
  std::string name;
  double q10, q50, q90;
  double hpdi_low, hpdi_high;
  bool excludes_zero;  // 0 outside the 80% HPDI
};

struct SummaryTable {
  std::vector<SummaryRow> rows;
  const SummaryRow& row(const std::string& name) const;
};

SummaryTable summarize(const PosteriorDraws& draws);

/// Fraction of draw-aligned pairs with a > b; ties count 0.5.
double prob_greater(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct EffectsCurve {
  double conditioning_percentile;  // e.g. 20 for the 20th percentile
  double conditioning_value;
  std::vector<double> grid;
  std::vector<double> median, low, high;  // exp(mu_cond) pointwise
};

struct EffectsTable {
  std::string vary;  // "turbidity" or "marsh"
  std::vector<EffectsCurve> curves;
};

struct EffectsOptions {
  std::vector<double> percentiles = {1, 20, 40, 60, 80, 99};
  int grid_points = 50;
  double log_offset = std::log(1000.0);
  bool include_intercept = false;
  double level = 0.80;
};

/// Conditional-effects curves for expected abundance per offset unit:
/// vary one of {turbidity, marsh} on a grid while the other is held at the
/// dataset's empirical percentiles; all other continuous covariates at 0,
/// baseline tributary, post-change management.
EffectsTable conditional_effects(const PosteriorDraws& draws,
                                 const Dataset& data, const std::string& vary,
                                 const EffectsOptions& opt = {});

struct AggregateRow {
  int section;
  std::string label;
  int group;
  int years_used;
  double median, hpdi_low, hpdi_high;
  double standardized_median;  // within-group z-score of the median
};

struct AggregateTable {
  std::vector<AggregateRow> rows;
};

/// Pseudo-posterior temporal aggregation for spatiotemporal (variant 4)
/// draws: per section, average covariates, offsets and per-draw random
/// effects over observed years in [year_lo, year_hi] (0-based, inclusive),
/// recompute mu per draw, summarize. Sections with no observed years in
/// the window are dropped with a warning entry removed from rows.
AggregateTable aggregate_pseudo_posterior(const PosteriorDraws& draws,
                                          const Dataset& data, int year_lo,
                                          int year_hi, double level = 0.80);

}  // namespace stcar
