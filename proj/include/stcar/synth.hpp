#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "stcar/sampler.hpp"

namespace stcar {

/// Covariate and offset generator ranges, defaults mimicking the observed
/// section-year spreads of the survey region.
struct CovariateRanges {
  double turbidity_lo = -2.34, turbidity_hi = -0.26;  // negative Secchi (m)
  double rsa_lo = 0.0, rsa_hi = 0.17;
  double rma_lo = 0.01, rma_hi = 0.48;
  double predator_count_max = 2838.0;  // covariate is log1p of the count
  double tow_lo_m = 500.0, tow_hi_m = 5000.0;
  int management_switch_t = 13;  // management = 1 for t >= switch (0-based)
};

struct SimConfig {
  ModelSpec spec;
  std::vector<int> group_sizes = {14, 13, 10};  // chain graph per group
  int T = 21;
  /// Fixed truth for beta and the scalar parameters; random-effect vectors
  /// are always drawn from the variant's process. Absent -> full prior draw.
  std::optional<Parameters> truth;
  CovariateRanges ranges;
  std::vector<std::pair<int, int>> missing_cells;  // (section, year) masked
  std::uint64_t seed = 1;
};

/// Chain-topology graph with the configured group sizes.
ArealGraph make_chain_graph(const std::vector<int>& group_sizes);

/// Realistic fixed truth for the standard covariate schema: coefficients
/// of realistic field-data magnitude, lambda 0.55, rho 0.15, modest
/// variances. Keeps
/// ln mu in a sane range under the default CovariateRanges.
Parameters default_truth(Variant v);

/// Forward-simulate a dataset; returns it with the realized Parameters
/// (including the drawn random effects). Throws if any ln mu exceeds 20
/// (rescale the fixture).
std::pair<Dataset, Parameters> simulate_dataset(const SimConfig& cfg);

struct SbcResult {
  std::vector<std::string> param_names;  // scalar block (no random effects)
  Eigen::MatrixXi ranks;                 // converged reps x params, in 0..n_ranks
  int n_ranks = 0;
  std::vector<int> nonconverged_reps;    // excluded from ranks, reported
  int n_reps = 0;

  /// Chi-square uniformity p-value of a parameter's rank histogram.
  double chi2_pvalue(int param, int n_bins = 10) const;
};

/// Simulation-based calibration: per rep draw scalars from the prior,
/// simulate, fit, record the rank of the truth among thinned posterior
/// draws. mu_log_bias != 0 deliberately breaks the fitted likelihood
/// (negative control). Reps with split R-hat >= 1.05 are excluded and
/// counted in nonconverged_reps.
SbcResult sbc_run(const ModelSpec& spec, const SimConfig& sim_config,
                  int n_reps, const SamplerConfig& sampler_config,
                  int n_ranks = 1023, double mu_log_bias = 0.0);

}  // namespace stcar
