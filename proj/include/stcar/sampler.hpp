#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stcar/model.hpp"

namespace stcar {

struct SamplerConfig {
  int n_chains = 4;
  int warmup_iters = 15000;
  int sampling_iters = 15000;
  std::uint64_t seed = 0;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  double init_jitter = 0.1;

  static SamplerConfig desk_scale() {
    SamplerConfig c;
    c.warmup_iters = 1500;
    c.sampling_iters = 1500;
    return c;
  }
};

struct ChainResult {
  Eigen::MatrixXd draws;  // sampling_iters x dim, constrained scale
  double accept_rate = 0.0;
  int divergences = 0;
  double step_size = 0.0;
};

struct RhatEntry {
  double value = 0.0;
  bool degenerate = false;  // zero within-chain variance
};

struct PosteriorDraws {
  std::vector<std::string> names;
  std::vector<ChainResult> chains;
  SamplerConfig config;

  int n_chains() const { return (int)chains.size(); }
  int dim() const { return (int)names.size(); }
  int index_of(const std::string& name) const;
  /// All chains stacked, one column.
  Eigen::VectorXd pooled(int param) const;
  Eigen::VectorXd pooled(const std::string& name) const;
  int total_draws() const;
};

/// Thrown by run_inference when a chain aborts; carries what finished.
struct ChainFailure : std::runtime_error {
  ChainFailure(const std::string& msg, PosteriorDraws partial)
      : std::runtime_error(msg), completed(std::move(partial)) {}
  PosteriorDraws completed;
};

/// Single NUTS chain: dual-averaging step size, diagonal mass matrix
/// estimated over warm-up windows, warmup discarded. Deterministic in
/// (target, config, chain_seed).
ChainResult run_chain(const LogDensity& target, const SamplerConfig& config,
                      std::uint64_t chain_seed);

/// n_chains independent chains with seeds derived from config.seed.
PosteriorDraws run_inference(const ModelSpec& spec, const Dataset& data,
                             const SamplerConfig& config);
PosteriorDraws run_inference(const LogDensity& target,
                             const SamplerConfig& config);

/// Split R-hat over 2*n_chains half-chains. Degenerate (zero within-chain
/// variance) is reported as +inf with the flag set.
RhatEntry split_rhat(const PosteriorDraws& draws, int param);
RhatEntry split_rhat(const PosteriorDraws& draws, const std::string& name);

/// Max split R-hat across all parameters (NaN-safe; degenerate -> inf).
double max_rhat(const PosteriorDraws& draws);

}  // namespace stcar
