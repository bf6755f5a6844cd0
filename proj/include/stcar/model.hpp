#pragma once

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

#include "stcar/data.hpp"

namespace stcar {

enum class Variant { M1, M2, M3a, M3b, M4 };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

/// Model choice plus prior hyperparameters. Normal second parameters are
/// variances (N(0,100) means sd 10, N(0,0.25) means sd 0.5).
struct ModelSpec {
  Variant variant = Variant::M4;
  double beta_var = 100.0;  // fixed-effect prior variance
  double ig_shape = 1.0;    // inverse-gamma hyperprior on variances
  double ig_scale = 1.0;
  double r_var = 0.25;      // prior variance of r_1, r_2 (M3b)
};

/// Constrained-scale parameter set. Which fields are meaningful depends on
/// the variant; unused fields stay at their defaults.
struct Parameters {
  Variant variant = Variant::M1;
  Eigen::VectorXd beta;                // nb = n_cov + 1
  double sigma2_theta = 1.0;           // M1
  double sigma2_phi = 1.0;             // M2, M3a, M3b, M4
  double sigma2_eta = 1.0;             // M3a, M3b
  double lambda = 0.0;                 // M2..M4, in [0,1)
  double rho = 0.0;                    // M3a, M4, in [0,1)
  double P = 0.5;                      // M3b, in (0,1)
  Eigen::Vector2d r = Eigen::Vector2d::Zero();  // M3b; r_3 = -r_1-r_2
  Eigen::VectorXd theta;               // M1: K
  Eigen::MatrixXd phi;                 // K x 1 (M2/M3) or K x T (M4)
  Eigen::MatrixXd eta;                 // 1 x T (M3a) or G x T (M3b)

  double rho_g(int g) const;           // M3b tributary autocorrelation
};

/// Flat-vector layout on the unconstrained scale: log for variances, logit
/// for lambda/rho/P, identity for everything else. Bijective with
/// Parameters (up to the boundary points excluded by the transforms).
struct ParamLayout {
  Variant variant = Variant::M1;
  int nb = 0, K = 0, T = 0, G = 0;
  int i_ls2_theta = -1, i_ls2_phi = -1, i_ls2_eta = -1;
  int i_lam = -1, i_rho = -1, i_P = -1, i_r = -1;
  int i_theta = -1, i_phi = -1, i_eta = -1;
  int dim = 0;

  static ParamLayout make(Variant v, int nb, int K, int T, int G);

  int phi_index(int k, int t) const { return i_phi + t * K + k; }
  int eta_index(int g, int t) const { return i_eta + g * T + t; }

  std::vector<std::string> names(const std::vector<std::string>& cov_names) const;
  Eigen::VectorXd unconstrain(const Parameters& p) const;
  Parameters constrain(const Eigen::VectorXd& u) const;
  /// Same layout as the unconstrained vector but with scalars mapped back
  /// to their natural scale; rows of PosteriorDraws use this.
  Eigen::VectorXd constrained_values(const Eigen::VectorXd& u) const;
  double log_jacobian(const Eigen::VectorXd& u) const;
};

/// ln mu_kt for the variant's linear predictor.
double linear_predictor(const Parameters& p, const Dataset& d, int k, int t);

/// Unnormalized log posterior on the constrained scale (no Jacobian).
/// Poisson log-factorial terms are dropped (constant in the parameters).
/// Domain violations return -inf.
double log_joint(const Parameters& p, const Dataset& d, const ModelSpec& spec);

/// Draw from the full prior (including the variant's random-effect process).
Parameters sample_prior(const ModelSpec& spec, const ArealGraph& graph, int T,
                        std::mt19937_64& rng);

/// Posterior on unconstrained space: log_joint(constrain(u)) + log|Jacobian|,
/// with analytic gradient. mu_log_bias shifts ln mu in the likelihood only
/// (used as a negative control in calibration tests).
class LogDensity {
 public:
  LogDensity(const ModelSpec& spec, const Dataset& data,
             double mu_log_bias = 0.0);

  int dim() const { return layout_.dim; }
  const ParamLayout& layout() const { return layout_; }
  const ModelSpec& spec() const { return spec_; }
  const Dataset& data() const { return *data_; }

  /// Value, and gradient if grad is non-null (resized to dim()).
  double operator()(const Eigen::VectorXd& u, Eigen::VectorXd* grad) const;

 private:
  ModelSpec spec_;
  const Dataset* data_;
  ParamLayout layout_;
  double mu_log_bias_;
  // cached observed-cell views
  std::vector<int> obs_k_, obs_t_;
  Eigen::MatrixXd X_obs_;
  Eigen::VectorXd y_obs_, off_obs_;
};

}  // namespace stcar
