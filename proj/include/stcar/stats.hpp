#pragma once

#include <Eigen/Dense>

namespace stcar {

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

double chi2_cdf(double x, double df);

double normal_cdf(double x);

/// Kolmogorov-Smirnov distance of a sample to U(0,1).
double ks_uniform_distance(Eigen::VectorXd sample);

/// P(Bin(n, p) <= k)
double binomial_cdf(int k, int n, double p);

}  // namespace stcar
