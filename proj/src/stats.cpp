#include "stcar/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stcar {

namespace {

// series expansion, valid for x < a+1
double gamma_p_series(double a, double x) {
  double ap = a, sum = 1.0 / a, del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// continued fraction for Q(a,x), valid for x >= a+1
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p domain");
  if (x == 0.0) return 0.0;
  return (x < a + 1.0) ? gamma_p_series(a, x) : 1.0 - gamma_q_cf(a, x);
}

double chi2_cdf(double x, double df) {
  if (x <= 0.0) return 0.0;
  return gamma_p(df / 2.0, x / 2.0);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double ks_uniform_distance(Eigen::VectorXd sample) {
  const int n = (int)sample.size();
  if (n == 0) throw std::invalid_argument("empty sample");
  std::sort(sample.data(), sample.data() + n);
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    double f = sample[i];  // U(0,1) cdf
    d = std::max(d, std::abs((i + 1.0) / n - f));
    d = std::max(d, std::abs(f - (double)i / n));
  }
  return d;
}

double binomial_cdf(int k, int n, double p) {
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  double acc = 0.0;
  for (int i = 0; i <= k; ++i) {
    double lg = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                std::lgamma(n - i + 1.0) + i * std::log(p) +
                (n - i) * std::log1p(-p);
    acc += std::exp(lg);
  }
  return std::min(1.0, acc);
}

}  // namespace stcar
