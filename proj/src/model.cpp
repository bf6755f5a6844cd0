#include "stcar/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace stcar {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

double invlogit(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p) - std::log1p(-p); }

double invgamma_logpdf(double s2, double a, double b) {
  return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(s2) - b / s2;
}
double invgamma_dlogpdf(double s2, double a, double b) {
  return -(a + 1.0) / s2 + b / (s2 * s2);
}

double normal_logpdf(double x, double var) {
  return -0.5 * (kLog2Pi + std::log(var)) - x * x / (2.0 * var);
}

// d/dlambda log det(D - lambda W)
double dlogdet_dlambda(const ArealGraph& g, double lambda) {
  double acc = 0.0;
  for (int i = 0; i < g.spectral.gamma.size(); ++i)
    acc -= g.spectral.gamma[i] / (1.0 - lambda * g.spectral.gamma[i]);
  return acc;
}

Eigen::VectorXd apply_prec(const ArealGraph& g, double lambda,
                           const Eigen::VectorXd& v) {
  Eigen::VectorXd out = -lambda * (g.W * v);
  for (int k = 0; k < g.n_sections; ++k) out[k] += g.degrees[k] * v[k];
  return out;
}

// log MVN(v | 0, s2 (D - lambda W)^{-1})
double car_logpdf(const ArealGraph& g, const Eigen::VectorXd& v, double lambda,
                  double s2) {
  const int K = g.n_sections;
  double quad = v.dot(apply_prec(g, lambda, v));
  return 0.5 * (log_det_precision(g, lambda) - K * std::log(s2)) -
         0.5 * K * kLog2Pi - quad / (2.0 * s2);
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::M1: return "1";
    case Variant::M2: return "2";
    case Variant::M3a: return "3a";
    case Variant::M3b: return "3b";
    case Variant::M4: return "4";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "1" || s == "M1") return Variant::M1;
  if (s == "2" || s == "M2") return Variant::M2;
  if (s == "3a" || s == "M3a") return Variant::M3a;
  if (s == "3b" || s == "M3b") return Variant::M3b;
  if (s == "4" || s == "M4") return Variant::M4;
  throw std::invalid_argument("unknown model variant: " + s);
}

double Parameters::rho_g(int g) const {
  double r3 = -r[0] - r[1];
  double rg = (g == 0) ? r[0] : (g == 1 ? r[1] : r3);
  return invlogit(logit(P) + rg);
}

ParamLayout ParamLayout::make(Variant v, int nb, int K, int T, int G) {
  ParamLayout L;
  L.variant = v;
  L.nb = nb;
  L.K = K;
  L.T = T;
  L.G = G;
  int i = nb;
  switch (v) {
    case Variant::M1:
      L.i_ls2_theta = i++;
      L.i_theta = i;
      i += K;
      break;
    case Variant::M2:
      L.i_ls2_phi = i++;
      L.i_lam = i++;
      L.i_phi = i;
      i += K;
      break;
    case Variant::M3a:
      L.i_ls2_phi = i++;
      L.i_ls2_eta = i++;
      L.i_lam = i++;
      L.i_rho = i++;
      L.i_phi = i;
      i += K;
      L.i_eta = i;
      i += T;
      break;
    case Variant::M3b:
      L.i_ls2_phi = i++;
      L.i_ls2_eta = i++;
      L.i_lam = i++;
      L.i_P = i++;
      L.i_r = i;
      i += 2;
      L.i_phi = i;
      i += K;
      L.i_eta = i;
      i += G * T;
      break;
    case Variant::M4:
      L.i_ls2_phi = i++;
      L.i_lam = i++;
      L.i_rho = i++;
      L.i_phi = i;
      i += K * T;
      break;
  }
  L.dim = i;
  return L;
}

std::vector<std::string> ParamLayout::names(
    const std::vector<std::string>& cov_names) const {
  std::vector<std::string> out(dim);
  out[0] = "beta.intercept";
  for (int j = 1; j < nb; ++j)
    out[j] = "beta." + ((int)cov_names.size() >= j ? cov_names[j - 1]
                                                   : "x" + std::to_string(j));
  if (i_ls2_theta >= 0) out[i_ls2_theta] = "sigma2_theta";
  if (i_ls2_phi >= 0) out[i_ls2_phi] = "sigma2_phi";
  if (i_ls2_eta >= 0) out[i_ls2_eta] = "sigma2_eta";
  if (i_lam >= 0) out[i_lam] = "lambda";
  if (i_rho >= 0) out[i_rho] = "rho";
  if (i_P >= 0) out[i_P] = "P";
  if (i_r >= 0) {
    out[i_r] = "r.1";
    out[i_r + 1] = "r.2";
  }
  if (i_theta >= 0)
    for (int k = 0; k < K; ++k) out[i_theta + k] = "theta." + std::to_string(k);
  if (i_phi >= 0) {
    if (variant == Variant::M4) {
      for (int t = 0; t < T; ++t)
        for (int k = 0; k < K; ++k)
          out[phi_index(k, t)] =
              "phi." + std::to_string(k) + "." + std::to_string(t);
    } else {
      for (int k = 0; k < K; ++k) out[i_phi + k] = "phi." + std::to_string(k);
    }
  }
  if (i_eta >= 0) {
    if (variant == Variant::M3b) {
      for (int g = 0; g < G; ++g)
        for (int t = 0; t < T; ++t)
          out[eta_index(g, t)] =
              "eta." + std::to_string(g) + "." + std::to_string(t);
    } else {
      for (int t = 0; t < T; ++t) out[i_eta + t] = "eta." + std::to_string(t);
    }
  }
  return out;
}

Eigen::VectorXd ParamLayout::unconstrain(const Parameters& p) const {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
  u.head(nb) = p.beta;
  if (i_ls2_theta >= 0) u[i_ls2_theta] = std::log(p.sigma2_theta);
  if (i_ls2_phi >= 0) u[i_ls2_phi] = std::log(p.sigma2_phi);
  if (i_ls2_eta >= 0) u[i_ls2_eta] = std::log(p.sigma2_eta);
  if (i_lam >= 0) u[i_lam] = logit(p.lambda);
  if (i_rho >= 0) u[i_rho] = logit(p.rho);
  if (i_P >= 0) u[i_P] = logit(p.P);
  if (i_r >= 0) {
    u[i_r] = p.r[0];
    u[i_r + 1] = p.r[1];
  }
  if (i_theta >= 0) u.segment(i_theta, K) = p.theta;
  if (i_phi >= 0) {
    if (variant == Variant::M4)
      for (int t = 0; t < T; ++t) u.segment(i_phi + t * K, K) = p.phi.col(t);
    else
      u.segment(i_phi, K) = p.phi.col(0);
  }
  if (i_eta >= 0) {
    if (variant == Variant::M3b)
      for (int g = 0; g < G; ++g)
        u.segment(i_eta + g * T, T) = p.eta.row(g).transpose();
    else
      u.segment(i_eta, T) = p.eta.row(0).transpose();
  }
  return u;
}

Parameters ParamLayout::constrain(const Eigen::VectorXd& u) const {
  Parameters p;
  p.variant = variant;
  p.beta = u.head(nb);
  if (i_ls2_theta >= 0) p.sigma2_theta = std::exp(u[i_ls2_theta]);
  if (i_ls2_phi >= 0) p.sigma2_phi = std::exp(u[i_ls2_phi]);
  if (i_ls2_eta >= 0) p.sigma2_eta = std::exp(u[i_ls2_eta]);
  if (i_lam >= 0) p.lambda = invlogit(u[i_lam]);
  if (i_rho >= 0) p.rho = invlogit(u[i_rho]);
  if (i_P >= 0) p.P = invlogit(u[i_P]);
  if (i_r >= 0) p.r = Eigen::Vector2d(u[i_r], u[i_r + 1]);
  if (i_theta >= 0) p.theta = u.segment(i_theta, K);
  if (i_phi >= 0) {
    if (variant == Variant::M4) {
      p.phi.resize(K, T);
      for (int t = 0; t < T; ++t) p.phi.col(t) = u.segment(i_phi + t * K, K);
    } else {
      p.phi.resize(K, 1);
      p.phi.col(0) = u.segment(i_phi, K);
    }
  }
  if (i_eta >= 0) {
    if (variant == Variant::M3b) {
      p.eta.resize(G, T);
      for (int g = 0; g < G; ++g)
        p.eta.row(g) = u.segment(i_eta + g * T, T).transpose();
    } else {
      p.eta.resize(1, T);
      p.eta.row(0) = u.segment(i_eta, T).transpose();
    }
  }
  return p;
}

Eigen::VectorXd ParamLayout::constrained_values(const Eigen::VectorXd& u) const {
  Eigen::VectorXd c = u;
  if (i_ls2_theta >= 0) c[i_ls2_theta] = std::exp(u[i_ls2_theta]);
  if (i_ls2_phi >= 0) c[i_ls2_phi] = std::exp(u[i_ls2_phi]);
  if (i_ls2_eta >= 0) c[i_ls2_eta] = std::exp(u[i_ls2_eta]);
  if (i_lam >= 0) c[i_lam] = invlogit(u[i_lam]);
  if (i_rho >= 0) c[i_rho] = invlogit(u[i_rho]);
  if (i_P >= 0) c[i_P] = invlogit(u[i_P]);
  return c;
}

double ParamLayout::log_jacobian(const Eigen::VectorXd& u) const {
  double j = 0.0;
  auto logistic_jac = [](double x) {
    // log p(1-p) for p = invlogit(x), in a stable form
    return -x - 2.0 * std::log1p(std::exp(-x));
  };
  if (i_ls2_theta >= 0) j += u[i_ls2_theta];
  if (i_ls2_phi >= 0) j += u[i_ls2_phi];
  if (i_ls2_eta >= 0) j += u[i_ls2_eta];
  if (i_lam >= 0) j += logistic_jac(u[i_lam]);
  if (i_rho >= 0) j += logistic_jac(u[i_rho]);
  if (i_P >= 0) j += logistic_jac(u[i_P]);
  return j;
}

double linear_predictor(const Parameters& p, const Dataset& d, int k, int t) {
  double eff = 0.0;
  switch (p.variant) {
    case Variant::M1: eff = p.theta[k]; break;
    case Variant::M2: eff = p.phi(k, 0); break;
    case Variant::M3a: eff = p.phi(k, 0) + p.eta(0, t); break;
    case Variant::M3b: eff = p.phi(k, 0) + p.eta(d.graph.group_of[k], t); break;
    case Variant::M4: eff = p.phi(k, t); break;
  }
  return d.X.row(d.row(k, t)).dot(p.beta) + d.offset(k, t) + eff;
}

double log_joint(const Parameters& p, const Dataset& d, const ModelSpec& spec) {
  const Variant v = spec.variant;
  if (p.variant != v) throw std::invalid_argument("parameter/spec variant mismatch");
  const ArealGraph& g = d.graph;
  const int K = g.n_sections, T = d.T, G = g.n_groups;

  // domain checks -> -inf by contract
  auto bad = [&](bool cond) { return cond; };
  if (v == Variant::M1 && bad(!(p.sigma2_theta > 0))) return kNegInf;
  if (v != Variant::M1 && bad(!(p.sigma2_phi > 0))) return kNegInf;
  if ((v == Variant::M3a || v == Variant::M3b) && bad(!(p.sigma2_eta > 0)))
    return kNegInf;
  if (v != Variant::M1 && bad(!(p.lambda >= 0 && p.lambda < 1))) return kNegInf;
  if ((v == Variant::M3a || v == Variant::M4) &&
      bad(!(p.rho >= 0 && p.rho < 1)))
    return kNegInf;
  if (v == Variant::M3b && bad(!(p.P > 0 && p.P < 1))) return kNegInf;

  double lp = 0.0;
  // likelihood over observed cells (factorial terms dropped)
  for (int k = 0; k < K; ++k)
    for (int t = 0; t < T; ++t) {
      if (!d.observed(k, t)) continue;
      double eta = linear_predictor(p, d, k, t);
      lp += d.counts(k, t) * eta - std::exp(eta);
    }

  // fixed-effect priors
  for (int j = 0; j < p.beta.size(); ++j)
    lp += normal_logpdf(p.beta[j], spec.beta_var);

  switch (v) {
    case Variant::M1: {
      lp += invgamma_logpdf(p.sigma2_theta, spec.ig_shape, spec.ig_scale);
      for (int k = 0; k < K; ++k)
        lp += normal_logpdf(p.theta[k], p.sigma2_theta);
      break;
    }
    case Variant::M2: {
      lp += invgamma_logpdf(p.sigma2_phi, spec.ig_shape, spec.ig_scale);
      lp += car_logpdf(g, p.phi.col(0), p.lambda, p.sigma2_phi);
      break;
    }
    case Variant::M3a: {
      lp += invgamma_logpdf(p.sigma2_phi, spec.ig_shape, spec.ig_scale);
      lp += invgamma_logpdf(p.sigma2_eta, spec.ig_shape, spec.ig_scale);
      lp += car_logpdf(g, p.phi.col(0), p.lambda, p.sigma2_phi);
      lp += normal_logpdf(p.eta(0, 0), p.sigma2_eta);
      for (int t = 1; t < T; ++t)
        lp += normal_logpdf(p.eta(0, t) - p.rho * p.eta(0, t - 1), p.sigma2_eta);
      break;
    }
    case Variant::M3b: {
      lp += invgamma_logpdf(p.sigma2_phi, spec.ig_shape, spec.ig_scale);
      lp += invgamma_logpdf(p.sigma2_eta, spec.ig_shape, spec.ig_scale);
      lp += normal_logpdf(p.r[0], spec.r_var);
      lp += normal_logpdf(p.r[1], spec.r_var);
      lp += car_logpdf(g, p.phi.col(0), p.lambda, p.sigma2_phi);
      for (int gg = 0; gg < G; ++gg) {
        double rg = p.rho_g(gg);
        lp += normal_logpdf(p.eta(gg, 0), p.sigma2_eta);
        for (int t = 1; t < T; ++t)
          lp += normal_logpdf(p.eta(gg, t) - rg * p.eta(gg, t - 1), p.sigma2_eta);
      }
      break;
    }
    case Variant::M4: {
      lp += invgamma_logpdf(p.sigma2_phi, spec.ig_shape, spec.ig_scale);
      lp += car_logpdf(g, p.phi.col(0), p.lambda, p.sigma2_phi);
      for (int t = 1; t < T; ++t) {
        Eigen::VectorXd vres = p.phi.col(t) - p.rho * p.phi.col(t - 1);
        lp += car_logpdf(g, vres, p.lambda, p.sigma2_phi);
      }
      break;
    }
  }
  return lp;
}

Parameters sample_prior(const ModelSpec& spec, const ArealGraph& graph, int T,
                        std::mt19937_64& rng) {
  const int K = graph.n_sections, G = graph.n_groups;
  if (spec.variant == Variant::M3b && G != 3)
    throw std::invalid_argument("model 3b requires exactly 3 groups");
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::gamma_distribution<double> gd(spec.ig_shape, 1.0 / spec.ig_scale);
  auto inv_gamma = [&]() { return 1.0 / gd(rng); };

  Parameters p;
  p.variant = spec.variant;
  int nb = 1 + (int)standard_cov_names().size();
  p.beta.resize(nb);
  for (int j = 0; j < nb; ++j) p.beta[j] = std::sqrt(spec.beta_var) * nd(rng);

  switch (spec.variant) {
    case Variant::M1: {
      p.sigma2_theta = inv_gamma();
      p.theta.resize(K);
      for (int k = 0; k < K; ++k)
        p.theta[k] = std::sqrt(p.sigma2_theta) * nd(rng);
      break;
    }
    case Variant::M2: {
      p.sigma2_phi = inv_gamma();
      p.lambda = ud(rng);
      p.phi.resize(K, 1);
      p.phi.col(0) = sample_car(graph, p.lambda, p.sigma2_phi, rng);
      break;
    }
    case Variant::M3a: {
      p.sigma2_phi = inv_gamma();
      p.sigma2_eta = inv_gamma();
      p.lambda = ud(rng);
      p.rho = ud(rng);
      p.phi.resize(K, 1);
      p.phi.col(0) = sample_car(graph, p.lambda, p.sigma2_phi, rng);
      p.eta.resize(1, T);
      p.eta(0, 0) = std::sqrt(p.sigma2_eta) * nd(rng);
      for (int t = 1; t < T; ++t)
        p.eta(0, t) = p.rho * p.eta(0, t - 1) + std::sqrt(p.sigma2_eta) * nd(rng);
      break;
    }
    case Variant::M3b: {
      p.sigma2_phi = inv_gamma();
      p.sigma2_eta = inv_gamma();
      p.lambda = ud(rng);
      p.P = ud(rng);
      p.r[0] = std::sqrt(spec.r_var) * nd(rng);
      p.r[1] = std::sqrt(spec.r_var) * nd(rng);
      p.phi.resize(K, 1);
      p.phi.col(0) = sample_car(graph, p.lambda, p.sigma2_phi, rng);
      p.eta.resize(G, T);
      for (int gg = 0; gg < G; ++gg) {
        double rg = p.rho_g(gg);
        p.eta(gg, 0) = std::sqrt(p.sigma2_eta) * nd(rng);
        for (int t = 1; t < T; ++t)
          p.eta(gg, t) =
              rg * p.eta(gg, t - 1) + std::sqrt(p.sigma2_eta) * nd(rng);
      }
      break;
    }
    case Variant::M4: {
      p.sigma2_phi = inv_gamma();
      p.lambda = ud(rng);
      p.rho = ud(rng);
      p.phi.resize(K, T);
      p.phi.col(0) = sample_car(graph, p.lambda, p.sigma2_phi, rng);
      for (int t = 1; t < T; ++t)
        p.phi.col(t) = p.rho * p.phi.col(t - 1) +
                       sample_car(graph, p.lambda, p.sigma2_phi, rng);
      break;
    }
  }
  return p;
}

LogDensity::LogDensity(const ModelSpec& spec, const Dataset& data,
                       double mu_log_bias)
    : spec_(spec), data_(&data), mu_log_bias_(mu_log_bias) {
  const int K = data.K(), T = data.T, G = data.graph.n_groups;
  if (spec.variant == Variant::M3b && G != 3)
    throw std::invalid_argument("model 3b requires exactly 3 groups");
  layout_ = ParamLayout::make(spec.variant, data.n_cov + 1, K, T, G);
  for (int k = 0; k < K; ++k)
    for (int t = 0; t < T; ++t)
      if (data.observed(k, t)) {
        obs_k_.push_back(k);
        obs_t_.push_back(t);
      }
  const int n = (int)obs_k_.size();
  X_obs_.resize(n, data.n_cov + 1);
  y_obs_.resize(n);
  off_obs_.resize(n);
  for (int i = 0; i < n; ++i) {
    X_obs_.row(i) = data.X.row(data.row(obs_k_[i], obs_t_[i]));
    y_obs_[i] = data.counts(obs_k_[i], obs_t_[i]);
    off_obs_[i] = data.offset(obs_k_[i], obs_t_[i]);
  }
}

double LogDensity::operator()(const Eigen::VectorXd& u,
                              Eigen::VectorXd* grad) const {
  const ParamLayout& L = layout_;
  const Dataset& d = *data_;
  const ArealGraph& g = d.graph;
  const int K = L.K, T = L.T, G = L.G, nb = L.nb;
  const Variant v = L.variant;

  if (grad) grad->setZero(L.dim);

  // guard the scalar transforms against overflow
  for (int i : {L.i_ls2_theta, L.i_ls2_phi, L.i_ls2_eta, L.i_lam, L.i_rho, L.i_P})
    if (i >= 0 && std::abs(u[i]) > 300.0) return kNegInf;

  double lp = 0.0;
  Eigen::VectorXd beta = u.head(nb);

  double s2_theta = 0, s2_phi = 0, s2_eta = 0, lam = 0, rho = 0, P = 0;
  if (L.i_ls2_theta >= 0) s2_theta = std::exp(u[L.i_ls2_theta]);
  if (L.i_ls2_phi >= 0) s2_phi = std::exp(u[L.i_ls2_phi]);
  if (L.i_ls2_eta >= 0) s2_eta = std::exp(u[L.i_ls2_eta]);
  if (L.i_lam >= 0) lam = invlogit(u[L.i_lam]);
  if (L.i_rho >= 0) rho = invlogit(u[L.i_rho]);
  if (L.i_P >= 0) P = invlogit(u[L.i_P]);

  // ----- Poisson likelihood -----
  const int n = (int)obs_k_.size();
  Eigen::VectorXd lin = X_obs_ * beta + off_obs_;
  Eigen::VectorXd resid(n);
  for (int i = 0; i < n; ++i) {
    double eff = 0.0;
    const int k = obs_k_[i], t = obs_t_[i];
    switch (v) {
      case Variant::M1: eff = u[L.i_theta + k]; break;
      case Variant::M2: eff = u[L.i_phi + k]; break;
      case Variant::M3a: eff = u[L.i_phi + k] + u[L.i_eta + t]; break;
      case Variant::M3b:
        eff = u[L.i_phi + k] + u[L.eta_index(g.group_of[k], t)];
        break;
      case Variant::M4: eff = u[L.phi_index(k, t)]; break;
    }
    double e = lin[i] + eff + mu_log_bias_;
    if (e > 500.0) return kNegInf;
    double mu = std::exp(e);
    lp += y_obs_[i] * e - mu;
    resid[i] = y_obs_[i] - mu;
    if (grad) {
      switch (v) {
        case Variant::M1: (*grad)[L.i_theta + k] += resid[i]; break;
        case Variant::M2: (*grad)[L.i_phi + k] += resid[i]; break;
        case Variant::M3a:
          (*grad)[L.i_phi + k] += resid[i];
          (*grad)[L.i_eta + t] += resid[i];
          break;
        case Variant::M3b:
          (*grad)[L.i_phi + k] += resid[i];
          (*grad)[L.eta_index(g.group_of[k], t)] += resid[i];
          break;
        case Variant::M4: (*grad)[L.phi_index(k, t)] += resid[i]; break;
      }
    }
  }
  if (grad) grad->head(nb) += X_obs_.transpose() * resid;

  // ----- fixed-effect priors -----
  for (int j = 0; j < nb; ++j) lp += normal_logpdf(beta[j], spec_.beta_var);
  if (grad) grad->head(nb) -= beta / spec_.beta_var;

  const double a = spec_.ig_shape, b = spec_.ig_scale;
  double d_s2_theta = 0, d_s2_phi = 0, d_s2_eta = 0, d_lam = 0, d_rho = 0;

  // ----- random-effect processes + hyperpriors -----
  switch (v) {
    case Variant::M1: {
      lp += invgamma_logpdf(s2_theta, a, b);
      d_s2_theta += invgamma_dlogpdf(s2_theta, a, b);
      double ss = 0.0;
      for (int k = 0; k < K; ++k) {
        double th = u[L.i_theta + k];
        ss += th * th;
        if (grad) (*grad)[L.i_theta + k] -= th / s2_theta;
      }
      lp += -0.5 * K * (kLog2Pi + std::log(s2_theta)) - ss / (2.0 * s2_theta);
      d_s2_theta += -0.5 * K / s2_theta + ss / (2.0 * s2_theta * s2_theta);
      break;
    }
    case Variant::M2:
    case Variant::M3a:
    case Variant::M3b: {
      lp += invgamma_logpdf(s2_phi, a, b);
      d_s2_phi += invgamma_dlogpdf(s2_phi, a, b);
      Eigen::VectorXd phi = u.segment(L.i_phi, K);
      Eigen::VectorXd Wphi = g.W * phi;
      Eigen::VectorXd qphi = -lam * Wphi;
      for (int k = 0; k < K; ++k) qphi[k] += g.degrees[k] * phi[k];
      double quad = phi.dot(qphi);
      lp += 0.5 * (log_det_precision(g, lam) - K * std::log(s2_phi)) -
            0.5 * K * kLog2Pi - quad / (2.0 * s2_phi);
      if (grad) grad->segment(L.i_phi, K) -= qphi / s2_phi;
      d_lam += 0.5 * dlogdet_dlambda(g, lam) +
               phi.dot(Wphi) / (2.0 * s2_phi);
      d_s2_phi += -0.5 * K / s2_phi + quad / (2.0 * s2_phi * s2_phi);

      if (v == Variant::M3a) {
        lp += invgamma_logpdf(s2_eta, a, b);
        d_s2_eta += invgamma_dlogpdf(s2_eta, a, b);
        double ss = 0.0;
        for (int t = 0; t < T; ++t) {
          double e = (t == 0) ? u[L.i_eta]
                              : u[L.i_eta + t] - rho * u[L.i_eta + t - 1];
          ss += e * e;
          if (grad) {
            (*grad)[L.i_eta + t] -= e / s2_eta;
            if (t > 0) {
              (*grad)[L.i_eta + t - 1] += rho * e / s2_eta;
              d_rho += u[L.i_eta + t - 1] * e / s2_eta;
            }
          } else if (t > 0) {
            d_rho += u[L.i_eta + t - 1] * e / s2_eta;
          }
        }
        lp += -0.5 * T * (kLog2Pi + std::log(s2_eta)) - ss / (2.0 * s2_eta);
        d_s2_eta += -0.5 * T / s2_eta + ss / (2.0 * s2_eta * s2_eta);
      } else if (v == Variant::M3b) {
        lp += invgamma_logpdf(s2_eta, a, b);
        d_s2_eta += invgamma_dlogpdf(s2_eta, a, b);
        double r1 = u[L.i_r], r2 = u[L.i_r + 1];
        lp += normal_logpdf(r1, spec_.r_var) + normal_logpdf(r2, spec_.r_var);
        if (grad) {
          (*grad)[L.i_r] -= r1 / spec_.r_var;
          (*grad)[L.i_r + 1] -= r2 / spec_.r_var;
        }
        double logitP = u[L.i_P];
        double ss = 0.0;
        double d_logitP = 0.0, d_r1 = 0.0, d_r2 = 0.0;
        for (int gg = 0; gg < G; ++gg) {
          double rg_off = (gg == 0) ? r1 : (gg == 1 ? r2 : -r1 - r2);
          double rho_g = invlogit(logitP + rg_off);
          double d_rho_g = 0.0;
          for (int t = 1; t < T; ++t) {
            double prev = u[L.eta_index(gg, t - 1)];
            double e = u[L.eta_index(gg, t)] - rho_g * prev;
            ss += e * e;
            if (grad) {
              (*grad)[L.eta_index(gg, t)] -= e / s2_eta;
              (*grad)[L.eta_index(gg, t - 1)] += rho_g * e / s2_eta;
            }
            d_rho_g += prev * e / s2_eta;
          }
          double e0 = u[L.eta_index(gg, 0)];
          ss += e0 * e0;
          if (grad) (*grad)[L.eta_index(gg, 0)] -= e0 / s2_eta;
          double sg = rho_g * (1.0 - rho_g);
          d_logitP += d_rho_g * sg;
          if (gg == 0) d_r1 += d_rho_g * sg;
          if (gg == 1) d_r2 += d_rho_g * sg;
          if (gg == 2) {
            d_r1 -= d_rho_g * sg;
            d_r2 -= d_rho_g * sg;
          }
        }
        lp += -0.5 * G * T * (kLog2Pi + std::log(s2_eta)) - ss / (2.0 * s2_eta);
        d_s2_eta += -0.5 * G * T / s2_eta + ss / (2.0 * s2_eta * s2_eta);
        if (grad) {
          (*grad)[L.i_P] += d_logitP;  // chain to logit(P) handled below via d_P? no: direct
          (*grad)[L.i_r] += d_r1;
          (*grad)[L.i_r + 1] += d_r2;
        }
      }
      break;
    }
    case Variant::M4: {
      lp += invgamma_logpdf(s2_phi, a, b);
      d_s2_phi += invgamma_dlogpdf(s2_phi, a, b);
      double quad_sum = 0.0, wquad_sum = 0.0;
      for (int t = 0; t < T; ++t) {
        Eigen::VectorXd vres = u.segment(L.i_phi + t * K, K);
        if (t > 0) vres -= rho * u.segment(L.i_phi + (t - 1) * K, K);
        Eigen::VectorXd Wv = g.W * vres;
        Eigen::VectorXd qv = -lam * Wv;
        for (int k = 0; k < K; ++k) qv[k] += g.degrees[k] * vres[k];
        quad_sum += vres.dot(qv);
        wquad_sum += vres.dot(Wv);
        if (grad) {
          grad->segment(L.i_phi + t * K, K) -= qv / s2_phi;
          if (t > 0)
            grad->segment(L.i_phi + (t - 1) * K, K) += rho * qv / s2_phi;
        }
        if (t > 0)
          d_rho += u.segment(L.i_phi + (t - 1) * K, K).dot(qv) / s2_phi;
      }
      lp += T * 0.5 * log_det_precision(g, lam) - 0.5 * K * T * kLog2Pi -
            0.5 * K * T * std::log(s2_phi) - quad_sum / (2.0 * s2_phi);
      d_lam += T * 0.5 * dlogdet_dlambda(g, lam) + wquad_sum / (2.0 * s2_phi);
      d_s2_phi +=
          -0.5 * K * T / s2_phi + quad_sum / (2.0 * s2_phi * s2_phi);
      break;
    }
  }

  // ----- transforms: Jacobians and chain rule to unconstrained scale -----
  if (L.i_ls2_theta >= 0) {
    lp += u[L.i_ls2_theta];
    if (grad) (*grad)[L.i_ls2_theta] += d_s2_theta * s2_theta + 1.0;
  }
  if (L.i_ls2_phi >= 0) {
    lp += u[L.i_ls2_phi];
    if (grad) (*grad)[L.i_ls2_phi] += d_s2_phi * s2_phi + 1.0;
  }
  if (L.i_ls2_eta >= 0) {
    lp += u[L.i_ls2_eta];
    if (grad) (*grad)[L.i_ls2_eta] += d_s2_eta * s2_eta + 1.0;
  }
  auto logistic_block = [&](int idx, double pval, double dp) {
    lp += std::log(pval) + std::log1p(-pval);
    if (grad) (*grad)[idx] += dp * pval * (1.0 - pval) + (1.0 - 2.0 * pval);
  };
  if (L.i_lam >= 0) logistic_block(L.i_lam, lam, d_lam);
  if (L.i_rho >= 0) logistic_block(L.i_rho, rho, d_rho);
  if (L.i_P >= 0) logistic_block(L.i_P, P, 0.0);

  if (!std::isfinite(lp)) return kNegInf;
  return lp;
}

}  // namespace stcar
