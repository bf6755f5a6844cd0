#include "stcar/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace stcar {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDivergenceThreshold = 1000.0;

struct Psi {  // phase-space point
  Eigen::VectorXd q, p;
};

struct Target {
  const LogDensity* f;
  Eigen::VectorXd inv_mass;  // diagonal

  double logp(const Eigen::VectorXd& q, Eigen::VectorXd* grad) const {
    return (*f)(q, grad);
  }
  double kinetic(const Eigen::VectorXd& p) const {
    return 0.5 * p.dot(inv_mass.cwiseProduct(p));
  }
};

// one leapfrog step; returns new logp, grad updated in place
double leapfrog(const Target& tgt, Psi& z, Eigen::VectorXd& grad, double eps) {
  z.p += 0.5 * eps * grad;
  z.q += eps * tgt.inv_mass.cwiseProduct(z.p);
  double lp = tgt.logp(z.q, &grad);
  z.p += 0.5 * eps * grad;
  return lp;
}

struct Tree {
  Psi z_minus, z_plus, z_sample;
  Eigen::VectorXd grad_minus, grad_plus;
  Eigen::VectorXd rho;       // momentum sum for the u-turn check
  double log_weight = -kInf; // log sum of exp(-energy+E0) over nodes
  int n_leapfrog = 0;
  double accept_sum = 0.0;
  bool divergent = false;
  bool ok = true;            // no u-turn inside
};

bool no_uturn(const Target& tgt, const Psi& zm, const Psi& zp,
              const Eigen::VectorXd& rho) {
  Eigen::VectorXd dr = tgt.inv_mass.cwiseProduct(rho);
  return zp.p.dot(dr) > 0 && zm.p.dot(dr) > 0;
}

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

class NutsChain {
 public:
  NutsChain(const Target& tgt, std::mt19937_64& rng, double E0)
      : tgt_(tgt), rng_(rng), E0_(E0) {}

  // builds a subtree of the given depth starting from z in direction dir
  Tree build(Psi z, Eigen::VectorXd grad, int depth, int dir, double eps) {
    if (depth == 0) {
      Tree t;
      double lp = leapfrog(tgt_, z, grad, dir * eps);
      t.n_leapfrog = 1;
      double energy = -lp + tgt_.kinetic(z.p);
      double dE = E0_ - energy;  // >0 means better than start
      if (!std::isfinite(energy) || dE < -kDivergenceThreshold) {
        t.divergent = true;
        t.ok = false;
        t.accept_sum = 0.0;
        t.log_weight = -kInf;
        t.z_minus = t.z_plus = t.z_sample = z;
        t.grad_minus = t.grad_plus = grad;
        t.rho = z.p;
        return t;
      }
      t.accept_sum = std::min(1.0, std::exp(dE));
      t.log_weight = dE;
      t.z_minus = t.z_plus = t.z_sample = z;
      t.grad_minus = t.grad_plus = grad;
      t.rho = z.p;
      return t;
    }
    Tree inner = build(std::move(z), std::move(grad), depth - 1, dir, eps);
    if (!inner.ok) return inner;
    Tree outer =
        (dir == 1)
            ? build(inner.z_plus, inner.grad_plus, depth - 1, dir, eps)
            : build(inner.z_minus, inner.grad_minus, depth - 1, dir, eps);
    Tree t;
    t.n_leapfrog = inner.n_leapfrog + outer.n_leapfrog;
    t.accept_sum = inner.accept_sum + outer.accept_sum;
    t.divergent = inner.divergent || outer.divergent;
    if (!outer.ok) {
      t.ok = false;
      return t;
    }
    if (dir == 1) {
      t.z_minus = inner.z_minus;
      t.grad_minus = inner.grad_minus;
      t.z_plus = outer.z_plus;
      t.grad_plus = outer.grad_plus;
    } else {
      t.z_minus = outer.z_minus;
      t.grad_minus = outer.grad_minus;
      t.z_plus = inner.z_plus;
      t.grad_plus = inner.grad_plus;
    }
    t.rho = inner.rho + outer.rho;
    t.log_weight = log_sum_exp(inner.log_weight, outer.log_weight);
    // multinomial sampling between the two halves
    double u = unif_(rng_);
    double p_outer = std::exp(outer.log_weight - t.log_weight);
    t.z_sample = (u < p_outer) ? outer.z_sample : inner.z_sample;
    t.ok = no_uturn(tgt_, t.z_minus, t.z_plus, t.rho);
    return t;
  }

  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  const Target& tgt_;
  std::mt19937_64& rng_;
  double E0_;
};

// One NUTS transition. Returns accept-statistic mean; updates q/logp/grad.
double nuts_transition(const Target& tgt, Eigen::VectorXd& q, double& logp,
                       Eigen::VectorXd& grad, double eps, int max_depth,
                       std::mt19937_64& rng, bool& divergent) {
  const int n = (int)q.size();
  std::normal_distribution<double> nd(0.0, 1.0);
  Psi z;
  z.q = q;
  z.p.resize(n);
  for (int i = 0; i < n; ++i)
    z.p[i] = nd(rng) / std::sqrt(tgt.inv_mass[i]);  // p ~ N(0, M)

  double E0 = -logp + tgt.kinetic(z.p);
  NutsChain nc(tgt, rng, E0);

  Psi z_minus = z, z_plus = z, z_sample = z;
  Eigen::VectorXd grad_minus = grad, grad_plus = grad;
  Eigen::VectorXd rho = z.p;
  double log_weight = 0.0;  // start node: dE = 0
  double accept_sum = 0.0;
  int n_leapfrog = 0;
  divergent = false;
  std::uniform_real_distribution<double> ud(0.0, 1.0);

  for (int depth = 0; depth < max_depth; ++depth) {
    int dir = (ud(rng) < 0.5) ? -1 : 1;
    Tree t = (dir == 1) ? nc.build(z_plus, grad_plus, depth, dir, eps)
                        : nc.build(z_minus, grad_minus, depth, dir, eps);
    accept_sum += t.accept_sum;
    n_leapfrog += t.n_leapfrog;
    if (t.divergent) divergent = true;
    if (!t.ok) break;
    if (dir == 1) {
      z_plus = t.z_plus;
      grad_plus = t.grad_plus;
    } else {
      z_minus = t.z_minus;
      grad_minus = t.grad_minus;
    }
    // biased progressive sampling toward the new subtree
    double p_new = std::exp(std::min(0.0, t.log_weight - log_weight));
    if (ud(rng) < p_new) z_sample = t.z_sample;
    rho += t.rho;
    log_weight = log_sum_exp(log_weight, t.log_weight);
    if (!no_uturn(tgt, z_minus, z_plus, rho)) break;
  }

  q = z_sample.q;
  logp = tgt.logp(q, &grad);
  return n_leapfrog > 0 ? accept_sum / n_leapfrog : 0.0;
}

double find_initial_step(const Target& tgt, const Eigen::VectorXd& q0,
                         double logp0, const Eigen::VectorXd& grad0,
                         std::mt19937_64& rng) {
  const int n = (int)q0.size();
  std::normal_distribution<double> nd(0.0, 1.0);
  double eps = 1.0;
  Psi z;
  z.q = q0;
  z.p.resize(n);
  for (int i = 0; i < n; ++i) z.p[i] = nd(rng) / std::sqrt(tgt.inv_mass[i]);
  double E0 = -logp0 + tgt.kinetic(z.p);

  auto dE_for = [&](double e) {
    Psi zt = z;
    Eigen::VectorXd g = grad0;
    double lp = leapfrog(tgt, zt, g, e);
    double E = -lp + tgt.kinetic(zt.p);
    return std::isfinite(E) ? (E0 - E) : -kInf;
  };
  double dE = dE_for(eps);
  int dir = (dE > std::log(0.5)) ? 1 : -1;
  for (int it = 0; it < 60; ++it) {
    dE = dE_for(eps);
    if (dir == 1 && !(dE > std::log(0.5))) break;
    if (dir == -1 && !(dE < std::log(0.5))) break;
    eps *= (dir == 1) ? 2.0 : 0.5;
    if (eps > 1e7 || eps < 1e-10) break;
  }
  return eps;
}

struct DualAveraging {
  double mu, log_eps, log_eps_bar = 0.0, h_bar = 0.0;
  double gamma = 0.05, t0 = 10.0, kappa = 0.75;
  int count = 0;

  explicit DualAveraging(double eps0)
      : mu(std::log(10.0 * eps0)), log_eps(std::log(eps0)) {}

  void update(double accept_stat, double target) {
    count++;
    double eta = 1.0 / (count + t0);
    h_bar = (1.0 - eta) * h_bar + eta * (target - accept_stat);
    log_eps = mu - std::sqrt((double)count) / gamma * h_bar;
    double w = std::pow((double)count, -kappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
  }
  double eps() const { return std::exp(log_eps); }
  double eps_final() const { return std::exp(log_eps_bar); }
};

struct Welford {
  Eigen::VectorXd mean, m2;
  int n = 0;
  void reset(int dim) {
    mean.setZero(dim);
    m2.setZero(dim);
    n = 0;
  }
  void add(const Eigen::VectorXd& x) {
    n++;
    Eigen::VectorXd delta = x - mean;
    mean += delta / n;
    m2 += delta.cwiseProduct(x - mean);
  }
  Eigen::VectorXd variance() const {
    return n > 1 ? Eigen::VectorXd(m2 / (n - 1.0))
                 : Eigen::VectorXd::Ones(mean.size());
  }
};

Eigen::VectorXd initial_point(const ParamLayout& L, double jitter,
                              std::mt19937_64& rng) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(L.dim);
  // prior medians on the unconstrained scale
  const double log_med_ig = std::log(1.0 / std::log(2.0));  // invGamma(1,1)
  for (int i : {L.i_ls2_theta, L.i_ls2_phi, L.i_ls2_eta})
    if (i >= 0) u[i] = log_med_ig;
  std::uniform_real_distribution<double> ud(-jitter, jitter);
  for (int i = 0; i < L.dim; ++i) u[i] += ud(rng);
  return u;
}

}  // namespace

ChainResult run_chain(const LogDensity& target, const SamplerConfig& config,
                      std::uint64_t chain_seed) {
  const int dim = target.dim();
  std::mt19937_64 rng(chain_seed);

  Target tgt{&target, Eigen::VectorXd::Ones(dim)};

  Eigen::VectorXd q, grad(dim);
  double logp = -kInf;
  for (int attempt = 0; attempt < 100 && !std::isfinite(logp); ++attempt) {
    q = initial_point(target.layout(), config.init_jitter, rng);
    logp = target(q, &grad);
  }
  if (!std::isfinite(logp))
    throw std::runtime_error("chain initialization failed: log density "
                             "non-finite after 100 attempts");

  double eps0 = find_initial_step(tgt, q, logp, grad, rng);
  DualAveraging da(eps0);

  // warm-up window schedule (step-size always adapting; mass matrix
  // re-estimated at the end of each expanding window)
  const int warmup = config.warmup_iters;
  int init_buf = 75, term_buf = 50, base_win = 25;
  if (init_buf + term_buf + base_win > warmup) {
    init_buf = std::max(1, (int)(0.15 * warmup));
    term_buf = std::max(1, (int)(0.10 * warmup));
    base_win = std::max(1, warmup - init_buf - term_buf);
  }
  std::vector<int> window_ends;
  {
    int start = init_buf, w = base_win;
    while (start + w < warmup - term_buf) {
      if (start + 3 * w >= warmup - term_buf) w = warmup - term_buf - start;
      window_ends.push_back(start + w);
      start += w;
      w *= 2;
    }
    if (window_ends.empty() && warmup > init_buf + term_buf)
      window_ends.push_back(warmup - term_buf);
  }

  Welford wf;
  wf.reset(dim);
  size_t next_window = 0;
  bool divergent = false;

  for (int it = 0; it < warmup; ++it) {
    double a = nuts_transition(tgt, q, logp, grad, da.eps(),
                               config.max_tree_depth, rng, divergent);
    da.update(a, config.target_accept);
    bool in_window = it >= init_buf && it < warmup - term_buf;
    if (in_window) wf.add(q);
    if (next_window < window_ends.size() && it + 1 == window_ends[next_window]) {
      Eigen::VectorXd var = wf.variance();
      double n = wf.n;
      for (int i = 0; i < dim; ++i)
        tgt.inv_mass[i] = n / (n + 5.0) * var[i] + 5.0 / (n + 5.0) * 1e-3;
      wf.reset(dim);
      next_window++;
      // re-anchor step-size adaptation around a fresh estimate in the
      // updated metric
      double e = find_initial_step(tgt, q, logp, grad, rng);
      da = DualAveraging(e);
    }
  }

  double eps = warmup > 0 ? da.eps_final() : da.eps();

  ChainResult res;
  res.step_size = eps;
  res.draws.resize(config.sampling_iters, dim);
  double accept_total = 0.0;
  const ParamLayout& L = target.layout();
  for (int it = 0; it < config.sampling_iters; ++it) {
    double a = nuts_transition(tgt, q, logp, grad, eps, config.max_tree_depth,
                               rng, divergent);
    accept_total += a;
    if (divergent) res.divergences++;
    res.draws.row(it) = L.constrained_values(q).transpose();
  }
  res.accept_rate =
      config.sampling_iters > 0 ? accept_total / config.sampling_iters : 0.0;
  return res;
}

PosteriorDraws run_inference(const LogDensity& target,
                             const SamplerConfig& config) {
  PosteriorDraws out;
  out.config = config;
  out.names = target.layout().names(target.data().cov_names);

  std::vector<ChainResult> results(config.n_chains);
  std::vector<std::string> errors(config.n_chains);
  std::vector<std::thread> threads;
  for (int c = 0; c < config.n_chains; ++c) {
    threads.emplace_back([&, c]() {
      std::uint64_t seed =
          config.seed ^ (0x9e3779b97f4a7c15ULL * (std::uint64_t)(c + 1));
      try {
        results[c] = run_chain(target, config, seed);
      } catch (const std::exception& e) {
        errors[c] = e.what();
      }
    });
  }
  for (auto& t : threads) t.join();

  std::string failure;
  for (int c = 0; c < config.n_chains; ++c) {
    if (!errors[c].empty()) {
      failure = "chain " + std::to_string(c) + ": " + errors[c];
    } else {
      out.chains.push_back(std::move(results[c]));
    }
  }
  if (!failure.empty()) throw ChainFailure(failure, std::move(out));
  return out;
}

PosteriorDraws run_inference(const ModelSpec& spec, const Dataset& data,
                             const SamplerConfig& config) {
  LogDensity target(spec, data);
  return run_inference(target, config);
}

int PosteriorDraws::index_of(const std::string& name) const {
  for (int i = 0; i < (int)names.size(); ++i)
    if (names[i] == name) return i;
  throw std::invalid_argument("unknown parameter: " + name);
}

Eigen::VectorXd PosteriorDraws::pooled(int param) const {
  Eigen::VectorXd out(total_draws());
  int off = 0;
  for (const auto& c : chains) {
    out.segment(off, c.draws.rows()) = c.draws.col(param);
    off += (int)c.draws.rows();
  }
  return out;
}

Eigen::VectorXd PosteriorDraws::pooled(const std::string& name) const {
  return pooled(index_of(name));
}

int PosteriorDraws::total_draws() const {
  int n = 0;
  for (const auto& c : chains) n += (int)c.draws.rows();
  return n;
}

RhatEntry split_rhat(const PosteriorDraws& draws, int param) {
  RhatEntry e;
  if (draws.n_chains() < 2)
    throw std::invalid_argument("split R-hat needs at least 2 chains");
  std::vector<Eigen::VectorXd> halves;
  int n = (int)draws.chains[0].draws.rows() / 2;
  if (n < 2) throw std::invalid_argument("split R-hat needs >= 4 draws");
  for (const auto& c : draws.chains) {
    Eigen::VectorXd col = c.draws.col(param);
    halves.push_back(col.head(n));
    halves.push_back(col.segment(n, n));
  }
  const int m = (int)halves.size();
  Eigen::VectorXd means(m), vars(m);
  for (int j = 0; j < m; ++j) {
    means[j] = halves[j].mean();
    vars[j] = (halves[j].array() - means[j]).square().sum() / (n - 1.0);
  }
  double W = vars.mean();
  double grand = means.mean();
  double B = n * (means.array() - grand).square().sum() / (m - 1.0);
  if (W <= 0.0) {
    e.value = kInf;
    e.degenerate = true;
    return e;
  }
  e.value = std::sqrt(((n - 1.0) / n * W + B / n) / W);
  return e;
}

RhatEntry split_rhat(const PosteriorDraws& draws, const std::string& name) {
  return split_rhat(draws, draws.index_of(name));
}

double max_rhat(const PosteriorDraws& draws) {
  double m = 0.0;
  for (int j = 0; j < draws.dim(); ++j) {
    RhatEntry e = split_rhat(draws, j);
    m = std::max(m, e.value);
  }
  return m;
}

}  // namespace stcar
