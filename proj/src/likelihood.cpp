#include "medbma/likelihood.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "medbma/errors.hpp"

namespace medbma {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_active(const ResponseIndicators& z, std::size_t beta_index) {
  return beta_index == 0 || z.z[beta_index - 1] != 0;
}

// Shared damped Newton driver. `eval` returns the objective (to be maximized)
// and fills gradient and Hessian at x. `coef_dims` leading entries of x are
// regression coefficients subject to the separation bound.
template <class Eval>
Eigen::VectorXd newton_maximize(Eigen::VectorXd x, Eval&& eval,
                                const MleOptions& options, Eigen::Index coef_dims,
                                double& value, int& iterations, double& grad_norm) {
  const Eigen::Index d = x.size();
  Eigen::VectorXd g(d), gn(d);
  Eigen::MatrixXd h(d, d), hn(d, d);
  value = eval(x, g, h);
  if (!std::isfinite(value))
    throw NumericalError("log-likelihood is not finite at the starting point");
  iterations = 0;
  for (;;) {
    grad_norm = g.cwiseAbs().maxCoeff();
    if (grad_norm < options.gradient_tolerance) return x;
    if (iterations >= options.max_iterations)
      throw ConvergenceError("Newton iteration did not converge in " +
                                 std::to_string(options.max_iterations) +
                                 " iterations (gradient max-norm " +
                                 std::to_string(grad_norm) + ")",
                             grad_norm);
    ++iterations;

    // Levenberg damping until -H + mu I is positive definite.
    const Eigen::MatrixXd neg_h = -h;
    const double scale = std::max(1.0, neg_h.diagonal().cwiseAbs().maxCoeff());
    double mu = 0.0;
    Eigen::VectorXd step;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h +
                                        mu * Eigen::MatrixXd::Identity(d, d));
      if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
          (ldlt.vectorD().array() > 1e-14 * scale).all()) {
        step = ldlt.solve(g);
        if (step.allFinite()) break;
      }
      mu = mu == 0.0 ? 1e-8 * scale : mu * 10.0;
      step.resize(0);
    }
    if (step.size() == 0) step = g / scale;

    bool accepted = false;
    double t = 1.0;
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      const Eigen::VectorXd candidate = x + t * step;
      const double cand_value = eval(candidate, gn, hn);
      if (std::isfinite(cand_value) &&
          cand_value >= value - 1e-12 * (1.0 + std::abs(value))) {
        x = candidate;
        value = cand_value;
        g.swap(gn);
        h.swap(hn);
        accepted = true;
        break;
      }
    }
    if (coef_dims > 0 &&
        x.head(coef_dims).cwiseAbs().maxCoeff() > options.separation_bound)
      throw SeparationError(
          "coefficient magnitude exceeded " +
          std::to_string(options.separation_bound) + " (separation suspected)");
    if (!accepted) {
      // No ascent possible at working precision.
      grad_norm = g.cwiseAbs().maxCoeff();
      if (grad_norm < 1e-6 * std::max(1.0, value == 0.0 ? 1.0 : std::abs(value)))
        return x;
      throw ConvergenceError("line search failed (gradient max-norm " +
                                 std::to_string(grad_norm) + ")",
                             grad_norm);
    }
  }
}

}  // namespace

bool ParameterState::satisfies_invariants() const noexcept {
  if (!(shape > 0.0) || !(rate > 0.0)) return false;
  if (!std::isfinite(shape) || !std::isfinite(rate)) return false;
  if (!config.satisfies_hierarchy()) return false;
  for (std::size_t j = 0; j < kResponseTerms; ++j)
    if (!config.response.z[j] && beta[j + 1] != 0.0) return false;
  for (std::size_t j = 0; j < kSurvivalTerms; ++j)
    if (!config.survival.w[j] && gamma[j] != 0.0) return false;
  return true;
}

void ParameterState::zero_inactive() noexcept {
  for (std::size_t j = 0; j < kResponseTerms; ++j)
    if (!config.response.z[j]) beta[j + 1] = 0.0;
  for (std::size_t j = 0; j < kSurvivalTerms; ++j)
    if (!config.survival.w[j]) gamma[j] = 0.0;
}

std::array<double, kParameterCount> ParameterState::flatten() const noexcept {
  std::array<double, kParameterCount> out{};
  std::copy(beta.begin(), beta.end(), out.begin());
  std::copy(gamma.begin(), gamma.end(), out.begin() + kBetaSize);
  out[kBetaSize + kGammaSize] = shape;
  out[kBetaSize + kGammaSize + 1] = rate;
  return out;
}

const std::array<const char*, kParameterCount>& parameter_names() {
  static const std::array<const char*, kParameterCount> names = {
      "beta0",  "beta1",  "beta2",  "beta3",  "gamma1", "gamma2",
      "gamma3", "gamma4", "gamma5", "gamma6", "nu",     "lambda"};
  return names;
}

void PriorSpec::validate() const {
  if (!(coef_sd > 0.0) || !(weibull_shape_hyper > 0.0) || !(weibull_rate_hyper > 0.0))
    throw InputError("prior hyperparameters must be positive");
  for (double p : psi_z)
    if (!(p > 0.0 && p < 1.0)) throw InputError("psi_z components must lie in (0,1)");
  for (double p : psi_w)
    if (!(p > 0.0 && p < 1.0)) throw InputError("psi_w components must lie in (0,1)");
}

DesignCache::DesignCache(const Dataset& data) : n(data.size()) {
  for (auto& c : response_cols) c.resize(n);
  for (auto& c : survival_cols) c.resize(n);
  y.resize(n);
  event.resize(n);
  time.resize(n);
  log_time.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = data[i];
    if (r.event == 1 && r.time == 0.0)
      throw InputError("record " + std::to_string(i + 1) +
                       ": observed event at time zero");
    const auto rr = response_design_row(r, ResponseIndicators{{1, 1, 1}});
    const auto sr = survival_design_row(r, SurvivalIndicators{{1, 1, 1, 1, 1, 1}});
    for (std::size_t j = 0; j < kBetaSize; ++j) response_cols[j][i] = rr[j];
    for (std::size_t j = 0; j < kGammaSize; ++j) survival_cols[j][i] = sr[j];
    y[i] = r.response;
    event[i] = r.event;
    time[i] = r.time;
    log_time[i] = r.time > 0.0 ? std::log(r.time) : -kInf;
    if (r.event) {
      event_count += 1.0;
      event_log_time += log_time[i];
      for (std::size_t j = 0; j < kGammaSize; ++j) event_col_sums[j] += sr[j];
    }
  }
  // A, Y and A*Y take only the values 0 and 1.
  survival_binary = {true, true, false, true, false, false};
}

double softplus(double x) noexcept {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double response_loglik(const DesignCache& d, const BetaVector& beta,
                       const ResponseIndicators& z) {
  BetaVector b = beta;
  for (std::size_t j = 1; j < kBetaSize; ++j)
    if (!is_active(z, j)) b[j] = 0.0;
  double ll = 0.0;
  for (std::size_t i = 0; i < d.n; ++i) {
    const double eta = b[0] + b[1] * d.response_cols[1][i] +
                       b[2] * d.response_cols[2][i] + b[3] * d.response_cols[3][i];
    ll += d.y[i] * eta - softplus(eta);
  }
  return ll;
}

double response_loglik(const Dataset& data, const BetaVector& beta,
                       const ResponseIndicators& z) {
  double ll = 0.0;
  for (const auto& r : data) {
    const auto row = response_design_row(r, z);
    double eta = 0.0;
    for (std::size_t j = 0; j < kBetaSize; ++j) eta += row[j] * beta[j];
    ll += r.response * eta - softplus(eta);
  }
  return ll;
}

BetaVector response_gradient(const Dataset& data, const BetaVector& beta,
                             const ResponseIndicators& z) {
  BetaVector g{};
  for (const auto& r : data) {
    const auto row = response_design_row(r, z);
    double eta = 0.0;
    for (std::size_t j = 0; j < kBetaSize; ++j) eta += row[j] * beta[j];
    const double resid = r.response - logistic(eta);
    for (std::size_t j = 0; j < kBetaSize; ++j) g[j] += resid * row[j];
  }
  return g;
}

double survival_loglik(const Dataset& data, const GammaVector& gamma, double nu,
                       double lambda, const SurvivalIndicators& w) {
  const double log_nu = std::log(nu);
  const double log_lambda = std::log(lambda);
  double ll = 0.0;
  std::size_t i = 0;
  for (const auto& r : data) {
    ++i;
    const auto row = survival_design_row(r, w);
    double eta = 0.0;
    for (std::size_t j = 0; j < kGammaSize; ++j) eta += row[j] * gamma[j];
    if (r.time == 0.0) {
      if (r.event)
        throw InputError("record " + std::to_string(i) +
                         ": observed event at time zero");
      continue;  // cumulative hazard is zero
    }
    const double log_t = std::log(r.time);
    if (r.event) ll += log_nu + log_lambda + (nu - 1.0) * log_t + eta;
    ll -= lambda * std::exp(nu * log_t + eta);
  }
  return ll;
}

double survival_loglik(const DesignCache& d, const GammaVector& gamma, double nu,
                       double lambda, const SurvivalIndicators& w) {
  GammaVector g{};
  for (std::size_t j = 0; j < kGammaSize; ++j) g[j] = w.w[j] ? gamma[j] : 0.0;
  double event_eta = 0.0;
  for (std::size_t j = 0; j < kGammaSize; ++j) event_eta += g[j] * d.event_col_sums[j];
  double cum = 0.0;
  for (std::size_t i = 0; i < d.n; ++i) {
    if (d.time[i] == 0.0) continue;
    double eta = 0.0;
    for (std::size_t j = 0; j < kGammaSize; ++j)
      if (g[j] != 0.0) eta += g[j] * d.survival_cols[j][i];
    cum += std::exp(nu * d.log_time[i] + eta);
  }
  return d.event_count * (std::log(nu) + std::log(lambda)) +
         (nu - 1.0) * d.event_log_time + event_eta - lambda * cum;
}

SurvivalGradient survival_gradient(const Dataset& data, const GammaVector& gamma,
                                   double nu, double lambda,
                                   const SurvivalIndicators& w) {
  SurvivalGradient g;
  for (const auto& r : data) {
    const auto row = survival_design_row(r, w);
    double eta = 0.0;
    for (std::size_t j = 0; j < kGammaSize; ++j) eta += row[j] * gamma[j];
    double cum = 0.0;
    double log_t = 0.0;
    if (r.time > 0.0) {
      log_t = std::log(r.time);
      cum = std::exp(nu * log_t + eta);  // t^nu e^eta
    }
    const double hazard_mass = lambda * cum;
    for (std::size_t j = 0; j < kGammaSize; ++j) g.gamma[j] += (r.event - hazard_mass) * row[j];
    if (r.event) {
      g.shape += 1.0 / nu + log_t;
      g.rate += 1.0 / lambda;
    }
    g.shape -= hazard_mass * log_t;
    g.rate -= cum;
  }
  return g;
}

double survival_probability(double t, const SurvivalRow& row, const GammaVector& gamma,
                            double nu, double lambda) noexcept {
  if (t <= 0.0) return 1.0;
  double eta = 0.0;
  for (std::size_t j = 0; j < kGammaSize; ++j) eta += row[j] * gamma[j];
  return std::exp(-lambda * std::pow(t, nu) * std::exp(eta));
}

double normal_log_density(double x, double mean, double sd) noexcept {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double gamma_log_density(double x, double shape, double rate) noexcept {
  if (!(x > 0.0)) return -kInf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) -
         rate * x;
}

double log_prior(const ParameterState& s, const PriorSpec& p) {
  double lp = normal_log_density(s.beta[0], 0.0, p.coef_sd);
  for (std::size_t j = 0; j < kResponseTerms; ++j) {
    const bool on = s.config.response.z[j] != 0;
    if (on) lp += normal_log_density(s.beta[j + 1], 0.0, p.coef_sd);
    lp += on ? std::log(p.psi_z[j]) : std::log1p(-p.psi_z[j]);
  }
  for (std::size_t j = 0; j < kSurvivalTerms; ++j) {
    const bool on = s.config.survival.w[j] != 0;
    if (on) lp += normal_log_density(s.gamma[j], 0.0, p.coef_sd);
    lp += on ? std::log(p.psi_w[j]) : std::log1p(-p.psi_w[j]);
  }
  lp += gamma_log_density(s.shape, p.weibull_shape_hyper, p.weibull_rate_hyper);
  lp += gamma_log_density(s.rate, p.weibull_shape_hyper, p.weibull_rate_hyper);
  return lp;
}

ResponseFit fit_response_mle(const DesignCache& d, const ResponseIndicators& z,
                             const MleOptions& options) {
  if (!z.satisfies_hierarchy()) (void)classify(z);  // throws with a message
  std::vector<std::size_t> cols = {0};
  for (std::size_t j = 1; j < kBetaSize; ++j)
    if (is_active(z, j)) cols.push_back(j);
  const auto k = static_cast<Eigen::Index>(cols.size());

  double ybar = 0.0;
  for (double v : d.y) ybar += v;
  ybar /= static_cast<double>(d.n);
  if (ybar <= 0.0 || ybar >= 1.0)
    throw SeparationError("response is constant; logistic MLE does not exist");

  auto eval = [&](const Eigen::VectorXd& b, Eigen::VectorXd& g, Eigen::MatrixXd& h) {
    g.setZero(k);
    h.setZero(k, k);
    double ll = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) {
      double eta = 0.0;
      for (Eigen::Index a = 0; a < k; ++a) eta += b[a] * d.response_cols[cols[a]][i];
      const double p = logistic(eta);
      ll += d.y[i] * eta - softplus(eta);
      const double wgt = p * (1.0 - p);
      for (Eigen::Index a = 0; a < k; ++a) {
        const double xa = d.response_cols[cols[a]][i];
        g[a] += (d.y[i] - p) * xa;
        for (Eigen::Index c = 0; c <= a; ++c)
          h(a, c) -= wgt * xa * d.response_cols[cols[c]][i];
      }
    }
    h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
    return ll;
  };

  Eigen::VectorXd x = Eigen::VectorXd::Zero(k);
  x[0] = std::log(ybar / (1.0 - ybar));
  ResponseFit fit;
  // The intercept is also bounded: it diverges under quasi-separation too.
  x = newton_maximize(x, eval, options, k, fit.loglik, fit.iterations, fit.gradient_norm);
  for (Eigen::Index a = 0; a < k; ++a) fit.beta[cols[a]] = x[a];
  fit.aic = -2.0 * fit.loglik + 2.0 * static_cast<double>(k);
  return fit;
}

SurvivalFit fit_survival_mle(const DesignCache& d, const SurvivalIndicators& w,
                             const MleOptions& options) {
  if (!w.satisfies_hierarchy()) (void)classify(w);
  if (d.event_count <= 0.0)
    throw NumericalError("no observed events; Weibull MLE does not exist");
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < kGammaSize; ++j)
    if (w.w[j]) cols.push_back(j);
  const auto kc = static_cast<Eigen::Index>(cols.size());
  const Eigen::Index k = kc + 2;  // + log nu, log lambda

  auto eval = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g, Eigen::MatrixXd& h) {
    const double u = x[kc];
    const double v = x[kc + 1];
    const double nu = std::exp(u);
    g.setZero(k);
    h.setZero(k, k);
    double ll = d.event_count * (u + v) + (nu - 1.0) * d.event_log_time;
    double guu_event = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) {
      double eta = 0.0;
      for (Eigen::Index a = 0; a < kc; ++a) eta += x[a] * d.survival_cols[cols[a]][i];
      const double ev = d.event[i];
      ll += ev * eta;
      double hm = 0.0;   // Lambda_i = lambda t^nu e^eta
      double nlt = 0.0;  // nu log t
      if (d.time[i] > 0.0) {
        nlt = nu * d.log_time[i];
        hm = std::exp(v + nlt + eta);
      }
      ll -= hm;
      guu_event += ev * nlt;
      for (Eigen::Index a = 0; a < kc; ++a) {
        const double xa = d.survival_cols[cols[a]][i];
        g[a] += (ev - hm) * xa;
        for (Eigen::Index c = 0; c <= a; ++c)
          h(a, c) -= hm * xa * d.survival_cols[cols[c]][i];
        h(kc, a) -= hm * nlt * xa;
        h(kc + 1, a) -= hm * xa;
      }
      g[kc] += ev * (1.0 + nlt) - hm * nlt;
      g[kc + 1] += ev - hm;
      h(kc, kc) -= hm * (nlt + nlt * nlt);
      h(kc + 1, kc) -= hm * nlt;
      h(kc + 1, kc + 1) -= hm;
    }
    h(kc, kc) += guu_event;
    h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
    return ll;
  };

  double total_time = 0.0;
  for (double t : d.time) total_time += t;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(k);
  x[kc + 1] = std::log(d.event_count / total_time);
  SurvivalFit fit;
  x = newton_maximize(x, eval, options, kc, fit.loglik, fit.iterations, fit.gradient_norm);
  for (Eigen::Index a = 0; a < kc; ++a) fit.gamma[cols[a]] = x[a];
  fit.shape = std::exp(x[kc]);
  fit.rate = std::exp(x[kc + 1]);
  fit.aic = -2.0 * fit.loglik + 2.0 * static_cast<double>(k);
  return fit;
}

MleFit fit_mle(const DesignCache& design, const ModelConfiguration& config,
               const MleOptions& options) {
  const auto rf = fit_response_mle(design, config.response, options);
  const auto sf = fit_survival_mle(design, config.survival, options);
  MleFit fit;
  fit.state.beta = rf.beta;
  fit.state.gamma = sf.gamma;
  fit.state.shape = sf.shape;
  fit.state.rate = sf.rate;
  fit.state.config = config;
  fit.loglik = rf.loglik + sf.loglik;
  fit.response_aic = rf.aic;
  fit.survival_aic = sf.aic;
  fit.aic = rf.aic + sf.aic;
  fit.iterations = rf.iterations + sf.iterations;
  return fit;
}

MleFit fit_mle(const Dataset& data, const ModelConfiguration& config,
               const MleOptions& options) {
  return fit_mle(DesignCache(data), config, options);
}

}  // namespace medbma
