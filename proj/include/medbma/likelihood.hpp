#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "medbma/data_model.hpp"
#include "medbma/model_space.hpp"

namespace medbma {

inline constexpr std::size_t kBetaSize = 4;   // beta0..beta3
inline constexpr std::size_t kGammaSize = 6;  // gamma1..gamma6
inline constexpr std::size_t kParameterCount = kBetaSize + kGammaSize + 2;

using BetaVector = std::array<double, kBetaSize>;
using GammaVector = std::array<double, kGammaSize>;

/// Full parameter vector (beta, gamma, nu, lambda) with its active
/// configuration. Inactive coefficients are held at exactly zero.
struct ParameterState {
  BetaVector beta{};
  GammaVector gamma{};
  double shape = 1.0;  // Weibull nu
  double rate = 1.0;   // Weibull lambda, cumulative hazard lambda * t^nu
  ModelConfiguration config = ModelConfiguration::full();

  bool satisfies_invariants() const noexcept;
  // Sets every coefficient whose indicator is off to 0.
  void zero_inactive() noexcept;
  // beta0..beta3, gamma1..gamma6, nu, lambda
  std::array<double, kParameterCount> flatten() const noexcept;

  friend bool operator==(const ParameterState&, const ParameterState&) = default;
};

// "beta0", ..., "gamma6", "nu", "lambda"
const std::array<const char*, kParameterCount>& parameter_names();

struct PriorSpec {
  double coef_sd = 100.0;
  double weibull_shape_hyper = 0.001;
  double weibull_rate_hyper = 0.001;
  std::array<double, kResponseTerms> psi_z{0.5, 0.5, 0.5};
  std::array<double, kSurvivalTerms> psi_w{0.5, 0.5, 0.5, 0.5, 0.5, 0.5};

  // Throws InputError on non-positive hyperparameters or psi outside (0,1).
  void validate() const;
};

/// Column-major design cache built once per dataset. Column 0 of the response
/// block is the intercept; survival columns are (A, Y, X, AY, AX, XY).
struct DesignCache {
  explicit DesignCache(const Dataset& data);

  std::size_t n = 0;
  std::array<std::vector<double>, kBetaSize> response_cols;
  std::array<std::vector<double>, kGammaSize> survival_cols;
  std::array<bool, kGammaSize> survival_binary{};
  std::vector<double> y;
  std::vector<double> event;
  std::vector<double> time;
  std::vector<double> log_time;  // -inf for zero times
  double event_count = 0.0;
  double event_log_time = 0.0;  // sum of log T over events
  std::array<double, kGammaSize> event_col_sums{};
};

double softplus(double x) noexcept;
double logistic(double x) noexcept;

double response_loglik(const Dataset& data, const BetaVector& beta,
                       const ResponseIndicators& z);
double response_loglik(const DesignCache& design, const BetaVector& beta,
                       const ResponseIndicators& z);
BetaVector response_gradient(const Dataset& data, const BetaVector& beta,
                             const ResponseIndicators& z);

// Throws InputError for an observed event at time zero.
double survival_loglik(const Dataset& data, const GammaVector& gamma, double nu,
                       double lambda, const SurvivalIndicators& w);
double survival_loglik(const DesignCache& design, const GammaVector& gamma,
                       double nu, double lambda, const SurvivalIndicators& w);

struct SurvivalGradient {
  GammaVector gamma{};
  double shape = 0.0;
  double rate = 0.0;
};
SurvivalGradient survival_gradient(const Dataset& data, const GammaVector& gamma,
                                   double nu, double lambda,
                                   const SurvivalIndicators& w);

/// exp(-lambda * t^nu * exp(row . gamma)); equals 1 at t = 0.
double survival_probability(double t, const SurvivalRow& design_row,
                            const GammaVector& gamma, double nu, double lambda) noexcept;

double normal_log_density(double x, double mean, double sd) noexcept;
double gamma_log_density(double x, double shape, double rate) noexcept;

/// Normal(0, coef_sd^2) over the intercept and active coefficients, Gamma
/// terms for nu and lambda, Bernoulli(psi) masses for all nine indicators.
double log_prior(const ParameterState& state, const PriorSpec& prior);

struct MleOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-8;
  double separation_bound = 30.0;
};

struct ResponseFit {
  BetaVector beta{};
  double loglik = 0.0;
  double aic = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
};

struct SurvivalFit {
  GammaVector gamma{};
  double shape = 1.0;
  double rate = 1.0;
  double loglik = 0.0;
  double aic = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
};

struct MleFit {
  ParameterState state;
  double loglik = 0.0;
  double aic = 0.0;
  double response_aic = 0.0;
  double survival_aic = 0.0;
  int iterations = 0;
};

// Logistic IRLS over the intercept plus active terms.
ResponseFit fit_response_mle(const DesignCache& design, const ResponseIndicators& z,
                             const MleOptions& options = {});
// Damped Newton over active gamma, log nu and log lambda.
SurvivalFit fit_survival_mle(const DesignCache& design, const SurvivalIndicators& w,
                             const MleOptions& options = {});

/// Joint maximum likelihood for one configuration. AIC counts the intercept,
/// the active coefficients, nu and lambda. Throws ConvergenceError or
/// SeparationError.
MleFit fit_mle(const Dataset& data, const ModelConfiguration& config,
               const MleOptions& options = {});
MleFit fit_mle(const DesignCache& design, const ModelConfiguration& config,
               const MleOptions& options = {});

}  // namespace medbma
