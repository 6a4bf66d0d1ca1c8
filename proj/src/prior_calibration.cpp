#include "medbma/prior_calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "medbma/errors.hpp"
#include "medbma/random.hpp"

namespace medbma {

namespace {

double sample_sd(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1.0));
}

void check_psi(std::span<const double> psi, ModelFamily family) {
  if (psi.size() != family_terms(family))
    throw InputError("psi has " + std::to_string(psi.size()) + " components, expected " +
                     std::to_string(family_terms(family)));
  for (double p : psi)
    if (!(p > 0.0 && p < 1.0)) throw InputError("psi components must lie in (0,1)");
}

// Unnormalized masses into `out` (size = family_size).
void model_masses(std::span<const double> psi, ModelFamily family, std::span<double> out) {
  const std::size_t m = family_size(family);
  const std::size_t d = family_terms(family);
  for (std::size_t i = 0; i < m; ++i) {
    double mass = 1.0;
    if (family == ModelFamily::response) {
      const auto& z = enumerate_response_models()[i].z;
      for (std::size_t j = 0; j < d; ++j) mass *= z[j] ? psi[j] : 1.0 - psi[j];
    } else {
      const auto& w = enumerate_survival_models()[i].w;
      for (std::size_t j = 0; j < d; ++j) mass *= w[j] ? psi[j] : 1.0 - psi[j];
    }
    out[i] = mass;
  }
}

double objective_unchecked(std::span<const double> psi, std::span<const double> targets,
                           ModelFamily family) {
  std::array<double, kSurvivalModels> mass{};
  const std::size_t m = family_size(family);
  model_masses(psi, family, std::span<double>(mass.data(), m));
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) total += mass[i];
  std::array<double, kSurvivalModels> ratio{};
  for (std::size_t i = 0; i < m; ++i) ratio[i] = mass[i] / total / targets[i];
  return sample_sd(std::span<const double>(ratio.data(), m));
}

// Nelder-Mead refinement (GSL nmsimplex2) on the box; points outside it are
// clamped before evaluation.
template <class F>
std::vector<double> nelder_mead(F&& f, std::vector<double> start, double lo, double hi,
                                std::size_t max_iterations, double& best_value) {
  const std::size_t d = start.size();
  struct Context {
    F* f;
    double lo, hi;
    std::vector<double> p;
  } ctx{&f, lo, hi, std::vector<double>(d)};
  gsl_multimin_function fn;
  fn.n = d;
  fn.params = &ctx;
  fn.f = [](const gsl_vector* x, void* params) {
    auto* c = static_cast<Context*>(params);
    for (std::size_t j = 0; j < c->p.size(); ++j)
      c->p[j] = std::clamp(gsl_vector_get(x, j), c->lo, c->hi);
    return (*c->f)(c->p);
  };

  gsl_vector* x = gsl_vector_alloc(d);
  gsl_vector* steps = gsl_vector_alloc(d);
  for (std::size_t j = 0; j < d; ++j) {
    gsl_vector_set(x, j, start[j]);
    gsl_vector_set(steps, j, 0.05);
  }
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, d);
  gsl_multimin_fminimizer_set(s, &fn, x, steps);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-13) == GSL_SUCCESS) break;
  }
  std::vector<double> best(d);
  for (std::size_t j = 0; j < d; ++j) best[j] = std::clamp(gsl_vector_get(s->x, j), lo, hi);
  best_value = f(best);
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(steps);
  gsl_vector_free(x);
  return best;
}

}  // namespace

ModelPriorTable model_prior_probs(std::span<const double> psi, ModelFamily family) {
  check_psi(psi, family);
  const std::size_t m = family_size(family);
  ModelPriorTable t;
  t.family = family;
  t.psi.assign(psi.begin(), psi.end());
  t.probabilities.resize(m);
  model_masses(psi, family, t.probabilities);
  const double total = std::accumulate(t.probabilities.begin(), t.probabilities.end(), 0.0);
  for (auto& p : t.probabilities) p /= total;
  for (std::size_t i = 0; i < m; ++i) t.labels.push_back(model_label(family, i));
  return t;
}

double calibration_objective(std::span<const double> psi, std::span<const double> targets,
                             ModelFamily family) {
  check_psi(psi, family);
  if (targets.size() != family_size(family))
    throw InputError("expected " + std::to_string(family_size(family)) + " target weights");
  return objective_unchecked(psi, targets, family);
}

CalibrationResult calibrate_psi(std::span<const double> targets, ModelFamily family,
                                const AnnealingOptions& opt) {
  const std::size_t d = family_terms(family);
  if (targets.size() != family_size(family))
    throw InputError("expected " + std::to_string(family_size(family)) + " target weights, got " +
                     std::to_string(targets.size()));
  for (double t : targets)
    if (!(t > 0.0) || !std::isfinite(t)) throw InputError("target weights must be positive");
  if (!(opt.lower > 0.0 && opt.upper < 1.0 && opt.lower < opt.upper))
    throw InputError("psi search box must lie inside (0,1)");

  auto f = [&](std::span<const double> p) { return objective_unchecked(p, targets, family); };

  Rng rng(derive_seed(opt.seed, {static_cast<std::uint64_t>(family)}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, d - 1);

  std::vector<double> current(d, 0.5);
  double f_current = f(current);
  std::vector<double> best = current;
  double f_best = f_current;

  const std::size_t evals = std::max<std::size_t>(opt.evaluations, 2);
  const double t0 = std::max(f_current, 1e-3);
  const double t_end = t0 * 1e-8;
  const double cooling = std::pow(t_end / t0, 1.0 / static_cast<double>(evals));
  const double width = opt.upper - opt.lower;
  double temperature = t0;
  std::vector<double> trial(d);
  for (std::size_t k = 1; k < evals; ++k) {
    temperature *= cooling;
    trial = current;
    const std::size_t j = pick(rng);
    const double step = width * std::max(0.3 * std::sqrt(temperature / t0), 1e-5);
    double v = trial[j] + step * normal(rng);
    // reflect into the box
    for (int r = 0; r < 8 && (v < opt.lower || v > opt.upper); ++r)
      v = v < opt.lower ? 2.0 * opt.lower - v : 2.0 * opt.upper - v;
    trial[j] = std::clamp(v, opt.lower, opt.upper);
    const double f_trial = f(trial);
    const double delta = f_trial - f_current;
    if (delta <= 0.0 || uniform_open(rng) < std::exp(-delta / temperature)) {
      current.swap(trial);
      f_current = f_trial;
      if (f_current < f_best) {
        f_best = f_current;
        best = current;
      }
    }
  }

  double f_refined = f_best;
  auto refined = nelder_mead(
      [&](const std::vector<double>& p) { return f(p); }, best, opt.lower, opt.upper,
      opt.refine_evaluations, f_refined);
  if (f_refined <= f_best) {
    best = refined;
    f_best = f_refined;
  }

  CalibrationResult result;
  result.psi = best;
  result.table = model_prior_probs(best, family);
  result.targets.assign(targets.begin(), targets.end());
  result.residual = f_best;
  return result;
}

std::vector<double> aic_rank_weights(std::span<const double> aics) {
  const std::size_t m = aics.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return aics[a] < aics[b]; });
  std::vector<double> rank(m);
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j + 1 < m && aics[order[j + 1]] == aics[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  std::vector<double> w(m);
  for (std::size_t i = 0; i < m; ++i) w[i] = static_cast<double>(m) + 1.0 - rank[i];
  return w;
}

std::vector<double> aic_weights(std::span<const double> aics, AicWeighting scheme) {
  if (scheme == AicWeighting::reverse_rank) return aic_rank_weights(aics);
  const double best = *std::min_element(aics.begin(), aics.end());
  std::vector<double> w(aics.size());
  for (std::size_t i = 0; i < aics.size(); ++i)
    w[i] = std::max(std::exp(-0.5 * (aics[i] - best)), 1e-300);
  return w;
}

ModelAics model_aics(const DesignCache& design, const MleOptions& options) {
  ModelAics out;
  const auto& rm = enumerate_response_models();
  const auto& sm = enumerate_survival_models();
  for (std::size_t i = 0; i < kResponseModels; ++i) {
    try {
      out.response[i] = fit_response_mle(design, rm[i], options).aic;
    } catch (const NumericalError&) {
      out.response[i] = std::numeric_limits<double>::infinity();
    }
  }
  for (std::size_t i = 0; i < kSurvivalModels; ++i) {
    try {
      out.survival[i] = fit_survival_mle(design, sm[i], options).aic;
    } catch (const NumericalError&) {
      out.survival[i] = std::numeric_limits<double>::infinity();
    }
  }
  return out;
}

CalibratedPrior calibrate_prior(const DesignCache& design, const PriorCalibrationOptions& options,
                                PriorSpec base) {
  CalibratedPrior out;
  std::vector<double> rw(kResponseModels, 1.0), sw(kSurvivalModels, 1.0);
  if (!options.equal_weights) {
    out.aics = model_aics(design);
    rw = aic_weights(out.aics.response, options.weighting);
    sw = aic_weights(out.aics.survival, options.weighting);
  } else {
    out.aics.response.fill(std::numeric_limits<double>::quiet_NaN());
    out.aics.survival.fill(std::numeric_limits<double>::quiet_NaN());
  }
  out.response = calibrate_psi(rw, ModelFamily::response, options.annealing);
  out.survival = calibrate_psi(sw, ModelFamily::survival, options.annealing);
  std::copy(out.response.psi.begin(), out.response.psi.end(), base.psi_z.begin());
  std::copy(out.survival.psi.begin(), out.survival.psi.end(), base.psi_w.begin());
  out.prior = base;
  out.prior.validate();
  return out;
}

}  // namespace medbma
