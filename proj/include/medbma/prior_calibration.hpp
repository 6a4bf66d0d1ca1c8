#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "medbma/likelihood.hpp"
#include "medbma/model_space.hpp"

namespace medbma {

/// Prior probabilities of every valid model of one family, induced by
/// independent Bernoulli(psi_j) indicators conditioned on the hierarchy
/// constraints.
struct ModelPriorTable {
  ModelFamily family = ModelFamily::response;
  std::vector<std::string> labels;
  std::vector<double> probabilities;
  std::vector<double> psi;
};

ModelPriorTable model_prior_probs(std::span<const double> psi, ModelFamily family);

struct AnnealingOptions {
  std::uint64_t seed = 1;
  std::size_t evaluations = 100000;
  double lower = 0.01;
  double upper = 0.99;
  std::size_t refine_evaluations = 20000;
};

struct CalibrationResult {
  std::vector<double> psi;
  ModelPriorTable table;
  std::vector<double> targets;
  double residual = 0.0;  // objective at psi
};

// Sample standard deviation of probabilities[i] / targets[i].
double calibration_objective(std::span<const double> psi, std::span<const double> targets,
                             ModelFamily family);

/// Searches psi in [lower, upper]^d so that the model prior probabilities are
/// proportional to `targets`: simulated annealing with geometric cooling,
/// then Nelder-Mead refinement from the best point found.
CalibrationResult calibrate_psi(std::span<const double> targets, ModelFamily family,
                                const AnnealingOptions& options = {});

enum class AicWeighting {
  reverse_rank,    // smallest AIC gets m, largest 1; ties share average rank
  akaike_weights,  // exp(-(AIC - min AIC) / 2)
};

std::vector<double> aic_rank_weights(std::span<const double> aics);
std::vector<double> aic_weights(std::span<const double> aics, AicWeighting scheme);

/// Per-family AICs of every model in table order. Models whose fit fails
/// (separation or non-convergence) get +inf and so rank last.
struct ModelAics {
  std::array<double, kResponseModels> response{};
  std::array<double, kSurvivalModels> survival{};
};
ModelAics model_aics(const DesignCache& design, const MleOptions& options = {});

struct PriorCalibrationOptions {
  bool equal_weights = false;
  AicWeighting weighting = AicWeighting::reverse_rank;
  AnnealingOptions annealing{};
};

struct CalibratedPrior {
  PriorSpec prior;
  ModelAics aics;
  CalibrationResult response;
  CalibrationResult survival;
};

// Full prior set-up for a dataset: AIC weights (unless equal weights) and
// psi calibration in both families. `base` supplies the coefficient and
// Weibull hyperparameters.
CalibratedPrior calibrate_prior(const DesignCache& design,
                                const PriorCalibrationOptions& options,
                                PriorSpec base = {});

}  // namespace medbma
