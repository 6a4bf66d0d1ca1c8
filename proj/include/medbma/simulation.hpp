#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "medbma/data_model.hpp"
#include "medbma/likelihood.hpp"
#include "medbma/mediation_metrics.hpp"
#include "medbma/prediction.hpp"
#include "medbma/prior_calibration.hpp"
#include "medbma/sampler.hpp"

namespace medbma {

struct Scenario {
  std::string label;
  BetaVector beta{};
  GammaVector gamma{};
  double shape = 2.0;
  double rate = 1.0;
  double landmark = 1.2;
  double covariate_lower = -2.0;
  double covariate_upper = 4.0;
  ModelConfiguration truth;

  ParameterState true_state() const;
};

// "I", "II", "III" or "IV"; throws InputError otherwise.
Scenario make_scenario(std::string_view label);
const std::array<std::string, 4>& scenario_labels();

// Balanced arms by random permutation, X ~ U(lower, upper), administrative
// censoring at the landmark with event = 1{T* < c}. n must be even.
Dataset generate_dataset(const Scenario& scenario, std::size_t n, std::uint64_t seed);

// Control-vs-treatment hazard ratio exp(-gamma_A) from a Weibull-PH fit with
// arm and covariate terms on a large simulated population.
double true_hazard_ratio(const Scenario& scenario, std::size_t population = 1000000,
                         std::uint64_t seed = 20240601);

struct StudyConfig {
  Scenario scenario = make_scenario("I");
  std::size_t n = 1000;
  std::size_t reps = 20;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  SamplerConfig sampler{};
  PriorSpec prior{};  // coefficient and Weibull hyperparameters; psi is calibrated
  PriorCalibrationOptions calibration{};

  bool compute_curves = true;
  std::size_t grid_points = 100;
  std::size_t curve_stride = 1;        // every k-th pooled draw enters the curves
  std::size_t truth_population = 100000;

  std::vector<std::size_t> n2_list;    // empty: no power study
  std::vector<PredictionMode> modes{PredictionMode::future_study};
  std::size_t power_draw_stride = 1;
  double alpha = 0.05;

  void validate() const;
};

struct CoefficientRow {
  std::string name;
  double truth = 0.0;
  double bias = 0.0;
  double mstd = 0.0;
  double coverage = 0.0;
  double inclusion = 0.0;
  double max_rhat = 0.0;
};

struct ModelProbabilityRow {
  ModelFamily family = ModelFamily::response;
  std::size_t index = 0;
  bool is_true = false;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t top_count = 0;
};

struct CurveRow {
  double time = 0.0;
  Curve curve = Curve::total;
  double truth = 0.0;
  double mean = 0.0;    // replication average of posterior means
  double median = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct PowerCell {
  std::size_t replication = 0;
  std::size_t n2 = 0;
  PredictionMode mode = PredictionMode::future_study;
  double power = 0.0;
  double realized_p = 1.0;
};

struct PowerRow {
  std::size_t n2 = 0;
  PredictionMode mode = PredictionMode::future_study;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double realized_rate = 0.0;  // fraction of realized p-values below alpha
  PredictionEvaluation evaluation;
};

struct ReplicationFailure {
  std::size_t replication = 0;
  std::string message;
};

struct ReplicationReport {
  std::string scenario;
  std::size_t n = 0;
  std::size_t reps = 0;
  std::size_t succeeded = 0;
  std::vector<ReplicationFailure> failures;
  std::vector<CoefficientRow> coefficients;
  std::vector<ModelProbabilityRow> model_probs;
  std::vector<CurveRow> curves;
  std::vector<PowerCell> power_cells;
  std::vector<PowerRow> power;
  double runtime_seconds = 0.0;  // not written to disk

  const ModelProbabilityRow& model(ModelFamily family, std::size_t index) const;
  double mean_power(std::size_t n2, PredictionMode mode) const;
  const PowerRow* power_row(std::size_t n2, PredictionMode mode) const;
};

ReplicationReport run_replication_study(const StudyConfig& config);

// Power-only study: curves are skipped.
ReplicationReport run_power_study(StudyConfig config, std::vector<std::size_t> n2_list,
                                  std::vector<PredictionMode> modes);

void write_report(const ReplicationReport& report, double alpha,
                  const std::filesystem::path& directory);

}  // namespace medbma
