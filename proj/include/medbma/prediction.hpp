#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "medbma/data_model.hpp"
#include "medbma/likelihood.hpp"
#include "medbma/random.hpp"

namespace medbma {

enum class PredictionMode { future_study, interim_completion };
const char* mode_name(PredictionMode mode) noexcept;
PredictionMode parse_mode(std::string_view text);

struct TestSubject {
  int arm = 0;
  double covariate = 0.0;
  std::optional<int> response;  // known responses are not re-predicted
};

struct TestFrame {
  std::vector<TestSubject> subjects;
  std::size_t size() const noexcept { return subjects.size(); }
};

// Header arm,covariate[,response]; an empty response field means unknown.
TestFrame parse_test_frame(std::string_view csv_text);
TestFrame load_test_frame(const std::filesystem::path& path);
TestFrame test_frame_from(const Dataset& data, bool keep_responses);

struct PredictionRequest {
  PredictionMode mode = PredictionMode::future_study;
  TestFrame frame;
  double landmark = 1.2;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  void validate() const;
};

std::vector<int> predict_response(const TestFrame& frame, const ParameterState& state, Rng& rng);

// Weibull-PH inverse survival function: S(t) = u.
double weibull_inverse(double u, double eta, double nu, double lambda) noexcept;

struct PredictedSurvival {
  std::vector<double> time;
  std::vector<int> event;
};

// Event indicator is 1{T* <= landmark}; times are capped at the landmark.
PredictedSurvival predict_survival(const TestFrame& frame, std::span<const int> responses,
                                   const ParameterState& state, double landmark, Rng& rng);

struct LogrankResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double observed = 0.0;  // events in arm 1
  double expected = 0.0;
  double variance = 0.0;
  bool no_events = false;
};

LogrankResult logrank_test(std::span<const double> times, std::span<const int> events,
                           std::span<const int> arms);
LogrankResult logrank_test(const Dataset& data);

struct PowerResult {
  double power = 0.0;
  std::vector<double> pvalues;
  std::size_t draws_used = 0;
  std::size_t no_event_draws = 0;
};

// One predicted trial per draw; draw d uses RNG substream (seed, d).
PowerResult predictive_power(std::span<const ParameterState> draws, const PredictionRequest& request,
                             const Dataset* observed = nullptr);

struct PredictionEvaluation {
  std::optional<double> spearman;  // (1 - power) vs realized p
  std::vector<std::pair<double, double>> roc;  // (false positive rate, true positive rate)
  std::optional<double> auc;
  std::size_t significant = 0;
  std::size_t pairs = 0;
};

double spearman_correlation(std::span<const double> x, std::span<const double> y);
PredictionEvaluation evaluate_predictions(std::span<const double> power,
                                          std::span<const double> realized_p, double alpha = 0.05);

std::string format_power_csv(const PowerResult& result, const PredictionRequest& request);
std::string format_pvalues_csv(const PowerResult& result);

}  // namespace medbma
