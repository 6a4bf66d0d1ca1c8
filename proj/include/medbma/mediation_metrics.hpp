#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "medbma/data_model.hpp"
#include "medbma/likelihood.hpp"

namespace medbma {

class TimeGrid {
 public:
  // Throws InputError unless strictly increasing and positive.
  explicit TimeGrid(std::vector<double> times);
  // `points` equally spaced values from landmark/points to landmark.
  static TimeGrid uniform(double landmark, std::size_t points = 100);

  const std::vector<double>& times() const noexcept { return times_; }
  std::size_t size() const noexcept { return times_.size(); }

 private:
  std::vector<double> times_;
};

struct GroupSurvival {
  double s0 = 1.0;      // controls as observed
  double s1 = 1.0;      // treated as observed
  double s_star = 1.0;  // controls with the arm set to treatment
};

GroupSurvival group_survival_means(const Dataset& data, const ParameterState& state, double t);

enum class Curve { total, direct, mediated, medprop };
inline constexpr std::array<Curve, 4> kCurves = {Curve::total, Curve::direct, Curve::mediated,
                                                 Curve::medprop};
const char* curve_name(Curve c) noexcept;

struct CurveBand {
  double mean = 0.0;
  double median = 0.0;
  double lower = 0.0;  // 2.5% quantile
  double upper = 0.0;  // 97.5% quantile
};

struct RiskRatioCurves {
  std::vector<double> times;
  // bands[curve][time]
  std::array<std::vector<CurveBand>, 4> bands;
  std::vector<std::size_t> medprop_excluded;
  // max over draws of |tot - d - m| per time
  std::vector<double> identity_residual;
  std::size_t draws = 0;
  // Per-draw group means, row-major [draw * times + t]; empty unless kept.
  std::vector<double> s0, s1, s_star;

  const std::vector<CurveBand>& curve(Curve c) const { return bands[static_cast<std::size_t>(c)]; }
};

// Empirical quantile, type 7 (linear interpolation of order statistics).
double quantile(std::span<const double> sorted, double p);

RiskRatioCurves risk_ratio_curves(const Dataset& data, std::span<const ParameterState> draws,
                                  const TimeGrid& grid, unsigned threads = 1,
                                  bool keep_group_means = false);

// Curves at a single known parameter point over a (large) population.
RiskRatioCurves true_curves(const ParameterState& truth, const Dataset& population,
                            const TimeGrid& grid);

// time,curve,mean,median,q2.5,q97.5,identity_residual for total/direct/mediated
std::string format_lrr_csv(const RiskRatioCurves& curves);
// time,curve,mean,median,q2.5,q97.5,excluded for the mediation proportion
std::string format_medprop_csv(const RiskRatioCurves& curves);

}  // namespace medbma
