#include "medbma/mediation_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "medbma/errors.hpp"
#include "medbma/io.hpp"
#include "medbma/parallel.hpp"

namespace medbma {

namespace {

constexpr double kMedpropTolerance = 1e-12;

// Per-subject relative hazards lambda * exp(eta), split by group.
struct HazardMultipliers {
  std::vector<double> control, treated, control_flipped;
};

HazardMultipliers multipliers(const Dataset& data, const ParameterState& s) {
  HazardMultipliers m;
  const auto& w = s.config.survival;
  for (const auto& r : data) {
    const auto row = survival_design_row(r, w);
    double eta = 0.0;
    for (std::size_t j = 0; j < kGammaSize; ++j) eta += row[j] * s.gamma[j];
    if (r.arm == 1) {
      m.treated.push_back(s.rate * std::exp(eta));
      continue;
    }
    m.control.push_back(s.rate * std::exp(eta));
    const auto flipped = survival_design_row(1, r.response, r.covariate, w);
    double eta_f = 0.0;
    for (std::size_t j = 0; j < kGammaSize; ++j) eta_f += flipped[j] * s.gamma[j];
    m.control_flipped.push_back(s.rate * std::exp(eta_f));
  }
  if (m.control.empty() || m.treated.empty())
    throw InputError("mediation curves need subjects in both arms");
  return m;
}

double mean_survival(const std::vector<double>& mult, double t_nu) {
  double sum = 0.0;
  for (double h : mult) sum += std::exp(-h * t_nu);
  return sum / static_cast<double>(mult.size());
}

GroupSurvival group_means(const HazardMultipliers& m, double t, double nu) {
  const double t_nu = std::pow(t, nu);
  return {mean_survival(m.control, t_nu), mean_survival(m.treated, t_nu),
          mean_survival(m.control_flipped, t_nu)};
}

CurveBand band(std::vector<double>& values) {
  CurveBand b;
  if (values.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan, nan};
  }
  std::sort(values.begin(), values.end());
  b.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  b.median = quantile(values, 0.5);
  b.lower = quantile(values, 0.025);
  b.upper = quantile(values, 0.975);
  return b;
}

}  // namespace

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  if (times_.empty()) throw InputError("time grid is empty");
  for (std::size_t i = 0; i < times_.size(); ++i) {
    if (!(times_[i] > 0.0) || !std::isfinite(times_[i]))
      throw InputError("time grid values must be positive and finite");
    if (i > 0 && !(times_[i] > times_[i - 1]))
      throw InputError("time grid must be strictly increasing");
  }
}

TimeGrid TimeGrid::uniform(double landmark, std::size_t points) {
  if (!(landmark > 0.0) || points == 0) throw InputError("grid needs a positive landmark");
  std::vector<double> t(points);
  for (std::size_t i = 0; i < points; ++i)
    t[i] = landmark * static_cast<double>(i + 1) / static_cast<double>(points);
  return TimeGrid(std::move(t));
}

const char* curve_name(Curve c) noexcept {
  switch (c) {
    case Curve::total: return "total";
    case Curve::direct: return "direct";
    case Curve::mediated: return "mediated";
    case Curve::medprop: return "medprop";
  }
  return "?";
}

GroupSurvival group_survival_means(const Dataset& data, const ParameterState& state, double t) {
  if (!(t > 0.0)) throw InputError("survival time must be positive");
  return group_means(multipliers(data, state), t, state.shape);
}

double quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InputError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

RiskRatioCurves risk_ratio_curves(const Dataset& data, std::span<const ParameterState> draws,
                                  const TimeGrid& grid, unsigned threads, bool keep_group_means) {
  if (draws.empty()) throw InputError("no draws for risk ratio curves");
  const std::size_t m = draws.size(), nt = grid.size();
  std::vector<double> s0(m * nt), s1(m * nt), ss(m * nt);
  parallel_for(m, threads, [&](std::size_t d) {
    const auto mult = multipliers(data, draws[d]);
    for (std::size_t t = 0; t < nt; ++t) {
      const auto g = group_means(mult, grid.times()[t], draws[d].shape);
      s0[d * nt + t] = g.s0;
      s1[d * nt + t] = g.s1;
      ss[d * nt + t] = g.s_star;
    }
  });

  RiskRatioCurves out;
  out.times = grid.times();
  out.draws = m;
  for (auto& b : out.bands) b.resize(nt);
  out.medprop_excluded.assign(nt, 0);
  out.identity_residual.assign(nt, 0.0);
  std::vector<double> tot(m), dir(m), med(m), prop;
  prop.reserve(m);
  for (std::size_t t = 0; t < nt; ++t) {
    prop.clear();
    for (std::size_t d = 0; d < m; ++d) {
      const double a = s0[d * nt + t], b = s1[d * nt + t], c = ss[d * nt + t];
      const double la = std::log(a), lb = std::log(b), lc = std::log(c);
      tot[d] = lb - la;
      dir[d] = lc - la;
      med[d] = lb - lc;
      out.identity_residual[t] =
          std::max(out.identity_residual[t], std::abs(tot[d] - dir[d] - med[d]));
      if (std::abs(b - a) < kMedpropTolerance)
        ++out.medprop_excluded[t];
      else
        prop.push_back((b - c) / (b - a));
    }
    out.bands[0][t] = band(tot);
    out.bands[1][t] = band(dir);
    out.bands[2][t] = band(med);
    out.bands[3][t] = band(prop);
  }
  if (keep_group_means) {
    out.s0 = std::move(s0);
    out.s1 = std::move(s1);
    out.s_star = std::move(ss);
  }
  return out;
}

RiskRatioCurves true_curves(const ParameterState& truth, const Dataset& population,
                            const TimeGrid& grid) {
  return risk_ratio_curves(population, std::span<const ParameterState>(&truth, 1), grid);
}

std::string format_lrr_csv(const RiskRatioCurves& c) {
  std::string out = "time,curve,mean,median,q2.5,q97.5,identity_residual\n";
  for (std::size_t t = 0; t < c.times.size(); ++t)
    for (Curve k : {Curve::total, Curve::direct, Curve::mediated}) {
      const auto& b = c.curve(k)[t];
      out += io::format_double(c.times[t]) + ',' + curve_name(k) + ',' +
             io::format_double(b.mean) + ',' + io::format_double(b.median) + ',' +
             io::format_double(b.lower) + ',' + io::format_double(b.upper) + ',' +
             io::format_double(c.identity_residual[t]) + '\n';
    }
  return out;
}

std::string format_medprop_csv(const RiskRatioCurves& c) {
  std::string out = "time,curve,mean,median,q2.5,q97.5,excluded\n";
  for (std::size_t t = 0; t < c.times.size(); ++t) {
    const auto& b = c.curve(Curve::medprop)[t];
    out += io::format_double(c.times[t]) + ",medprop," + io::format_double(b.mean) + ',' +
           io::format_double(b.median) + ',' + io::format_double(b.lower) + ',' +
           io::format_double(b.upper) + ',' + std::to_string(c.medprop_excluded[t]) + '\n';
  }
  return out;
}

}  // namespace medbma
