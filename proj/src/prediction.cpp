#include "medbma/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "medbma/errors.hpp"
#include "medbma/io.hpp"
#include "medbma/model_space.hpp"
#include "medbma/parallel.hpp"

namespace medbma {

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

}  // namespace

const char* mode_name(PredictionMode mode) noexcept {
  return mode == PredictionMode::future_study ? "future_study" : "interim_completion";
}

PredictionMode parse_mode(std::string_view text) {
  if (text == "future_study" || text == "future") return PredictionMode::future_study;
  if (text == "interim_completion" || text == "interim") return PredictionMode::interim_completion;
  throw InputError("unknown prediction mode '" + std::string(text) +
                   "' (expected future_study or interim_completion)");
}

TestFrame parse_test_frame(std::string_view text) {
  TestFrame out;
  std::size_t pos = 0, line_no = 0;
  std::size_t columns = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (io::trim(line).empty()) continue;
    const auto f = io::split_csv_line(line);
    auto fail = [&](const std::string& what) {
      return InputError("test frame line " + std::to_string(line_no) + ": " + what);
    };
    if (columns == 0) {
      if (f.size() < 2 || f.size() > 3 || io::trim(f[0]) != "arm" ||
          io::trim(f[1]) != "covariate" || (f.size() == 3 && io::trim(f[2]) != "response"))
        throw fail("header must be arm,covariate[,response]");
      columns = f.size();
      continue;
    }
    if (f.size() != columns)
      throw fail("expected " + std::to_string(columns) + " fields, got " + std::to_string(f.size()));
    TestSubject s;
    const auto arm = io::parse_int(io::trim(f[0]));
    if (!arm || (*arm != 0 && *arm != 1)) throw fail("arm must be 0 or 1");
    const auto x = io::parse_double(io::trim(f[1]));
    if (!x || !std::isfinite(*x)) throw fail("covariate must be a finite number");
    s.arm = static_cast<int>(*arm);
    s.covariate = *x;
    if (columns == 3 && !io::trim(f[2]).empty()) {
      const auto y = io::parse_int(io::trim(f[2]));
      if (!y || (*y != 0 && *y != 1)) throw fail("response must be 0, 1 or empty");
      s.response = static_cast<int>(*y);
    }
    out.subjects.push_back(s);
  }
  if (columns == 0) throw InputError("test frame is empty");
  if (out.subjects.empty()) throw InputError("test frame has a header but no subjects");
  return out;
}

TestFrame load_test_frame(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw InputError("test frame not found: " + path.string());
  try {
    return parse_test_frame(io::read_file(path));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

TestFrame test_frame_from(const Dataset& data, bool keep_responses) {
  TestFrame f;
  for (const auto& r : data) {
    TestSubject s{r.arm, r.covariate, std::nullopt};
    if (keep_responses) s.response = r.response;
    f.subjects.push_back(s);
  }
  return f;
}

void PredictionRequest::validate() const {
  if (!(landmark > 0.0) || !std::isfinite(landmark)) throw InputError("landmark must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0,1)");
  if (frame.subjects.empty()) throw InputError("test frame has no subjects");
}

std::vector<int> predict_response(const TestFrame& frame, const ParameterState& s, Rng& rng) {
  std::vector<int> y(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const auto& t = frame.subjects[i];
    const auto row = response_design_row(t.arm, t.covariate, s.config.response);
    double eta = 0.0;
    for (std::size_t j = 0; j < kBetaSize; ++j) eta += row[j] * s.beta[j];
    // Draw even when the response is known so streams do not depend on it.
    const double u = uniform_open(rng);
    y[i] = t.response ? *t.response : (u < logistic(eta) ? 1 : 0);
  }
  return y;
}

double weibull_inverse(double u, double eta, double nu, double lambda) noexcept {
  return std::pow(-std::log(u) / (lambda * std::exp(eta)), 1.0 / nu);
}

PredictedSurvival predict_survival(const TestFrame& frame, std::span<const int> y,
                                   const ParameterState& s, double landmark, Rng& rng) {
  PredictedSurvival out;
  out.time.resize(frame.size());
  out.event.resize(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const auto& t = frame.subjects[i];
    const auto row = survival_design_row(t.arm, y[i], t.covariate, s.config.survival);
    double eta = 0.0;
    for (std::size_t j = 0; j < kGammaSize; ++j) eta += row[j] * s.gamma[j];
    const double t_star = weibull_inverse(uniform_open(rng), eta, s.shape, s.rate);
    out.event[i] = t_star <= landmark ? 1 : 0;
    out.time[i] = std::min(t_star, landmark);
  }
  return out;
}

LogrankResult logrank_test(std::span<const double> times, std::span<const int> events,
                           std::span<const int> arms) {
  const std::size_t n = times.size();
  if (events.size() != n || arms.size() != n)
    throw InputError("logrank_test: input lengths differ");
  std::size_t n1 = 0;
  for (int a : arms) n1 += a == 1;
  if (n1 == 0 || n1 == n) throw InputError("logrank_test needs both arms");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });

  LogrankResult r;
  double at_risk = static_cast<double>(n), at_risk1 = static_cast<double>(n1);
  std::size_t total_events = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    double d = 0.0, d1 = 0.0, leaving = 0.0, leaving1 = 0.0;
    while (j < n && times[order[j]] == times[order[i]]) {
      const auto k = order[j];
      if (events[k]) {
        d += 1.0;
        if (arms[k] == 1) d1 += 1.0;
      }
      leaving += 1.0;
      if (arms[k] == 1) leaving1 += 1.0;
      ++j;
    }
    if (d > 0.0) {
      const double frac = at_risk1 / at_risk;
      r.observed += d1;
      r.expected += d * frac;
      if (at_risk > 1.0) r.variance += d * frac * (1.0 - frac) * (at_risk - d) / (at_risk - 1.0);
      total_events += static_cast<std::size_t>(d);
    }
    at_risk -= leaving;
    at_risk1 -= leaving1;
    i = j;
  }
  if (total_events == 0) {
    r.no_events = true;
    return r;
  }
  if (r.variance <= 0.0) return r;
  const double diff = r.observed - r.expected;
  r.statistic = diff * diff / r.variance;
  r.p_value = std::erfc(std::sqrt(0.5 * r.statistic));
  return r;
}

LogrankResult logrank_test(const Dataset& data) {
  std::vector<double> t;
  std::vector<int> e, a;
  for (const auto& r : data) {
    t.push_back(r.time);
    e.push_back(r.event);
    a.push_back(r.arm);
  }
  return logrank_test(t, e, a);
}

PowerResult predictive_power(std::span<const ParameterState> draws, const PredictionRequest& req,
                             const Dataset* observed) {
  req.validate();
  if (draws.empty()) throw InputError("predictive power needs posterior draws");
  if (req.mode == PredictionMode::interim_completion && observed == nullptr)
    throw InputError("interim completion needs the observed interim data");

  std::vector<double> base_t;
  std::vector<int> base_e, base_a;
  if (req.mode == PredictionMode::interim_completion) {
    for (const auto& r : *observed) {
      base_t.push_back(r.time);
      base_e.push_back(r.event);
      base_a.push_back(r.arm);
    }
  }
  std::vector<int> arms = base_a;
  for (const auto& s : req.frame.subjects) arms.push_back(s.arm);

  PowerResult out;
  out.pvalues.resize(draws.size());
  std::vector<char> flags(draws.size(), 0);
  parallel_for(draws.size(), req.threads, [&](std::size_t d) {
    Rng rng(derive_seed(req.seed, {d}));
    const auto y = predict_response(req.frame, draws[d], rng);
    const auto surv = predict_survival(req.frame, y, draws[d], req.landmark, rng);
    std::vector<double> t = base_t;
    std::vector<int> e = base_e;
    t.insert(t.end(), surv.time.begin(), surv.time.end());
    e.insert(e.end(), surv.event.begin(), surv.event.end());
    const auto lr = logrank_test(t, e, arms);
    out.pvalues[d] = lr.p_value;
    flags[d] = lr.no_events;
  });
  std::size_t significant = 0;
  for (std::size_t d = 0; d < draws.size(); ++d) {
    significant += out.pvalues[d] < req.alpha;
    out.no_event_draws += flags[d];
  }
  out.draws_used = draws.size();
  out.power = static_cast<double>(significant) / static_cast<double>(draws.size());
  return out;
}

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

PredictionEvaluation evaluate_predictions(std::span<const double> power,
                                          std::span<const double> realized_p, double alpha) {
  if (power.size() != realized_p.size())
    throw InputError("power and realized p-value vectors differ in length");
  PredictionEvaluation ev;
  ev.pairs = power.size();
  std::vector<double> miss(power.size());
  for (std::size_t i = 0; i < power.size(); ++i) miss[i] = 1.0 - power[i];
  const double rho = spearman_correlation(miss, realized_p);
  if (std::isfinite(rho)) ev.spearman = rho;

  std::size_t pos = 0;
  for (double p : realized_p) pos += p < alpha;
  ev.significant = pos;
  const std::size_t neg = power.size() - pos;
  if (pos == 0 || neg == 0) return ev;

  std::vector<std::size_t> order(power.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return power[a] > power[b]; });
  double tp = 0.0, fp = 0.0, area = 0.0;
  ev.roc.emplace_back(0.0, 0.0);
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && power[order[j]] == power[order[i]]) {
      (realized_p[order[j]] < alpha ? tp : fp) += 1.0;
      ++j;
    }
    const auto [fpr0, tpr0] = ev.roc.back();
    const double fpr = fp / static_cast<double>(neg), tpr = tp / static_cast<double>(pos);
    area += (fpr - fpr0) * 0.5 * (tpr + tpr0);
    ev.roc.emplace_back(fpr, tpr);
    i = j;
  }
  ev.auc = area;
  return ev;
}

std::string format_power_csv(const PowerResult& r, const PredictionRequest& req) {
  std::string out = "mode,subjects,landmark,alpha,draws_used,no_event_draws,power\n";
  out += std::string(mode_name(req.mode)) + ',' + std::to_string(req.frame.size()) + ',' +
         io::format_double(req.landmark) + ',' + io::format_double(req.alpha) + ',' +
         std::to_string(r.draws_used) + ',' + std::to_string(r.no_event_draws) + ',' +
         io::format_double(r.power) + '\n';
  return out;
}

std::string format_pvalues_csv(const PowerResult& r) {
  std::string out = "draw,p_value\n";
  for (std::size_t d = 0; d < r.pvalues.size(); ++d)
    out += std::to_string(d) + ',' + io::format_double(r.pvalues[d]) + '\n';
  return out;
}

}  // namespace medbma
