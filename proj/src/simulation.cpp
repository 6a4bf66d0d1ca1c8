#include "medbma/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>

#include "medbma/errors.hpp"
#include "medbma/io.hpp"
#include "medbma/parallel.hpp"
#include "medbma/random.hpp"

namespace medbma {

namespace {

struct ReplicationResult {
  std::optional<std::string> error;
  PosteriorSummary summary;
  RiskRatioCurves curves;
  std::vector<PowerCell> power;
};

std::vector<ParameterState> strided(const PosteriorDraws& draws, std::size_t stride) {
  std::vector<ParameterState> out;
  std::size_t k = 0;
  for (const auto& chain : draws.chains)
    for (const auto& s : chain)
      if (k++ % stride == 0) out.push_back(s);
  return out;
}

Dataset concatenate(const Dataset& a, const Dataset& b) {
  std::vector<SubjectRecord> r = a.records();
  r.insert(r.end(), b.begin(), b.end());
  return Dataset(std::move(r));
}

ReplicationResult replicate(const StudyConfig& cfg, std::size_t r, const TimeGrid& grid) {
  ReplicationResult out;
  const Dataset data = generate_dataset(cfg.scenario, cfg.n, derive_seed(cfg.seed, {1, r}));
  const DesignCache design(data);

  PriorCalibrationOptions cal = cfg.calibration;
  cal.annealing.seed = derive_seed(cfg.seed, {3, r});
  const auto prior = calibrate_prior(design, cal, cfg.prior).prior;

  SamplerConfig sc = cfg.sampler;
  sc.seed = derive_seed(cfg.seed, {2, r});
  sc.threads = 1;
  const auto draws = run_mcmc(design, prior, sc);
  out.summary = summarize_posterior(draws);

  if (cfg.compute_curves) {
    const auto subset = strided(draws, cfg.curve_stride);
    out.curves = risk_ratio_curves(data, subset, grid);
  }

  if (!cfg.n2_list.empty()) {
    const auto subset = strided(draws, cfg.power_draw_stride);
    for (std::size_t n2 : cfg.n2_list) {
      const Dataset future =
          generate_dataset(cfg.scenario, n2, derive_seed(cfg.seed, {5, r, n2}));
      for (PredictionMode mode : cfg.modes) {
        PredictionRequest req;
        req.mode = mode;
        req.frame = test_frame_from(future, false);
        req.landmark = cfg.scenario.landmark;
        req.alpha = cfg.alpha;
        req.seed = derive_seed(cfg.seed, {4, r, n2, static_cast<std::uint64_t>(mode)});
        const auto pr = predictive_power(subset, req, &data);
        const double realized = mode == PredictionMode::future_study
                                    ? logrank_test(future).p_value
                                    : logrank_test(concatenate(data, future)).p_value;
        out.power.push_back({r, n2, mode, pr.power, realized});
      }
    }
  }
  return out;
}

}  // namespace

ParameterState Scenario::true_state() const {
  ParameterState s;
  s.beta = beta;
  s.gamma = gamma;
  s.shape = shape;
  s.rate = rate;
  s.config = truth;
  return s;
}

const std::array<std::string, 4>& scenario_labels() {
  static const std::array<std::string, 4> labels{"I", "II", "III", "IV"};
  return labels;
}

Scenario make_scenario(std::string_view label) {
  Scenario s;
  s.label = std::string(label);
  if (label == "I") {
    s.beta = {1, 2, -1, 2};
    s.gamma = {0, -0.84, 1, 0, 0, 0};
    s.truth = ModelConfiguration::from_labels("R5", "S7");
  } else if (label == "II") {
    s.beta = {1, 0, -1, 0};
    s.gamma = {-0.4, 0, 1, 0, 0, 0};
    s.truth = ModelConfiguration::from_labels("R3", "S6");
  } else if (label == "III") {
    s.beta = {1, 2, -1, 2};
    s.gamma = {-0.65, -0.6, 1, 0, 0, 0};
    s.truth = ModelConfiguration::from_labels("R5", "S11");
  } else if (label == "IV") {
    s.beta = {1, 2, -1, 2};
    s.gamma = {0, 0, 1, 0, 0, 0};
    s.truth = ModelConfiguration::from_labels("R5", "S4");
  } else {
    throw InputError("unknown scenario '" + std::string(label) + "' (expected I, II, III or IV)");
  }
  return s;
}

Dataset generate_dataset(const Scenario& sc, std::size_t n, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw InputError("simulated sample size must be even and at least 2");
  Rng rng(seed);
  std::vector<int> arms(n, 0);
  std::fill(arms.begin() + static_cast<std::ptrdiff_t>(n / 2), arms.end(), 1);
  std::shuffle(arms.begin(), arms.end(), rng);

  std::vector<SubjectRecord> records(n);
  const double width = sc.covariate_upper - sc.covariate_lower;
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = records[i];
    r.arm = arms[i];
    r.covariate = sc.covariate_lower + width * uniform_open(rng);
    const auto rr = response_design_row(r.arm, r.covariate, sc.truth.response);
    double eta_r = 0.0;
    for (std::size_t j = 0; j < kBetaSize; ++j) eta_r += rr[j] * sc.beta[j];
    r.response = uniform_open(rng) < logistic(eta_r) ? 1 : 0;
    const auto sr = survival_design_row(r.arm, r.response, r.covariate, sc.truth.survival);
    double eta_s = 0.0;
    for (std::size_t j = 0; j < kGammaSize; ++j) eta_s += sr[j] * sc.gamma[j];
    const double t_star = weibull_inverse(uniform_open(rng), eta_s, sc.shape, sc.rate);
    r.event = t_star < sc.landmark ? 1 : 0;
    r.time = std::min(t_star, sc.landmark);
  }
  return Dataset(std::move(records));
}

double true_hazard_ratio(const Scenario& sc, std::size_t population, std::uint64_t seed) {
  const Dataset data = generate_dataset(sc, population + population % 2, seed);
  const auto fit = fit_survival_mle(DesignCache(data), SurvivalIndicators{{1, 0, 1, 0, 0, 0}});
  return std::exp(-fit.gamma[0]);
}

void StudyConfig::validate() const {
  if (reps < 2) throw InputError("a replication study needs at least 2 replications");
  if (n < 2 || n % 2) throw InputError("n must be even and at least 2");
  if (curve_stride < 1 || power_draw_stride < 1) throw InputError("strides must be at least 1");
  if (grid_points < 1) throw InputError("grid needs at least one point");
  if (truth_population < 2) throw InputError("truth population too small");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0,1)");
  for (auto n2 : n2_list)
    if (n2 < 2 || n2 % 2) throw InputError("n2 values must be even and at least 2");
  if (!n2_list.empty() && modes.empty()) throw InputError("power study needs a mode");
  sampler.validate();
  prior.validate();
}

const ModelProbabilityRow& ReplicationReport::model(ModelFamily family, std::size_t index) const {
  for (const auto& row : model_probs)
    if (row.family == family && row.index == index) return row;
  throw InputError("model not in report");
}

const PowerRow* ReplicationReport::power_row(std::size_t n2, PredictionMode mode) const {
  for (const auto& row : power)
    if (row.n2 == n2 && row.mode == mode) return &row;
  return nullptr;
}

double ReplicationReport::mean_power(std::size_t n2, PredictionMode mode) const {
  const auto* row = power_row(n2, mode);
  return row ? row->mean : std::numeric_limits<double>::quiet_NaN();
}

ReplicationReport run_replication_study(const StudyConfig& cfg) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const TimeGrid grid = TimeGrid::uniform(cfg.scenario.landmark, cfg.grid_points);

  std::vector<ReplicationResult> results(cfg.reps);
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
    try {
      results[r] = replicate(cfg, r, grid);
    } catch (const std::exception& e) {
      results[r].error = e.what();
    }
  });

  ReplicationReport rep;
  rep.scenario = cfg.scenario.label;
  rep.n = cfg.n;
  rep.reps = cfg.reps;
  std::vector<const ReplicationResult*> ok;
  for (std::size_t r = 0; r < cfg.reps; ++r) {
    if (results[r].error)
      rep.failures.push_back({r, *results[r].error});
    else
      ok.push_back(&results[r]);
  }
  rep.succeeded = ok.size();
  if (ok.empty()) throw NumericalError("every replication failed: " + rep.failures.front().message);
  const double m = static_cast<double>(ok.size());

  const auto truth = cfg.scenario.true_state().flatten();
  for (std::size_t k = 0; k < kParameterCount; ++k) {
    CoefficientRow row;
    row.name = parameter_names()[k];
    row.truth = truth[k];
    for (const auto* res : ok) {
      const auto& p = res->summary.parameters[k];
      row.bias += p.mean - truth[k];
      row.mstd += p.sd;
      row.coverage += p.hpd_lower <= truth[k] && truth[k] <= p.hpd_upper;
      row.inclusion += p.inclusion;
      if (!(p.rhat <= row.max_rhat)) row.max_rhat = p.rhat;
    }
    // Sum first, divide once: a proportion of m out of m must be exactly 1.
    row.bias /= m;
    row.mstd /= m;
    row.coverage /= m;
    row.inclusion /= m;
    rep.coefficients.push_back(row);
  }

  auto model_rows = [&](ModelFamily family, std::size_t count, std::size_t true_index,
                        auto probs_of, auto top_of) {
    for (std::size_t i = 0; i < count; ++i) {
      ModelProbabilityRow row;
      row.family = family;
      row.index = i;
      row.is_true = i == true_index;
      row.min = std::numeric_limits<double>::infinity();
      row.max = -row.min;
      for (const auto* res : ok) {
        const double p = probs_of(res->summary)[i];
        row.mean += p;
        row.min = std::min(row.min, p);
        row.max = std::max(row.max, p);
        row.top_count += top_of(res->summary) == i;
      }
      row.mean /= m;
      rep.model_probs.push_back(row);
    }
  };
  model_rows(
      ModelFamily::response, kResponseModels, cfg.scenario.truth.response_id(),
      [](const PosteriorSummary& s) { return s.response_probs; },
      [](const PosteriorSummary& s) { return s.top_response(); });
  model_rows(
      ModelFamily::survival, kSurvivalModels, cfg.scenario.truth.survival_id(),
      [](const PosteriorSummary& s) { return s.survival_probs; },
      [](const PosteriorSummary& s) { return s.top_survival(); });

  if (cfg.compute_curves) {
    const Dataset population = generate_dataset(
        cfg.scenario, cfg.truth_population + cfg.truth_population % 2, derive_seed(cfg.seed, {6}));
    const auto reference = true_curves(cfg.scenario.true_state(), population, grid);
    for (std::size_t t = 0; t < grid.size(); ++t) {
      for (Curve c : kCurves) {
        CurveRow row;
        row.time = grid.times()[t];
        row.curve = c;
        row.truth = reference.curve(c)[t].mean;
        std::size_t counted = 0;
        for (const auto* res : ok) {
          const auto& b = res->curves.curve(c)[t];
          if (std::isnan(b.mean)) continue;
          ++counted;
          row.mean += b.mean;
          row.median += b.median;
          row.lower += b.lower;
          row.upper += b.upper;
        }
        const double denom = counted ? static_cast<double>(counted)
                                     : std::numeric_limits<double>::quiet_NaN();
        row.mean /= denom;
        row.median /= denom;
        row.lower /= denom;
        row.upper /= denom;
        rep.curves.push_back(row);
      }
    }
  }

  for (const auto* res : ok)
    rep.power_cells.insert(rep.power_cells.end(), res->power.begin(), res->power.end());
  for (std::size_t n2 : cfg.n2_list) {
    for (PredictionMode mode : cfg.modes) {
      PowerRow row;
      row.n2 = n2;
      row.mode = mode;
      row.min = std::numeric_limits<double>::infinity();
      row.max = -row.min;
      std::vector<double> pw, rp;
      for (const auto& cell : rep.power_cells) {
        if (cell.n2 != n2 || cell.mode != mode) continue;
        pw.push_back(cell.power);
        rp.push_back(cell.realized_p);
        row.min = std::min(row.min, cell.power);
        row.max = std::max(row.max, cell.power);
      }
      for (std::size_t i = 0; i < pw.size(); ++i) {
        row.mean += pw[i];
        row.realized_rate += rp[i] < cfg.alpha;
      }
      row.mean /= static_cast<double>(pw.size());
      row.realized_rate /= static_cast<double>(pw.size());
      row.evaluation = evaluate_predictions(pw, rp, cfg.alpha);
      rep.power.push_back(row);
    }
  }

  rep.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rep;
}

ReplicationReport run_power_study(StudyConfig config, std::vector<std::size_t> n2_list,
                                  std::vector<PredictionMode> modes) {
  config.compute_curves = false;
  config.n2_list = std::move(n2_list);
  config.modes = std::move(modes);
  return run_replication_study(config);
}

void write_report(const ReplicationReport& rep, double alpha, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
  using io::format_double;

  std::string coef = "parameter,truth,bias,mstd,cp,inclusion,max_rhat,replications\n";
  for (const auto& r : rep.coefficients)
    coef += r.name + ',' + format_double(r.truth) + ',' + format_double(r.bias) + ',' +
            format_double(r.mstd) + ',' + format_double(r.coverage) + ',' +
            format_double(r.inclusion) + ',' + format_double(r.max_rhat) + ',' +
            std::to_string(rep.succeeded) + '\n';
  io::write_file(dir / "coef_summary.csv", coef);

  std::string models = "family,model,indicators,true_model,mean,min,max,top_count\n";
  for (const auto& r : rep.model_probs) {
    std::string ind;
    for (auto b : family_indicators(r.family, r.index)) ind += static_cast<char>('0' + b);
    models += std::string(r.family == ModelFamily::response ? "response" : "survival") + ',' +
              model_label(r.family, r.index) + ',' + ind + ',' + (r.is_true ? "1" : "0") + ',' +
              format_double(r.mean) + ',' + format_double(r.min) + ',' + format_double(r.max) +
              ',' + std::to_string(r.top_count) + '\n';
  }
  io::write_file(dir / "model_probs.csv", models);

  const std::string curve_header = "time,curve,truth,mean,median,q2.5,q97.5\n";
  std::string lrr = curve_header, medprop = curve_header;
  for (const auto& r : rep.curves) {
    const std::string line = format_double(r.time) + ',' + curve_name(r.curve) + ',' +
                             format_double(r.truth) + ',' + format_double(r.mean) + ',' +
                             format_double(r.median) + ',' + format_double(r.lower) + ',' +
                             format_double(r.upper) + '\n';
    (r.curve == Curve::medprop ? medprop : lrr) += line;
  }
  io::write_file(dir / "lrr_curves.csv", lrr);
  io::write_file(dir / "medprop_curves.csv", medprop);

  std::string power = "n_train,n2,mode,alpha,mean_power,min_power,max_power,realized_rate\n";
  std::string eval = "n_train,n2,mode,replications,significant,spearman,auc\n";
  for (const auto& r : rep.power) {
    const std::string key =
        std::to_string(rep.n) + ',' + std::to_string(r.n2) + ',' + mode_name(r.mode) + ',';
    power += key + format_double(alpha) + ',' + format_double(r.mean) + ',' +
             format_double(r.min) + ',' + format_double(r.max) + ',' +
             format_double(r.realized_rate) + '\n';
    const auto& e = r.evaluation;
    eval += key + std::to_string(e.pairs) + ',' + std::to_string(e.significant) + ',' +
            (e.spearman ? format_double(*e.spearman) : "NA") + ',' +
            (e.auc ? format_double(*e.auc) : "NA") + '\n';
  }
  io::write_file(dir / "power.csv", power);
  io::write_file(dir / "prediction_eval.csv", eval);

  std::string cells = "replication,n2,mode,power,realized_p\n";
  for (const auto& c : rep.power_cells)
    cells += std::to_string(c.replication) + ',' + std::to_string(c.n2) + ',' +
             mode_name(c.mode) + ',' + format_double(c.power) + ',' +
             format_double(c.realized_p) + '\n';
  io::write_file(dir / "power_replicates.csv", cells);

  std::string fails = "replication,message\n";
  for (const auto& f : rep.failures) {
    std::string msg = f.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    fails += std::to_string(f.replication) + ',' + msg + '\n';
  }
  io::write_file(dir / "failures.csv", fails);
}

}  // namespace medbma
