#include "medbma/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <thread>

#include "medbma/data_model.hpp"
#include "medbma/errors.hpp"
#include "medbma/io.hpp"
#include "medbma/mediation_metrics.hpp"
#include "medbma/prediction.hpp"
#include "medbma/prior_calibration.hpp"
#include "medbma/sampler.hpp"
#include "medbma/simulation.hpp"

namespace medbma::cli {

namespace fs = std::filesystem;

namespace {

struct SamplerOptions {
  SamplerConfig config;
  void add(CLI::App* app) {
    app->add_option("--chains", config.chains, "Number of chains")->capture_default_str();
    app->add_option("--iterations", config.iterations, "Iterations per chain, burn-in included")
        ->capture_default_str();
    app->add_option("--burn-in", config.burn_in, "Discarded iterations per chain")
        ->capture_default_str();
    app->add_option("--thin", config.thin, "Keep every k-th iteration")->capture_default_str();
    app->add_option("--proposal-sd", config.proposal_sd_init, "Initial random-walk scale")
        ->capture_default_str();
    app->add_option("--adapt-window", config.adapt_window, "Iterations per adaptation batch")
        ->capture_default_str();
    app->add_option("--birth-sd", config.birth_proposal_sd, "Birth proposal sd")
        ->capture_default_str();
  }
};

struct PriorOptions {
  PriorSpec base;
  bool equal = false;
  std::string weighting = "reverse_rank";
  std::size_t anneal_evals = 100000;
  void add(CLI::App* app) {
    app->add_flag("--equal-priors", equal, "Equal prior model probabilities instead of AIC ranks");
    app->add_option("--aic-weighting", weighting, "reverse_rank or akaike_weights")
        ->check(CLI::IsMember({"reverse_rank", "akaike_weights"}))
        ->capture_default_str();
    app->add_option("--anneal-evals", anneal_evals, "Annealing objective evaluations")
        ->capture_default_str();
    app->add_option("--coef-sd", base.coef_sd, "Prior sd of regression coefficients")
        ->capture_default_str();
    app->add_option("--weibull-shape-hyper", base.weibull_shape_hyper,
                    "Gamma prior shape for nu and lambda")
        ->capture_default_str();
    app->add_option("--weibull-rate-hyper", base.weibull_rate_hyper,
                    "Gamma prior rate for nu and lambda")
        ->capture_default_str();
  }
  PriorCalibrationOptions options(std::uint64_t seed) const {
    PriorCalibrationOptions o;
    o.equal_weights = equal;
    o.weighting = weighting == "akaike_weights" ? AicWeighting::akaike_weights
                                                : AicWeighting::reverse_rank;
    o.annealing.evaluations = anneal_evals;
    o.annealing.seed = seed;
    return o;
  }
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_manifest(const CLI::App& app, const fs::path& dir) {
  std::string text = "# medbma ";
  text += kVersion;
  text += ' ';
  text += app.get_name();
  text += "\n# rerun with: medbma ";
  text += app.get_name();
  text += " --config manifest.txt\n";
  text += app.config_to_str(true, false);
  io::write_file(dir / "manifest.txt", text);
}

std::string format_calibration(const CalibratedPrior& cal) {
  using io::format_double;
  std::string out = "family,model,indicators,aic,target_weight,prior\n";
  auto rows = [&](ModelFamily family, const CalibrationResult& res, const auto& aics) {
    for (std::size_t i = 0; i < res.table.probabilities.size(); ++i) {
      std::string ind;
      for (auto b : family_indicators(family, i)) ind += static_cast<char>('0' + b);
      out += std::string(family == ModelFamily::response ? "response" : "survival") + ',' +
             res.table.labels[i] + ',' + ind + ',' +
             (std::isnan(aics[i]) ? std::string("NA") : format_double(aics[i])) + ',' +
             format_double(res.targets[i]) + ',' + format_double(res.table.probabilities[i]) +
             '\n';
    }
  };
  rows(ModelFamily::response, cal.response, cal.aics.response);
  rows(ModelFamily::survival, cal.survival, cal.aics.survival);
  return out;
}

std::string format_psi(const CalibratedPrior& cal) {
  using io::format_double;
  std::string out = "family,term,psi,residual\n";
  const char* rterms[] = {"A", "X", "AX"};
  const char* sterms[] = {"A", "Y", "X", "AY", "AX", "XY"};
  for (std::size_t j = 0; j < kResponseTerms; ++j)
    out += std::string("response,") + rterms[j] + ',' + format_double(cal.prior.psi_z[j]) + ',' +
           format_double(cal.response.residual) + '\n';
  for (std::size_t j = 0; j < kSurvivalTerms; ++j)
    out += std::string("survival,") + sterms[j] + ',' + format_double(cal.prior.psi_w[j]) + ',' +
           format_double(cal.survival.residual) + '\n';
  return out;
}

CovariatePolicy policy_from(bool impute) {
  CovariatePolicy p;
  if (impute) p.missing_rule = MissingCovariateRule::group_mean_impute;
  return p;
}

std::vector<ParameterState> strided(const PosteriorDraws& draws, std::size_t stride) {
  if (stride < 1) throw InputError("stride must be at least 1");
  std::vector<ParameterState> out;
  std::size_t k = 0;
  for (const auto& chain : draws.chains)
    for (const auto& s : chain)
      if (k++ % stride == 0) out.push_back(s);
  return out;
}

// CLI11 only reads config files attached to the top-level app, so a
// subcommand's --config is spliced in as ordinary flags ahead of the
// command-line arguments; with TakeLast the explicit flags then win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::vector<std::string> rest;
  std::vector<std::string> files;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      files.push_back(args[++i]);
    } else if (args[i].rfind("--config=", 0) == 0) {
      files.push_back(args[i].substr(9));
    } else {
      rest.push_back(args[i]);
    }
  }
  if (files.empty() || rest.empty()) return args;
  out.push_back(rest.front());
  for (const auto& file : files) {
    if (!fs::exists(file)) throw InputError("config file not found: " + file);
    for (const auto& item : CLI::ConfigINI().from_file(file)) {
      if (!item.parents.empty() || item.name == "++" || item.name == "--") continue;
      std::string value;
      for (std::size_t k = 0; k < item.inputs.size(); ++k)
        value += (k ? "," : "") + item.inputs[k];
      if (value.empty()) continue;
      out.push_back("--" + item.name + "=" + value);
    }
  }
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian model averaging for treatment effects mediated through response"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  unsigned default_threads = std::max(1u, std::thread::hardware_concurrency());

  // fit
  auto* fit = app.add_subcommand("fit", "Calibrate priors, run the sampler, summarize");
  fit->set_config("--config", "", "key = value configuration file");
  std::string fit_data, fit_out;
  bool fit_impute = false;
  std::uint64_t fit_seed = 1;
  unsigned fit_threads = default_threads;
  SamplerOptions fit_sampler;
  PriorOptions fit_prior;
  fit->add_option("--data", fit_data, "Input CSV (arm,covariate,response,time,event)")->required();
  fit->add_option("--out", fit_out, "Output directory")->required();
  fit->add_option("--seed", fit_seed, "Master seed")->capture_default_str();
  fit->add_option("--threads", fit_threads, "Worker threads")->capture_default_str();
  fit->add_flag("--impute-missing", fit_impute, "Impute missing covariates by group means");
  fit_sampler.add(fit);
  fit_prior.add(fit);

  // riskratio
  auto* rr = app.add_subcommand("riskratio", "Log risk ratio and mediation proportion curves");
  rr->set_config("--config", "", "key = value configuration file");
  std::string rr_draws, rr_data, rr_out, rr_grid;
  double rr_landmark = 1.2;
  std::size_t rr_points = 100, rr_stride = 1;
  bool rr_impute = false;
  unsigned rr_threads = default_threads;
  rr->add_option("--draws", rr_draws, "Draws file written by fit")->required();
  rr->add_option("--data", rr_data, "Data the draws were fitted to")->required();
  rr->add_option("--out", rr_out, "Output directory")->required();
  rr->add_option("--grid", rr_grid, "Comma separated time points (overrides --landmark)");
  rr->add_option("--landmark", rr_landmark, "Grid end point")->capture_default_str();
  rr->add_option("--points", rr_points, "Grid size")->capture_default_str();
  rr->add_option("--stride", rr_stride, "Use every k-th draw")->capture_default_str();
  rr->add_option("--threads", rr_threads, "Worker threads")->capture_default_str();
  rr->add_flag("--impute-missing", rr_impute, "Impute missing covariates by group means");

  // power
  auto* pw = app.add_subcommand("power", "Posterior predictive power of a log-rank test");
  pw->set_config("--config", "", "key = value configuration file");
  std::string pw_draws, pw_frame, pw_out, pw_mode = "future_study", pw_interim;
  double pw_alpha = 0.05, pw_landmark = 1.2;
  std::uint64_t pw_seed = 1;
  std::size_t pw_stride = 1;
  unsigned pw_threads = default_threads;
  pw->add_option("--draws", pw_draws, "Draws file written by fit")->required();
  pw->add_option("--test-frame", pw_frame, "CSV arm,covariate[,response]")->required();
  pw->add_option("--out", pw_out, "Output directory")->required();
  pw->add_option("--mode", pw_mode, "future_study or interim_completion")->capture_default_str();
  pw->add_option("--interim-data", pw_interim, "Observed data for interim_completion");
  pw->add_option("--alpha", pw_alpha, "Two-sided significance level")->capture_default_str();
  pw->add_option("--landmark", pw_landmark, "Administrative censoring time")
      ->capture_default_str();
  pw->add_option("--seed", pw_seed, "Master seed")->capture_default_str();
  pw->add_option("--stride", pw_stride, "Use every k-th draw")->capture_default_str();
  pw->add_option("--threads", pw_threads, "Worker threads")->capture_default_str();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Replication study for one scenario");
  sim->set_config("--config", "", "key = value configuration file");
  std::string sim_scenario, sim_out;
  std::size_t sim_n = 1000, sim_reps = 20;
  std::uint64_t sim_seed = 1;
  bool sim_full = false, sim_no_curves = false, sim_dataset_only = false;
  unsigned sim_threads = default_threads;
  StudyConfig study;
  std::vector<std::size_t> sim_n2;
  std::vector<std::string> sim_modes{"future_study"};
  SamplerOptions sim_sampler;
  PriorOptions sim_prior;
  sim->add_option("--scenario", sim_scenario, "I, II, III or IV")->required();
  sim->add_option("--out", sim_out, "Report directory")->required();
  sim->add_option("--n", sim_n, "Training sample size")->capture_default_str();
  sim->add_option("--reps", sim_reps, "Replications")->capture_default_str();
  sim->add_flag("--full-scale", sim_full, "100 replications");
  sim->add_option("--seed", sim_seed, "Master seed")->capture_default_str();
  sim->add_option("--threads", sim_threads, "Parallel replications")->capture_default_str();
  sim->add_option("--grid-points", study.grid_points, "Curve grid size")->capture_default_str();
  sim->add_option("--curve-stride", study.curve_stride, "Use every k-th draw for curves")
      ->capture_default_str();
  sim->add_option("--truth-population", study.truth_population, "Population for true curves")
      ->capture_default_str();
  sim->add_flag("--no-curves", sim_no_curves, "Skip mediation curves");
  sim->add_option("--n2", sim_n2, "Future study sizes for the power study")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  sim->add_option("--modes", sim_modes, "future_study and/or interim_completion")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)
      ->expected(1, 2)
      ->capture_default_str();
  sim->add_option("--power-stride", study.power_draw_stride, "Use every k-th draw for power")
      ->capture_default_str();
  sim->add_option("--alpha", study.alpha, "Significance level")->capture_default_str();
  sim->add_flag("--dataset-only", sim_dataset_only,
                "Write the first replication's dataset to <out>/dataset.csv and stop");
  sim_sampler.add(sim);
  sim_prior.add(sim);

  // calibrate-priors
  auto* cal = app.add_subcommand("calibrate-priors", "Indicator prior probabilities only");
  cal->set_config("--config", "", "key = value configuration file");
  std::string cal_data, cal_out;
  std::uint64_t cal_seed = 1;
  bool cal_impute = false;
  PriorOptions cal_prior;
  cal->add_option("--data", cal_data, "Input CSV; not needed with --equal-priors");
  cal->add_option("--out", cal_out, "Output directory")->required();
  cal->add_option("--seed", cal_seed, "Master seed")->capture_default_str();
  cal->add_flag("--impute-missing", cal_impute, "Impute missing covariates by group means");
  cal_prior.add(cal);

  std::vector<std::string> expanded;
  try {
    expanded = expand_config(args);
  } catch (const std::exception& e) {
    err << "medbma: error: " << e.what() << '\n';
    return 2;
  }
  std::vector<const char*> argv{"medbma"};
  for (const auto& a : expanded) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (fit->parsed()) {
      const Dataset data = load_dataset(fit_data, policy_from(fit_impute));
      data.require_both_arms();
      const DesignCache design(data);
      const auto calibrated = calibrate_prior(
          design, fit_prior.options(derive_seed(fit_seed, {3})), fit_prior.base);
      SamplerConfig sc = fit_sampler.config;
      sc.seed = derive_seed(fit_seed, {2});
      sc.threads = fit_threads;
      const auto draws = run_mcmc(design, calibrated.prior, sc);
      const auto summary = summarize_posterior(draws);
      const fs::path dir(fit_out);
      ensure_dir(dir);
      write_draws((dir / "draws.csv").string(), draws);
      io::write_file(dir / "coef_summary.csv", format_coefficient_table(summary));
      io::write_file(dir / "model_probs.csv",
                     format_model_table(summary, &calibrated.response.table.probabilities,
                                        &calibrated.survival.table.probabilities));
      io::write_file(dir / "prior_calibration.csv", format_calibration(calibrated));
      io::write_file(dir / "psi.csv", format_psi(calibrated));
      write_manifest(*fit, dir);
      out << "draws: " << draws.total() << '\n'
          << "top response model: " << model_label(ModelFamily::response, summary.top_response())
          << " (" << summary.response_probs[summary.top_response()] << ")\n"
          << "top survival model: " << model_label(ModelFamily::survival, summary.top_survival())
          << " (" << summary.survival_probs[summary.top_survival()] << ")\n";
    } else if (rr->parsed()) {
      const auto draws = load_draws(rr_draws);
      const Dataset data = load_dataset(rr_data, policy_from(rr_impute));
      const TimeGrid grid = rr_grid.empty() ? TimeGrid::uniform(rr_landmark, rr_points)
                                            : TimeGrid(io::parse_real_list(rr_grid));
      const auto subset = strided(draws, rr_stride);
      const auto curves = risk_ratio_curves(data, subset, grid, rr_threads);
      const fs::path dir(rr_out);
      ensure_dir(dir);
      io::write_file(dir / "lrr_curves.csv", format_lrr_csv(curves));
      io::write_file(dir / "medprop_curves.csv", format_medprop_csv(curves));
      write_manifest(*rr, dir);
      out << "curves over " << curves.draws << " draws at " << grid.size() << " times\n";
    } else if (pw->parsed()) {
      const auto draws = load_draws(pw_draws);
      PredictionRequest req;
      req.mode = parse_mode(pw_mode);
      req.frame = load_test_frame(pw_frame);
      req.alpha = pw_alpha;
      req.landmark = pw_landmark;
      req.seed = derive_seed(pw_seed, {4});
      req.threads = pw_threads;
      std::optional<Dataset> interim;
      if (req.mode == PredictionMode::interim_completion) {
        if (pw_interim.empty()) throw InputError("--interim-data is required for interim_completion");
        interim = load_dataset(pw_interim);
      }
      const auto subset = strided(draws, pw_stride);
      const auto result = predictive_power(subset, req, interim ? &*interim : nullptr);
      const fs::path dir(pw_out);
      ensure_dir(dir);
      io::write_file(dir / "power.csv", format_power_csv(result, req));
      io::write_file(dir / "pvalues.csv", format_pvalues_csv(result));
      write_manifest(*pw, dir);
      out << "power: " << result.power << " over " << result.draws_used << " draws\n";
    } else if (sim->parsed()) {
      study.scenario = make_scenario(sim_scenario);
      study.n = sim_n;
      study.reps = sim_full ? 100 : sim_reps;
      study.seed = sim_seed;
      study.threads = sim_threads;
      study.sampler = sim_sampler.config;
      study.calibration = sim_prior.options(0);
      study.prior = sim_prior.base;
      study.compute_curves = !sim_no_curves;
      study.n2_list = sim_n2;
      study.modes.clear();
      for (const auto& m : sim_modes) study.modes.push_back(parse_mode(m));
      const fs::path dir(sim_out);
      if (sim_dataset_only) {
        ensure_dir(dir);
        write_dataset(dir / "dataset.csv",
                      generate_dataset(study.scenario, study.n, derive_seed(study.seed, {1, 0})));
        write_manifest(*sim, dir);
        out << "dataset written to " << (dir / "dataset.csv").string() << '\n';
        return 0;
      }
      const auto report = run_replication_study(study);
      write_report(report, study.alpha, dir);
      write_manifest(*sim, dir);
      out << "scenario " << report.scenario << ": " << report.succeeded << '/' << report.reps
          << " replications in " << report.runtime_seconds << " s\n";
    } else if (cal->parsed()) {
      PriorCalibrationOptions opts = cal_prior.options(derive_seed(cal_seed, {3}));
      CalibratedPrior calibrated;
      if (cal_prior.equal && cal_data.empty()) {
        // No data needed: equal targets in both families.
        calibrated.response = calibrate_psi(std::vector<double>(kResponseModels, 1.0),
                                            ModelFamily::response, opts.annealing);
        calibrated.survival = calibrate_psi(std::vector<double>(kSurvivalModels, 1.0),
                                            ModelFamily::survival, opts.annealing);
        calibrated.aics.response.fill(std::nan(""));
        calibrated.aics.survival.fill(std::nan(""));
        calibrated.prior = cal_prior.base;
        std::copy(calibrated.response.psi.begin(), calibrated.response.psi.end(),
                  calibrated.prior.psi_z.begin());
        std::copy(calibrated.survival.psi.begin(), calibrated.survival.psi.end(),
                  calibrated.prior.psi_w.begin());
      } else {
        if (cal_data.empty()) throw InputError("--data is required unless --equal-priors is set");
        const Dataset data = load_dataset(cal_data, policy_from(cal_impute));
        calibrated = calibrate_prior(DesignCache(data), opts, cal_prior.base);
      }
      const fs::path dir(cal_out);
      ensure_dir(dir);
      io::write_file(dir / "prior_calibration.csv", format_calibration(calibrated));
      io::write_file(dir / "psi.csv", format_psi(calibrated));
      write_manifest(*cal, dir);
      out << "response residual " << calibrated.response.residual << ", survival residual "
          << calibrated.survival.residual << '\n';
    }
  } catch (const InputError& e) {
    err << "medbma: error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "medbma: numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "medbma: failure: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace medbma::cli
