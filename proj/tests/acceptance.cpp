// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
// Usage: acceptance [criterion numbers...]   (default: all ten)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "medbma/cli.hpp"
#include "medbma/io.hpp"
#include "medbma/likelihood.hpp"
#include "medbma/model_space.hpp"
#include "medbma/prior_calibration.hpp"
#include "medbma/sampler.hpp"
#include "medbma/simulation.hpp"

using namespace medbma;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double x, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string sci(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

unsigned threads() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string bits(const auto& a) {
  std::string s;
  for (auto b : a) s += static_cast<char>('0' + b);
  return s;
}

// 1 ------------------------------------------------------------------------

Verdict model_space_check() {
  Verdict v;
  const std::vector<std::string> r{"000", "100", "010", "110", "111"};
  const std::vector<std::string> s{"000000", "100000", "010000", "001000", "110000", "101000",
                                   "011000", "110100", "101010", "011001", "111000", "111100",
                                   "111010", "111001", "111110", "111101", "111011", "111111"};
  const auto& rm = enumerate_response_models();
  const auto& sm = enumerate_survival_models();
  v.require(rm.size() == 5, "response count " + std::to_string(rm.size()));
  v.require(sm.size() == 18, "survival count " + std::to_string(sm.size()));
  for (std::size_t i = 0; i < std::min(rm.size(), r.size()); ++i)
    v.require(bits(rm[i].z) == r[i], "R" + std::to_string(i + 1) + " row");
  for (std::size_t i = 0; i < std::min(sm.size(), s.size()); ++i)
    v.require(bits(sm[i].w) == s[i], "S" + std::to_string(i + 1) + " row");

  std::size_t valid_r = 0, valid_s = 0;
  for (unsigned m = 0; m < 8; ++m) {
    const auto z = ResponseIndicators::from_mask(m).z;
    const bool ok = z[0] * z[1] >= z[2];
    valid_r += ok;
    v.require(ResponseIndicators::from_mask(m).satisfies_hierarchy() == ok,
              "response mask " + std::to_string(m));
  }
  for (unsigned m = 0; m < 64; ++m) {
    const auto w = SurvivalIndicators::from_mask(m).w;
    const bool ok = w[0] * w[1] >= w[3] && w[0] * w[2] >= w[4] && w[1] * w[2] >= w[5];
    valid_s += ok;
    v.require(SurvivalIndicators::from_mask(m).satisfies_hierarchy() == ok,
              "survival mask " + std::to_string(m));
  }
  v.require(valid_r == 5 && valid_s == 18, "brute-force scan count");
  v.note("5 + 18 models, 72 masks scanned");
  return v;
}

// 2 ------------------------------------------------------------------------

Verdict calibration_check() {
  Verdict v;
  for (auto family : {ModelFamily::response, ModelFamily::survival}) {
    const auto name = std::string(family == ModelFamily::response ? "response" : "survival");
    const std::vector<double> targets(family_size(family), 1.0);
    const auto res = calibrate_psi(targets, family);
    v.require(res.residual < 1e-6, name + " residual " + std::to_string(res.residual));
    double worst = 0.0;
    for (double p : res.psi) worst = std::max(worst, std::abs(p - 0.5));
    v.require(worst < 1e-3, name + " max |psi - 0.5| " + std::to_string(worst));
    // Enumeration: psi = 1/2 weights every valid configuration equally.
    const std::vector<double> half(family_terms(family), 0.5);
    for (double p : model_prior_probs(half, family).probabilities)
      v.require(std::abs(p - 1.0 / static_cast<double>(family_size(family))) < 1e-15,
                name + " uniform table");
    v.note(name + " residual " + sci(res.residual));
  }
  return v;
}

// 3 ------------------------------------------------------------------------

Dataset noisy_dataset(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> x(-2.0, 4.0), t(0.05, 1.5), u(0.0, 1.0);
  std::vector<SubjectRecord> r(n);
  for (std::size_t i = 0; i < n; ++i)
    r[i] = {static_cast<int>(i % 2), x(rng), u(rng) < 0.5 ? 1 : 0, t(rng), u(rng) < 0.7 ? 1 : 0};
  return Dataset(std::move(r));
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

Verdict likelihood_check() {
  Verdict v;
  std::mt19937_64 rng(2718);
  std::normal_distribution<double> coef(0.0, 0.5);
  std::uniform_real_distribution<double> pos(0.5, 2.5);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto data = noisy_dataset(rng, 40);
    const auto& z = enumerate_response_models()[4];
    const auto& w = enumerate_survival_models()[17];
    BetaVector beta;
    for (auto& b : beta) b = coef(rng);
    GammaVector gamma;
    for (auto& g : gamma) g = coef(rng);
    const double nu = pos(rng), lambda = pos(rng);

    const auto gr = response_gradient(data, beta, z);
    for (std::size_t j = 0; j < kBetaSize; ++j) {
      const double h = 1e-5;
      auto bp = beta, bm = beta;
      bp[j] += h;
      bm[j] -= h;
      const double fd = (response_loglik(data, bp, z) - response_loglik(data, bm, z)) / (2 * h);
      worst = std::max(worst, rel_err(gr[j], fd));
    }
    const auto gs = survival_gradient(data, gamma, nu, lambda, w);
    const double h = 1e-6;
    for (std::size_t j = 0; j < kGammaSize; ++j) {
      auto gp = gamma, gm = gamma;
      gp[j] += h;
      gm[j] -= h;
      const double fd = (survival_loglik(data, gp, nu, lambda, w) -
                         survival_loglik(data, gm, nu, lambda, w)) / (2 * h);
      worst = std::max(worst, rel_err(gs.gamma[j], fd));
    }
    const double fd_nu = (survival_loglik(data, gamma, nu + h, lambda, w) -
                          survival_loglik(data, gamma, nu - h, lambda, w)) / (2 * h);
    const double fd_lambda = (survival_loglik(data, gamma, nu, lambda + h, w) -
                              survival_loglik(data, gamma, nu, lambda - h, w)) / (2 * h);
    worst = std::max({worst, rel_err(gs.shape, fd_nu), rel_err(gs.rate, fd_lambda)});
  }
  v.require(worst < 1e-5, "max gradient rel. err " + std::to_string(worst));

  // Closed-form Weibull survival fixtures.
  const SurvivalRow zero{};
  const GammaVector g0{};
  const SurvivalRow row{1, 1, 0.5, 1, 0.5, 0.5};
  const GammaVector g{-0.84, 0.3, 1.0, 0.2, -0.1, 0.05};
  const double eta = -0.84 + 0.3 + 0.5 + 0.2 - 0.05 + 0.025;
  const std::vector<std::pair<double, double>> fixtures{
      {survival_probability(1.0, zero, g0, 1.0, 1.0), 0.36787944117144233},
      {survival_probability(1.2, zero, g0, 2.0, 1.0), 0.23692775868212176},
      {survival_probability(std::sqrt(std::log(2.0)), zero, g0, 2.0, 1.0), 0.5},
      {survival_probability(1.2, row, g, 2.0, 1.0), std::exp(-1.44 * std::exp(eta))},
      {survival_probability(0.0, row, g, 2.0, 1.0), 1.0}};
  double fixture_err = 0.0;
  for (const auto& [got, want] : fixtures) fixture_err = std::max(fixture_err, std::abs(got - want));
  v.require(fixture_err < 1e-12, "survival fixture err " + std::to_string(fixture_err));
  v.note("max grad rel. err " + sci(worst) + ", fixture err " + sci(fixture_err));
  return v;
}

// 4 ------------------------------------------------------------------------

Dataset toy_data() {
  std::vector<SubjectRecord> r;
  const int y[20] = {1, 1, 0, 1, 0, 1, 1, 1, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0};
  for (int i = 0; i < 20; ++i) r.push_back({i < 10 ? 1 : 0, 0.0, y[i], 0.2 + 0.05 * i, i % 3 != 0});
  return Dataset(std::move(r));
}

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// P(R2 | data) for the intercept-only vs intercept + arm logistic pair,
// both marginal likelihoods by grid quadrature.
double quadrature_p_r2(const Dataset& d, double sd, double psi) {
  const double h = 0.01, lo = -8.0;
  const int steps = 1601;
  auto ll = [&](double b0, double b1) {
    double s = 0.0;
    for (const auto& r : d) {
      const double e = b0 + b1 * r.arm;
      s += r.response * e - std::log1p(std::exp(e));
    }
    return s;
  };
  auto lnorm = [&](double b) {
    return -0.5 * b * b / (sd * sd) - std::log(sd) - 0.5 * std::log(2 * M_PI);
  };
  std::vector<double> m1, m2;
  for (int i = 0; i < steps; ++i) {
    const double b0 = lo + h * i;
    m1.push_back(ll(b0, 0.0) + lnorm(b0) + std::log(h));
    for (int j = 0; j < steps; ++j)
      m2.push_back(ll(b0, lo + h * j) + lnorm(b0) + lnorm(lo + h * j) + 2 * std::log(h));
  }
  const double a = std::log(1 - psi) + log_sum_exp(m1);
  const double b = std::log(psi) + log_sum_exp(m2);
  return 1.0 / (1.0 + std::exp(a - b));
}

Verdict toy_sampler_check() {
  Verdict v;
  const auto data = toy_data();
  PriorSpec prior;
  prior.coef_sd = 2.0;
  prior.psi_z[0] = 0.3;
  const double truth = quadrature_p_r2(data, prior.coef_sd, prior.psi_z[0]);
  SamplerConfig c;
  c.chains = 1;
  c.iterations = 51000;
  c.burn_in = 1000;
  c.seed = 4;
  c.initial_config = ModelConfiguration::null();
  c.frozen.fill(true);
  c.frozen[0] = false;
  const auto s = summarize_posterior(run_mcmc(data, prior, c));
  const double got = s.response_probs[1];
  v.require(std::abs(got - truth) < 0.03, "outside 0.03");
  v.note("P(R2) sampler " + fmt(got, 4) + " vs quadrature " + fmt(truth, 4) + " over 50k draws");
  return v;
}

// 5 and 6 share the Scenario I study -----------------------------------------

StudyConfig recovery_config(const std::string& label) {
  StudyConfig cfg;
  cfg.scenario = make_scenario(label);
  cfg.n = 1000;
  cfg.reps = 20;
  cfg.seed = 1;
  cfg.threads = threads();
  cfg.sampler.iterations = 10000;
  cfg.sampler.burn_in = 5000;
  cfg.grid_points = 100;
  cfg.curve_stride = 5;
  return cfg;
}

const ReplicationReport& scenario_report(const std::string& label) {
  static std::map<std::string, ReplicationReport> cache;
  auto it = cache.find(label);
  if (it == cache.end()) it = cache.emplace(label, run_replication_study(recovery_config(label))).first;
  return it->second;
}

Verdict recovery_check() {
  Verdict v;
  const auto& rep = scenario_report("I");
  v.require(rep.succeeded == 20, std::to_string(rep.failures.size()) + " failed replications");
  const double r5 = rep.model(ModelFamily::response, 4).mean;
  v.require(r5 > 0.95, "R5 mean " + fmt(r5));
  std::size_t top = 0;
  for (std::size_t i = 1; i < kSurvivalModels; ++i)
    if (rep.model(ModelFamily::survival, i).mean > rep.model(ModelFamily::survival, top).mean)
      top = i;
  v.require(top == 6, "top survival model " + model_label(ModelFamily::survival, top));
  v.note("R5 " + fmt(r5) + ", S7 " + fmt(rep.model(ModelFamily::survival, 6).mean));

  double worst_bias = 0.0, min_cp = 1.0;
  for (std::size_t k : {0u, 2u, 5u, 6u}) {
    const auto& c = rep.coefficients[k];
    worst_bias = std::max(worst_bias, std::abs(c.bias));
    v.require(std::abs(c.bias) < 0.1, c.name + " bias " + fmt(c.bias));
  }
  for (const auto& c : rep.coefficients) {
    min_cp = std::min(min_cp, c.coverage);
    v.require(c.coverage >= 0.80 && c.coverage <= 1.0, c.name + " CP " + fmt(c.coverage, 2));
  }
  v.note("max |bias| " + fmt(worst_bias) + ", min CP " + fmt(min_cp, 2));
  return v;
}

Verdict curves_check() {
  Verdict v;
  const auto& one = scenario_report("I");
  double worst_direct = 0.0, lo = INFINITY, hi = -INFINITY;
  std::size_t nan_medians = 0;
  for (const auto& r : one.curves) {
    if (r.curve == Curve::direct) worst_direct = std::max(worst_direct, std::abs(r.mean));
    if (r.curve == Curve::medprop) {
      if (std::isnan(r.median)) {
        ++nan_medians;
        continue;
      }
      lo = std::min(lo, r.median);
      hi = std::max(hi, r.median);
    }
  }
  v.require(!one.curves.empty(), "no scenario I curves");
  v.require(worst_direct <= 0.05, "I max |lRR_d| " + fmt(worst_direct));
  v.require(lo >= 0.9 && hi <= 1.1, "I Med% median range [" + fmt(lo) + ", " + fmt(hi) + "]");
  v.require(nan_medians == 0, std::to_string(nan_medians) + " undefined Med% medians");
  v.note("I: max |lRR_d| " + fmt(worst_direct) + ", Med% median in [" + fmt(lo) + ", " +
         fmt(hi) + "]");

  const auto& four = scenario_report("IV");
  double worst = 0.0;
  for (const auto& r : four.curves)
    if (r.curve != Curve::medprop) worst = std::max(worst, std::abs(r.mean));
  v.require(!four.curves.empty(), "no scenario IV curves");
  v.require(worst <= 0.05, "IV max |lRR| " + fmt(worst));
  v.note("IV: max |lRR| over three curves " + fmt(worst));
  return v;
}

// 7 ------------------------------------------------------------------------

Verdict censoring_check() {
  Verdict v;
  const std::map<std::string, double> reference{
      {"I", 0.3114}, {"II", 0.2355}, {"III", 0.2666}, {"IV", 0.2061}};
  for (const auto& [label, target] : reference) {
    const auto d = generate_dataset(make_scenario(label), 100000, 7);
    double censored = 0.0;
    for (const auto& r : d) censored += r.event == 0;
    censored /= 1e5;
    v.require(std::abs(censored - target) <= 0.01,
              label + " " + fmt(censored, 4) + " vs " + fmt(target, 4));
    v.note(label + " " + fmt(censored, 4));
  }
  return v;
}

// 8 ------------------------------------------------------------------------

StudyConfig power_config(const std::string& label, std::size_t n, std::size_t reps) {
  StudyConfig cfg;
  cfg.scenario = make_scenario(label);
  cfg.n = n;
  cfg.reps = reps;
  cfg.seed = 2;
  cfg.threads = threads();
  cfg.sampler.iterations = 10000;
  cfg.sampler.burn_in = 5000;
  cfg.power_draw_stride = 5;
  return cfg;
}

Verdict power_ordering_check() {
  Verdict v;
  const auto fut = PredictionMode::future_study;
  const auto itm = PredictionMode::interim_completion;
  for (const auto& label : scenario_labels()) {
    const auto rep = run_power_study(power_config(label, 500, 20), {100, 500}, {fut, itm});
    v.require(rep.succeeded == 20, label + ": " + std::to_string(rep.failures.size()) + " failed");
    const double f100 = rep.mean_power(100, fut), f500 = rep.mean_power(500, fut);
    const double i100 = rep.mean_power(100, itm), i500 = rep.mean_power(500, itm);
    v.note(label + " fut " + fmt(f100, 2) + "/" + fmt(f500, 2) + " int " + fmt(i100, 2) + "/" +
           fmt(i500, 2));
    if (label == "IV") {
      for (double p : {f100, f500, i100, i500}) v.require(p < 0.15, "IV power " + fmt(p));
    } else {
      v.require(f500 >= f100 - 0.05, label + " future power not increasing in n2");
      v.require(i500 >= i100 - 0.05, label + " interim power not increasing in n2");
    }
    v.require(i100 >= f100 - 0.05, label + " interim < future at n2=100");
    v.require(i500 >= f500 - 0.05, label + " interim < future at n2=500");
  }
  return v;
}

// 9 ------------------------------------------------------------------------

Verdict prediction_quality_check() {
  Verdict v;
  const auto fut = PredictionMode::future_study;
  const auto rep = run_power_study(power_config("III", 1000, 50), {200}, {fut});
  const auto* row = rep.power_row(200, fut);
  v.require(row != nullptr && row->evaluation.auc.has_value(), "AUC undefined");
  if (row && row->evaluation.auc) {
    const double auc = *row->evaluation.auc;
    v.require(auc > 0.70, "AUC " + fmt(auc));
    v.note("AUC " + fmt(auc) + ", mean power " + fmt(row->mean) + ", " +
           std::to_string(row->evaluation.significant) + "/" +
           std::to_string(row->evaluation.pairs) + " realized significant");
  }
  return v;
}

// 10 -----------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
  return files;
}

Verdict determinism_check() {
  Verdict v;
  const auto root = fs::temp_directory_path() / "medbma_acceptance_determinism";
  fs::remove_all(root);
  const std::string data = (root / "sim" / "dataset.csv").string();
  const std::string draws = (root / "fit" / "draws.csv").string();
  const std::string frame = (root / "frame.csv").string();
  const std::vector<std::vector<std::string>> commands{
      {"simulate", "--scenario", "III", "--n", "300", "--seed", "10", "--dataset-only", "--out",
       (root / "sim").string()},
      {"calibrate-priors", "--data", data, "--out", (root / "cal").string(), "--seed", "3"},
      {"fit", "--data", data, "--out", (root / "fit").string(), "--seed", "12", "--iterations",
       "2000", "--burn-in", "1000"},
      {"riskratio", "--draws", draws, "--data", data, "--out", (root / "rr").string(),
       "--points", "20", "--stride", "5"},
      {"power", "--draws", draws, "--test-frame", frame, "--out", (root / "pw").string(),
       "--mode", "interim_completion", "--interim-data", data, "--stride", "5", "--seed", "4"},
      {"simulate", "--scenario", "I", "--n", "200", "--reps", "2", "--seed", "6",
       "--iterations", "1000", "--burn-in", "500", "--grid-points", "10", "--truth-population",
       "10000", "--n2", "100", "--power-stride", "10", "--out", (root / "study").string()}};

  std::size_t compared = 0;
  for (const auto& cmd : commands) {
    std::ostringstream out, err;
    const int first = cli::run(cmd, out, err);
    if (first != 0) {
      v.require(false, cmd[0] + " exited " + std::to_string(first) + ": " + err.str());
      continue;
    }
    if (cmd[0] == "simulate" && cmd.back() == (root / "sim").string()) {
      // Future-study frame: arm and covariate columns of the simulated data.
      std::string text = "arm,covariate\n";
      std::istringstream in(io::read_file(data));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) text += line.substr(0, line.find(',', line.find(',') + 1)) + '\n';
      io::write_file(frame, text);
    }
    const fs::path dir = cmd[std::find(cmd.begin(), cmd.end(), "--out") - cmd.begin() + 1];
    const auto before = snapshot(dir);
    // Second run with the thread count changed where the command takes one.
    auto again = cmd;
    if (cmd[0] != "calibrate-priors" && !(cmd[0] == "simulate" && cmd[2] == "III")) {
      again.push_back("--threads");
      again.push_back("3");
    }
    fs::remove_all(dir);
    if (cli::run(again, out, err) != 0) {
      v.require(false, cmd[0] + " rerun failed: " + err.str());
      continue;
    }
    auto after = snapshot(dir);
    // The manifest records the thread count; everything else must match.
    for (auto& [name, text] : after) {
      if (name == "manifest.txt") continue;
      ++compared;
      v.require(before.count(name) && before.at(name) == text, cmd[0] + "/" + name + " differs");
    }
    v.require(before.size() == after.size(), cmd[0] + " file sets differ");
  }
  // A manifest re-run reproduces its artifact.
  const auto fit_dir = root / "fit";
  const auto reference = io::read_file(fit_dir / "draws.csv");
  std::ostringstream out, err;
  const int code = cli::run({"fit", "--config", (fit_dir / "manifest.txt").string(), "--out",
                             (root / "refit").string()},
                            out, err);
  v.require(code == 0 && io::read_file(root / "refit" / "draws.csv") == reference,
            "manifest re-run differs");
  v.note(std::to_string(compared) + " files byte-identical across reruns; manifest re-run ok");
  fs::remove_all(root);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"model space enumeration", model_space_check},
      {"prior calibration with equal targets", calibration_check},
      {"likelihood gradients and survival fixtures", likelihood_check},
      {"sampler on the two-model toy space", toy_sampler_check},
      {"scenario I recovery (n=1000, 20 reps)", recovery_check},
      {"mediation curves, scenarios I and IV", curves_check},
      {"censoring proportions at n=1e5", censoring_check},
      {"predictive power ordering", power_ordering_check},
      {"prediction quality, scenario III", prediction_quality_check},
      {"determinism of CLI reruns", determinism_check}};
  // Hard runtime limits in seconds; 0 means none stated for this machine.
  const double limits[] = {1, 10, 5, 120, 0, 0, 60, 1800, 2700, 0};

  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (limits[i] > 0 && secs > limits[i])
      v.require(false, "runtime " + fmt(secs, 1) + " s exceeds " + fmt(limits[i], 0) + " s");
    failures += !v.pass;
    std::printf("criterion %2d %s: %s (%s; %.1f s)\n", id, v.pass ? "PASS" : "FAIL",
                criteria[i].first.c_str(), v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
