#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "medbma/errors.hpp"
#include "medbma/prior_calibration.hpp"

using namespace medbma;

namespace {

// Brute force over all 2^d indicator vectors with the hierarchy checked here.
std::vector<double> brute_force_probs(const std::vector<double>& psi, ModelFamily family) {
  const std::size_t d = psi.size();
  std::vector<std::pair<unsigned, double>> valid;
  for (unsigned m = 0; m < (1u << d); ++m) {
    std::vector<int> v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = (m >> j) & 1u;
    bool ok = family == ModelFamily::response
                  ? v[0] * v[1] >= v[2]
                  : v[0] * v[1] >= v[3] && v[0] * v[2] >= v[4] && v[1] * v[2] >= v[5];
    if (!ok) continue;
    double p = 1.0;
    for (std::size_t j = 0; j < d; ++j) p *= v[j] ? psi[j] : 1.0 - psi[j];
    valid.emplace_back(m, p);
  }
  // reorder to table order through the indicator masks
  std::vector<double> out(valid.size());
  double total = 0.0;
  for (auto& [m, p] : valid) total += p;
  for (auto& [m, p] : valid) {
    std::size_t idx = family == ModelFamily::response
                          ? classify(ResponseIndicators::from_mask(m))
                          : classify(SurvivalIndicators::from_mask(m));
    out[idx] = p / total;
  }
  return out;
}

}  // namespace

TEST_CASE("psi of one half gives uniform model priors") {
  const auto r = model_prior_probs(std::vector<double>(3, 0.5), ModelFamily::response);
  for (double p : r.probabilities) CHECK(p == doctest::Approx(0.2).epsilon(1e-14));
  const auto s = model_prior_probs(std::vector<double>(6, 0.5), ModelFamily::survival);
  for (double p : s.probabilities) CHECK(p == doctest::Approx(1.0 / 18).epsilon(1e-14));
  CHECK(s.labels.front() == "S1");
  CHECK(s.labels.back() == "S18");
}

TEST_CASE("model prior probabilities match brute-force enumeration") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int k = 0; k < 10; ++k) {
    for (auto family : {ModelFamily::response, ModelFamily::survival}) {
      std::vector<double> psi(family_terms(family));
      for (auto& p : psi) p = u(rng);
      const auto t = model_prior_probs(psi, family);
      const auto oracle = brute_force_probs(psi, family);
      REQUIRE(t.probabilities.size() == oracle.size());
      double sum = 0.0;
      for (std::size_t i = 0; i < oracle.size(); ++i) {
        CHECK(t.probabilities[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
        sum += t.probabilities[i];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("equal targets recover psi of one half in both families") {
  for (auto family : {ModelFamily::response, ModelFamily::survival}) {
    const std::vector<double> targets(family_size(family), 1.0);
    const auto res = calibrate_psi(targets, family);
    CHECK(res.residual < 1e-6);
    for (double p : res.psi) CHECK(p == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(calibration_objective(res.psi, targets, family) == doctest::Approx(res.residual));
  }
}

TEST_CASE("reachable targets are matched") {
  const std::vector<double> truth{0.3, 0.7, 0.25, 0.8, 0.6, 0.4};
  const auto target = model_prior_probs(truth, ModelFamily::survival).probabilities;
  const auto res = calibrate_psi(target, ModelFamily::survival);
  CHECK(res.residual < 1e-4);
  for (std::size_t i = 0; i < target.size(); ++i)
    CHECK(res.table.probabilities[i] == doctest::Approx(target[i]).epsilon(1e-3));
}

TEST_CASE("calibration stays in the box and is deterministic") {
  // Strongly favours the full model: pushes psi to the upper bound.
  std::vector<double> target(5, 1.0);
  target[4] = 1000.0;
  AnnealingOptions opt;
  opt.seed = 99;
  opt.evaluations = 20000;
  const auto a = calibrate_psi(target, ModelFamily::response, opt);
  const auto b = calibrate_psi(target, ModelFamily::response, opt);
  CHECK(a.psi == b.psi);
  for (double p : a.psi) {
    CHECK(p >= 0.01);
    CHECK(p <= 0.99);
  }
  CHECK(a.table.probabilities[4] > 0.9);
}

TEST_CASE("invalid calibration inputs") {
  CHECK_THROWS_AS(calibrate_psi(std::vector<double>(4, 1.0), ModelFamily::response), InputError);
  CHECK_THROWS_AS(calibrate_psi(std::vector<double>{1, 1, 0, 1, 1}, ModelFamily::response),
                  InputError);
  CHECK_THROWS_AS(model_prior_probs(std::vector<double>{0.5, 1.0, 0.5}, ModelFamily::response),
                  InputError);
}

TEST_CASE("reverse AIC ranks with averaged ties") {
  CHECK(aic_rank_weights(std::vector<double>{10, 5, 7}) == std::vector<double>{1, 3, 2});
  CHECK(aic_rank_weights(std::vector<double>{1, 1, 3}) == std::vector<double>{2.5, 2.5, 1});
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(aic_rank_weights(std::vector<double>{inf, 2, 1}) == std::vector<double>{1, 2, 3});
  const auto w = aic_weights(std::vector<double>{100, 102}, AicWeighting::akaike_weights);
  CHECK(w[0] == 1.0);
  CHECK(w[1] == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("dataset-driven calibration favours low-AIC models") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> x(-2, 4), u(0, 1);
  std::vector<SubjectRecord> recs;
  for (int i = 0; i < 400; ++i) {
    const int a = i % 2;
    const double cov = x(rng);
    const int y = u(rng) < 1.0 / (1.0 + std::exp(-(1.0 - cov))) ? 1 : 0;
    const double t = std::sqrt(-std::log(u(rng)) / std::exp(cov));
    recs.push_back({a, cov, y, std::min(t, 1.2), t < 1.2 ? 1 : 0});
  }
  const DesignCache design{Dataset(recs)};
  PriorCalibrationOptions opt;
  opt.annealing.evaluations = 20000;
  const auto cal = calibrate_prior(design, opt);
  for (double a : cal.aics.response) CHECK(std::isfinite(a));
  for (double a : cal.aics.survival) CHECK(std::isfinite(a));
  const auto weights = aic_rank_weights(cal.aics.survival);
  const auto best = std::max_element(weights.begin(), weights.end()) - weights.begin();
  const auto worst = std::min_element(weights.begin(), weights.end()) - weights.begin();
  CHECK(cal.survival.table.probabilities[static_cast<std::size_t>(best)] >
        cal.survival.table.probabilities[static_cast<std::size_t>(worst)]);
  CHECK_NOTHROW(cal.prior.validate());

  opt.equal_weights = true;
  const auto flat = calibrate_prior(design, opt);
  for (double p : flat.response.table.probabilities) CHECK(p == doctest::Approx(0.2).epsilon(1e-5));
}
