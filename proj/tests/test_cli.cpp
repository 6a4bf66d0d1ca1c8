#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "medbma/cli.hpp"
#include "medbma/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = medbma::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("medbma_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read(const fs::path& p) { return medbma::io::read_file(p); }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> v;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

// Small but complete pipeline settings shared by the fit runs below.
const std::vector<std::string> kQuickFit = {"--chains", "2",  "--iterations",  "600",
                                            "--burn-in", "200", "--anneal-evals", "4000"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("missing input file exits 2 and names the path") {
  const auto dir = scratch("missing");
  const auto r = invoke({"fit", "--data", "/nonexistent/data.csv", "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("/nonexistent/data.csv") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"fit", "--bogus"}).code == 2);
  CHECK(invoke({"simulate", "--scenario", "VII", "--out", scratch("badsc").string()}).code == 2);
  CHECK(invoke({"calibrate-priors", "--out", scratch("nodata").string()}).code == 2);
  CHECK(invoke({"--version"}).code == 0);
  const auto r = invoke({"fit", "--config", "/nonexistent/manifest.txt"});
  CHECK(r.code == 2);
  CHECK(r.err.find("/nonexistent/manifest.txt") != std::string::npos);
}

TEST_CASE("equal priors give uniform model tables") {
  const auto dir = scratch("equal");
  REQUIRE(invoke({"calibrate-priors", "--equal-priors", "--out", dir.string()}).code == 0);
  const auto rows = lines(read(dir / "prior_calibration.csv"));
  REQUIRE(rows.size() == 1 + 5 + 18);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double prior = std::stod(rows[i].substr(rows[i].rfind(',') + 1));
    CHECK(prior == doctest::Approx(i <= 5 ? 0.2 : 1.0 / 18.0).epsilon(1e-3));
  }
}

TEST_CASE("simulate, fit, riskratio and power end to end, deterministic on rerun") {
  const auto dir = scratch("pipeline");
  REQUIRE(invoke({"simulate", "--scenario", "I", "--n", "200", "--seed", "3", "--dataset-only",
                  "--out", (dir / "sim").string()})
              .code == 0);
  const auto data = dir / "sim" / "dataset.csv";
  REQUIRE(fs::exists(data));
  CHECK(lines(read(data)).size() == 201);

  // Test frame: arms and covariates of the training data.
  std::string frame = "arm,covariate\n";
  for (std::size_t i = 1; const auto& l : lines(read(data))) {
    if (i++ == 1) continue;
    frame += l.substr(0, l.find(',', l.find(',') + 1)) + '\n';
  }
  medbma::io::write_file(dir / "frame.csv", frame);

  auto pipeline = [&](const fs::path& out, const std::string& threads) {
    auto f = invoke(cat({"fit", "--data", data.string(), "--out", (out / "fit").string(),
                         "--seed", "11", "--threads", threads},
                        kQuickFit));
    REQUIRE(f.code == 0);
    REQUIRE(invoke({"riskratio", "--draws", (out / "fit" / "draws.csv").string(), "--data",
                    data.string(), "--out", (out / "rr").string(), "--points", "8", "--stride",
                    "4", "--threads", threads})
                .code == 0);
    REQUIRE(invoke({"power", "--draws", (out / "fit" / "draws.csv").string(), "--test-frame",
                    (dir / "frame.csv").string(), "--out", (out / "pw").string(), "--stride", "8",
                    "--threads", threads})
                .code == 0);
    REQUIRE(invoke({"power", "--draws", (out / "fit" / "draws.csv").string(), "--test-frame",
                    (dir / "frame.csv").string(), "--out", (out / "pwi").string(), "--mode",
                    "interim_completion", "--interim-data", data.string(), "--stride", "8",
                    "--threads", threads})
                .code == 0);
  };
  pipeline(dir / "a", "1");
  pipeline(dir / "b", "2");

  for (const char* f : {"fit/draws.csv", "fit/coef_summary.csv", "fit/model_probs.csv",
                        "fit/prior_calibration.csv", "fit/psi.csv", "rr/lrr_curves.csv",
                        "rr/medprop_curves.csv", "pw/power.csv", "pw/pvalues.csv",
                        "pwi/power.csv"}) {
    INFO(f);
    REQUIRE(fs::exists(dir / "a" / f));
    CHECK(read(dir / "a" / f) == read(dir / "b" / f));
  }
  CHECK(lines(read(dir / "a" / "fit" / "draws.csv")).size() == 1 + 2 * 400);
  CHECK(lines(read(dir / "a" / "rr" / "lrr_curves.csv")).size() == 1 + 8 * 3);
  CHECK(lines(read(dir / "a" / "fit" / "coef_summary.csv")).front() ==
        "parameter,mean,sd,hpd_lower,hpd_upper,inclusion,rhat");

  // Missing interim data is a usage error.
  CHECK(invoke({"power", "--draws", (dir / "a" / "fit" / "draws.csv").string(), "--test-frame",
                (dir / "frame.csv").string(), "--out", (dir / "c").string(), "--mode",
                "interim_completion"})
            .code == 2);
}

TEST_CASE("manifest reruns the command and flags override it") {
  const auto dir = scratch("manifest");
  REQUIRE(invoke({"simulate", "--scenario", "II", "--n", "100", "--seed", "8", "--dataset-only",
                  "--out", (dir / "sim").string()})
              .code == 0);
  const auto data = (dir / "sim" / "dataset.csv").string();
  REQUIRE(invoke(cat({"fit", "--data", data, "--out", (dir / "one").string(), "--seed", "4"},
                     kQuickFit))
              .code == 0);
  const auto manifest = dir / "one" / "manifest.txt";
  const auto text = read(manifest);
  CHECK(text.rfind("# medbma", 0) == 0);
  CHECK(text.find("iterations") != std::string::npos);

  // Same settings from the manifest, redirected output.
  REQUIRE(invoke({"fit", "--config", manifest.string(), "--out", (dir / "two").string()}).code ==
          0);
  CHECK(read(dir / "one" / "draws.csv") == read(dir / "two" / "draws.csv"));

  // A flag on the command line wins over the file.
  REQUIRE(invoke({"fit", "--config", manifest.string(), "--out", (dir / "three").string(),
                  "--seed", "5"})
              .code == 0);
  CHECK(read(dir / "one" / "draws.csv") != read(dir / "three" / "draws.csv"));
  CHECK(read(dir / "three" / "manifest.txt").find("seed=5") != std::string::npos);
}

TEST_CASE("simulate writes a report and manifest") {
  const auto dir = scratch("report");
  const auto r = invoke({"simulate", "--scenario", "IV", "--n", "100", "--reps", "2", "--seed",
                         "2", "--iterations", "300", "--burn-in", "100", "--anneal-evals", "2000",
                         "--grid-points", "5", "--truth-population", "5000", "--n2", "100",
                         "--modes", "future_study", "--power-stride", "10", "--out",
                         dir.string()});
  REQUIRE(r.code == 0);
  for (const char* f : {"coef_summary.csv", "model_probs.csv", "lrr_curves.csv", "power.csv",
                        "prediction_eval.csv", "manifest.txt"})
    CHECK(fs::exists(dir / f));
}
