#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "medbma/data_model.hpp"
#include "medbma/errors.hpp"
#include "medbma/io.hpp"

using namespace medbma;

namespace {

std::string error_of(std::string_view text, CovariatePolicy policy = {}) {
  try {
    parse_dataset(text, policy);
  } catch (const InputError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("parses a well formed file") {
  const auto d = parse_dataset(
      "arm,covariate,response,time,event\n"
      "0,1.5,1,0.7,1\n"
      "1,-2,0,1.2,0\n");
  REQUIRE(d.size() == 2);
  CHECK(d[0] == SubjectRecord{0, 1.5, 1, 0.7, 1});
  CHECK(d[1] == SubjectRecord{1, -2.0, 0, 1.2, 0});
  CHECK(d.has_both_arms());
}

TEST_CASE("CRLF line endings and blank lines are tolerated") {
  const auto d = parse_dataset(
      "arm,covariate,response,time,event\r\n\r\n0,0,0,1,1\r\n1,0,1,2,0\r\n\n");
  CHECK(d.size() == 2);
  CHECK(d[1].time == 2.0);
}

TEST_CASE("errors name the line and the field") {
  CHECK(error_of("arm,x,response,time,event\n0,1,1,1,1\n0,1,1,1,1\n").find("line 1") == 0);
  CHECK(error_of("arm,covariate,response,time,event\n0,1,2,1,1\n0,1,1,1,1\n") ==
        "line 2: field 'response' must be 0 or 1, got '2'");
  CHECK(error_of("arm,covariate,response,time,event\n0,1,1,1,1\n0,1,1,-1,1\n").find(
            "line 3: field 'time'") == 0);
  CHECK(error_of("arm,covariate,response,time,event\n0,1,1,1\n0,1,1,1,1\n") ==
        "line 2: expected 5 fields, got 4");
  CHECK(error_of("arm,covariate,response,time,event\n0,abc,1,1,1\n0,1,1,1,1\n").find(
            "'covariate' is not a number") != std::string::npos);
  CHECK(error_of("") == "empty file");
  CHECK(error_of("arm,covariate,response,time,event\n") == "file has a header but no records");
  CHECK(error_of("arm,covariate,response,time,event\n0,1,1,1,1\n").find("at least 2") !=
        std::string::npos);
}

TEST_CASE("missing covariates are rejected unless imputation is requested") {
  const std::string text =
      "arm,covariate,response,time,event\n"
      "0,1,1,1,1\n"
      "0,3,1,1,0\n"
      "0,,1,0.5,1\n"
      "1,10,0,1,1\n";
  CHECK(error_of(text) == "line 4: field 'covariate' is missing");
  CovariatePolicy impute{MissingCovariateRule::group_mean_impute};
  const auto d = parse_dataset(text, impute);
  CHECK(d[2].covariate == doctest::Approx(2.0));
  CHECK(d[3].covariate == 10.0);

  const std::string no_donor =
      "arm,covariate,response,time,event\n0,1,1,1,1\n1,,1,1,1\n";
  CHECK(error_of(no_donor, impute).find("no donors") != std::string::npos);
}

TEST_CASE("dataset construction enforces record invariants") {
  CHECK_THROWS_AS(Dataset({{0, 0, 0, 1, 1}}), InputError);
  CHECK_THROWS_AS(Dataset({{0, 0, 0, 1, 1}, {2, 0, 0, 1, 1}}), InputError);
  CHECK_THROWS_AS(Dataset({{0, 0, 0, 1, 1}, {1, 0, 0, -0.1, 1}}), InputError);
  CHECK(invalid_field({0, 0, 0, 1, 3}) == "event");
  CHECK(invalid_field({0, 0, 0, 1, 1}).empty());
  const Dataset one_arm({{0, 0, 0, 1, 1}, {0, 1, 1, 1, 0}});
  CHECK_FALSE(one_arm.has_both_arms());
  CHECK_THROWS_AS(one_arm.require_both_arms(), InputError);
}

TEST_CASE("format and parse round trip exactly") {
  const Dataset d({{0, 0.1, 1, 1.0 / 3.0, 1}, {1, -1e-300, 0, 1.2, 0}, {1, 3.999999, 1, 0, 0}});
  const auto back = parse_dataset(format_dataset(d));
  CHECK(back.records() == d.records());
}

TEST_CASE("missing file is an input error naming the path") {
  try {
    load_dataset("/nonexistent/dir/data.csv");
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dir/data.csv") != std::string::npos);
  }
}

TEST_CASE("load errors carry the path prefix") {
  const auto path = std::filesystem::temp_directory_path() / "medbma_bad_data.csv";
  io::write_file(path, "arm,covariate,response,time,event\n0,1,1,1,1\n0,1,9,1,1\n");
  try {
    load_dataset(path);
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find(path.string() + ": line 3") == 0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("summary counts arms, events and censoring") {
  const Dataset d({{0, 0, 1, 1, 1}, {0, 0, 0, 2, 0}, {1, 0, 1, 3, 1}, {1, 0, 1, 4, 1}});
  const auto s = summarize(d);
  CHECK(s.n == 4);
  CHECK(s.arms[0].count == 2);
  CHECK(s.arms[1].response_rate == 1.0);
  CHECK(s.events == 3);
  CHECK(s.censoring_proportion == 0.25);
  CHECK(s.median_time == 2.5);
  std::ostringstream os;
  os << s;
  CHECK(os.str().find("censoring_proportion,0.25") != std::string::npos);
}

TEST_CASE("number formatting round trips at 17 digits") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 123456789.123456789, 0.0}) {
    const auto s = io::format_double(v);
    REQUIRE(io::parse_double(s).has_value());
    CHECK(*io::parse_double(s) == v);
  }
  CHECK_FALSE(io::parse_double("1.5x").has_value());
  CHECK(io::parse_real_list("0.1, 0.5,1") == std::vector<double>{0.1, 0.5, 1.0});
}
