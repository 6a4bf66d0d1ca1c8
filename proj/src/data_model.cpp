#include "medbma/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <utility>

#include "medbma/errors.hpp"
#include "medbma/io.hpp"

namespace medbma {

namespace {

constexpr std::array<std::string_view, 5> kColumns = {"arm", "covariate",
                                                      "response", "time", "event"};

bool is_binary(int v) { return v == 0 || v == 1; }

std::string line_prefix(std::size_t line) {
  return "line " + std::to_string(line) + ": ";
}

int parse_binary_field(std::string_view field, std::string_view name,
                       std::size_t line) {
  auto v = io::parse_int(field);
  if (!v || (*v != 0 && *v != 1))
    throw InputError(line_prefix(line) + "field '" + std::string(name) +
                     "' must be 0 or 1, got '" +
                     std::string(io::trim(field)) + "'");
  return static_cast<int>(*v);
}

}  // namespace

std::string invalid_field(const SubjectRecord& r) {
  if (!is_binary(r.arm)) return "arm";
  if (!std::isfinite(r.covariate)) return "covariate";
  if (!is_binary(r.response)) return "response";
  if (!std::isfinite(r.time) || r.time < 0.0) return "time";
  if (!is_binary(r.event)) return "event";
  return {};
}

Dataset::Dataset(std::vector<SubjectRecord> records)
    : records_(std::move(records)) {
  if (records_.size() < 2)
    throw InputError("dataset needs at least 2 records, got " +
                     std::to_string(records_.size()));
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto bad = invalid_field(records_[i]);
    if (!bad.empty())
      throw InputError("record " + std::to_string(i + 1) +
                       ": invalid field '" + bad + "'");
  }
}

std::size_t Dataset::arm_count(int arm) const noexcept {
  return static_cast<std::size_t>(std::count_if(
      records_.begin(), records_.end(),
      [arm](const SubjectRecord& r) { return r.arm == arm; }));
}

void Dataset::require_both_arms() const {
  if (!has_both_arms())
    throw InputError("dataset must contain subjects in both arms");
}

Dataset parse_dataset(std::string_view text, CovariatePolicy policy) {
  std::vector<SubjectRecord> records;
  std::vector<std::size_t> missing_rows;
  std::vector<std::size_t> missing_lines;

  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (io::trim(line).empty()) continue;
    auto fields = io::split_csv_line(line);
    if (!header_seen) {
      bool ok = fields.size() == kColumns.size();
      for (std::size_t j = 0; ok && j < kColumns.size(); ++j)
        ok = io::trim(fields[j]) == kColumns[j];
      if (!ok)
        throw InputError(line_prefix(line_no) +
                         "header must be 'arm,covariate,response,time,event'");
      header_seen = true;
      continue;
    }
    if (fields.size() != kColumns.size())
      throw InputError(line_prefix(line_no) + "expected 5 fields, got " +
                       std::to_string(fields.size()));
    SubjectRecord r;
    r.arm = parse_binary_field(fields[0], "arm", line_no);
    r.response = parse_binary_field(fields[2], "response", line_no);
    r.event = parse_binary_field(fields[4], "event", line_no);

    auto t = io::parse_double(fields[3]);
    if (!t) throw InputError(line_prefix(line_no) + "field 'time' is not a number");
    if (!std::isfinite(*t) || *t < 0.0)
      throw InputError(line_prefix(line_no) +
                       "field 'time' must be finite and >= 0");
    r.time = *t;

    if (io::trim(fields[1]).empty()) {
      if (policy.missing_rule == MissingCovariateRule::reject)
        throw InputError(line_prefix(line_no) + "field 'covariate' is missing");
      missing_rows.push_back(records.size());
      missing_lines.push_back(line_no);
      r.covariate = 0.0;
    } else {
      auto x = io::parse_double(fields[1]);
      if (!x) throw InputError(line_prefix(line_no) +
                               "field 'covariate' is not a number");
      if (!std::isfinite(*x))
        throw InputError(line_prefix(line_no) + "field 'covariate' must be finite");
      r.covariate = *x;
    }
    records.push_back(r);
  }
  if (!header_seen) throw InputError("empty file");
  if (records.empty()) throw InputError("file has a header but no records");

  if (!missing_rows.empty()) {
    // Cell means over non-missing donors, keyed by (arm, response).
    std::map<std::pair<int, int>, std::pair<double, std::size_t>> cells;
    std::size_t k = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (k < missing_rows.size() && missing_rows[k] == i) {
        ++k;
        continue;
      }
      auto& c = cells[{records[i].arm, records[i].response}];
      c.first += records[i].covariate;
      ++c.second;
    }
    for (std::size_t m = 0; m < missing_rows.size(); ++m) {
      auto& r = records[missing_rows[m]];
      auto it = cells.find({r.arm, r.response});
      if (it == cells.end() || it->second.second == 0)
        throw InputError(line_prefix(missing_lines[m]) +
                         "no donors to impute covariate for arm=" +
                         std::to_string(r.arm) +
                         ", response=" + std::to_string(r.response));
      r.covariate = it->second.first / static_cast<double>(it->second.second);
    }
  }
  return Dataset(std::move(records));
}

Dataset load_dataset(const std::filesystem::path& path, CovariatePolicy policy) {
  if (!std::filesystem::exists(path))
    throw InputError("data file not found: " + path.string());
  try {
    return parse_dataset(io::read_file(path), policy);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string format_dataset(const Dataset& data) {
  std::string out = "arm,covariate,response,time,event\n";
  for (const auto& r : data) {
    out += std::to_string(r.arm);
    out += ',';
    out += io::format_double(r.covariate);
    out += ',';
    out += std::to_string(r.response);
    out += ',';
    out += io::format_double(r.time);
    out += ',';
    out += std::to_string(r.event);
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  io::write_file(path, format_dataset(data));
}

DatasetSummary summarize(const Dataset& data) {
  DatasetSummary s;
  s.n = data.size();
  std::array<std::size_t, 2> responders{};
  std::vector<double> times;
  times.reserve(data.size());
  for (const auto& r : data) {
    auto& arm = s.arms[static_cast<std::size_t>(r.arm)];
    ++arm.count;
    responders[static_cast<std::size_t>(r.arm)] += static_cast<std::size_t>(r.response);
    arm.events += static_cast<std::size_t>(r.event);
    s.events += static_cast<std::size_t>(r.event);
    times.push_back(r.time);
  }
  for (std::size_t a = 0; a < 2; ++a)
    if (s.arms[a].count > 0)
      s.arms[a].response_rate = static_cast<double>(responders[a]) /
                                static_cast<double>(s.arms[a].count);
  s.censoring_proportion =
      static_cast<double>(s.n - s.events) / static_cast<double>(s.n);
  std::sort(times.begin(), times.end());
  const std::size_t mid = times.size() / 2;
  s.median_time = times.size() % 2 == 1 ? times[mid]
                                        : 0.5 * (times[mid - 1] + times[mid]);
  return s;
}

std::ostream& operator<<(std::ostream& os, const DatasetSummary& s) {
  os << "n," << s.n << '\n';
  for (std::size_t a = 0; a < 2; ++a) {
    os << "arm" << a << "_count," << s.arms[a].count << '\n';
    os << "arm" << a << "_response_rate," << io::format_double(s.arms[a].response_rate) << '\n';
    os << "arm" << a << "_events," << s.arms[a].events << '\n';
  }
  os << "events," << s.events << '\n';
  os << "censoring_proportion," << io::format_double(s.censoring_proportion) << '\n';
  os << "median_time," << io::format_double(s.median_time) << '\n';
  return os;
}

}  // namespace medbma
