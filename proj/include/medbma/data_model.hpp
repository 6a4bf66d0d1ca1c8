#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace medbma {

/// One patient: treatment arm A, baseline covariate X, binary tumor response Y,
/// follow-up time T and event indicator (1 = death observed, 0 = censored).
struct SubjectRecord {
  int arm = 0;
  double covariate = 0.0;
  int response = 0;
  double time = 0.0;
  int event = 0;

  friend bool operator==(const SubjectRecord&, const SubjectRecord&) = default;
};

// Empty string when the record is valid, otherwise the offending field name.
std::string invalid_field(const SubjectRecord& r);

/// Immutable, validated collection of subjects. Row order is preserved.
class Dataset {
 public:
  // Throws InputError when n < 2 or a record violates its invariants.
  explicit Dataset(std::vector<SubjectRecord> records);

  std::size_t size() const noexcept { return records_.size(); }
  const SubjectRecord& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<SubjectRecord>& records() const noexcept { return records_; }
  auto begin() const noexcept { return records_.begin(); }
  auto end() const noexcept { return records_.end(); }

  std::size_t arm_count(int arm) const noexcept;
  bool has_both_arms() const noexcept {
    return arm_count(0) > 0 && arm_count(1) > 0;
  }
  // Throws InputError unless both arms are represented.
  void require_both_arms() const;

 private:
  std::vector<SubjectRecord> records_;
};

enum class MissingCovariateRule { reject, group_mean_impute };

/// How empty covariate fields are handled at load time. Imputation uses the
/// mean covariate of subjects sharing the same (arm, response) cell.
struct CovariatePolicy {
  MissingCovariateRule missing_rule = MissingCovariateRule::reject;
};

Dataset parse_dataset(std::string_view csv_text, CovariatePolicy policy = {});
Dataset load_dataset(const std::filesystem::path& path,
                     CovariatePolicy policy = {});

std::string format_dataset(const Dataset& data);
void write_dataset(const std::filesystem::path& path, const Dataset& data);

struct ArmSummary {
  std::size_t count = 0;
  double response_rate = 0.0;
  std::size_t events = 0;
};

struct DatasetSummary {
  std::size_t n = 0;
  std::array<ArmSummary, 2> arms{};
  std::size_t events = 0;
  double censoring_proportion = 0.0;
  double median_time = 0.0;
};

DatasetSummary summarize(const Dataset& data);
std::ostream& operator<<(std::ostream& os, const DatasetSummary& s);

}  // namespace medbma
