#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "medbma/data_model.hpp"

namespace medbma {

inline constexpr std::size_t kResponseTerms = 3;   // A, X, A*X
inline constexpr std::size_t kSurvivalTerms = 6;   // A, Y, X, A*Y, A*X, X*Y
inline constexpr std::size_t kResponseModels = 5;
inline constexpr std::size_t kSurvivalModels = 18;

enum class ModelFamily { response, survival };

/// Inclusion indicators (z1, z2, z3) for the response terms A, X, A*X.
/// The intercept is always in the model.
struct ResponseIndicators {
  std::array<std::uint8_t, kResponseTerms> z{};

  // z1*z2 >= z3
  bool satisfies_hierarchy() const noexcept;
  unsigned mask() const noexcept;
  static ResponseIndicators from_mask(unsigned mask) noexcept;
  std::size_t active_count() const noexcept;
  friend bool operator==(const ResponseIndicators&,
                         const ResponseIndicators&) = default;
};

/// Inclusion indicators (w1..w6) for the survival terms A, Y, X, A*Y, A*X, X*Y.
struct SurvivalIndicators {
  std::array<std::uint8_t, kSurvivalTerms> w{};

  // w1*w2 >= w4, w1*w3 >= w5, w2*w3 >= w6
  bool satisfies_hierarchy() const noexcept;
  unsigned mask() const noexcept;
  static SurvivalIndicators from_mask(unsigned mask) noexcept;
  std::size_t active_count() const noexcept;
  friend bool operator==(const SurvivalIndicators&,
                         const SurvivalIndicators&) = default;
};

/// One point of the 5 x 18 model space.
struct ModelConfiguration {
  ResponseIndicators response;
  SurvivalIndicators survival;

  bool satisfies_hierarchy() const noexcept {
    return response.satisfies_hierarchy() && survival.satisfies_hierarchy();
  }
  // 0-based positions in the R1..R5 / S1..S18 tables.
  std::size_t response_id() const;
  std::size_t survival_id() const;
  std::string response_label() const;
  std::string survival_label() const;

  static ModelConfiguration full();
  static ModelConfiguration null();
  static ModelConfiguration from_labels(std::string_view response,
                                        std::string_view survival);
  friend bool operator==(const ModelConfiguration&,
                         const ModelConfiguration&) = default;
};

// Table ordering R1..R5 and S1..S18.
const std::vector<ResponseIndicators>& enumerate_response_models();
const std::vector<SurvivalIndicators>& enumerate_survival_models();

// 0-based table index; throws InputError when a hierarchy constraint fails.
std::size_t classify(const ResponseIndicators& z);
std::size_t classify(const SurvivalIndicators& w);
std::string model_label(ModelFamily family, std::size_t index);
std::string classify_label(const ResponseIndicators& z);
std::string classify_label(const SurvivalIndicators& w);
// Inverse of model_label; throws InputError for unknown labels.
std::size_t parse_model_label(ModelFamily family, std::string_view label);

std::size_t family_size(ModelFamily family) noexcept;
std::size_t family_terms(ModelFamily family) noexcept;
// Indicator vector of model `index` of the family as 0/1 values.
std::vector<std::uint8_t> family_indicators(ModelFamily family, std::size_t index);

using ResponseRow = std::array<double, 4>;
using SurvivalRow = std::array<double, kSurvivalTerms>;

// (1, z1*A, z2*X, z3*A*X)
ResponseRow response_design_row(int arm, double covariate,
                                const ResponseIndicators& z) noexcept;
inline ResponseRow response_design_row(const SubjectRecord& r,
                                       const ResponseIndicators& z) noexcept {
  return response_design_row(r.arm, r.covariate, z);
}

// (A, Y, X, A*Y, A*X, X*Y) masked by w.
SurvivalRow survival_design_row(int arm, int response, double covariate,
                                const SurvivalIndicators& w) noexcept;
inline SurvivalRow survival_design_row(const SubjectRecord& r,
                                       const SurvivalIndicators& w) noexcept {
  return survival_design_row(r.arm, r.response, r.covariate, w);
}

}  // namespace medbma
