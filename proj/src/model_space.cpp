#include "medbma/model_space.hpp"

#include <algorithm>

#include "medbma/errors.hpp"

namespace medbma {

namespace {

// Rows of the indicator table, in label order.
constexpr std::array<std::array<std::uint8_t, 3>, kResponseModels> kResponseTable = {{
    {0, 0, 0},
    {1, 0, 0},
    {0, 1, 0},
    {1, 1, 0},
    {1, 1, 1},
}};

constexpr std::array<std::array<std::uint8_t, 6>, kSurvivalModels> kSurvivalTable = {{
    {0, 0, 0, 0, 0, 0},
    {1, 0, 0, 0, 0, 0},
    {0, 1, 0, 0, 0, 0},
    {0, 0, 1, 0, 0, 0},
    {1, 1, 0, 0, 0, 0},
    {1, 0, 1, 0, 0, 0},
    {0, 1, 1, 0, 0, 0},
    {1, 1, 0, 1, 0, 0},
    {1, 0, 1, 0, 1, 0},
    {0, 1, 1, 0, 0, 1},
    {1, 1, 1, 0, 0, 0},
    {1, 1, 1, 1, 0, 0},
    {1, 1, 1, 0, 1, 0},
    {1, 1, 1, 0, 0, 1},
    {1, 1, 1, 1, 1, 0},
    {1, 1, 1, 1, 0, 1},
    {1, 1, 1, 0, 1, 1},
    {1, 1, 1, 1, 1, 1},
}};

constexpr std::size_t kInvalid = static_cast<std::size_t>(-1);

template <std::size_t Bits, std::size_t Rows>
constexpr std::array<std::size_t, (1u << Bits)> build_lookup(
    const std::array<std::array<std::uint8_t, Bits>, Rows>& table) {
  std::array<std::size_t, (1u << Bits)> lut{};
  for (auto& v : lut) v = kInvalid;
  for (std::size_t i = 0; i < Rows; ++i) {
    unsigned m = 0;
    for (std::size_t j = 0; j < Bits; ++j) m |= static_cast<unsigned>(table[i][j]) << j;
    lut[m] = i;
  }
  return lut;
}

constexpr auto kResponseLookup = build_lookup<3, kResponseModels>(kResponseTable);
constexpr auto kSurvivalLookup = build_lookup<6, kSurvivalModels>(kSurvivalTable);

template <std::size_t N>
unsigned pack(const std::array<std::uint8_t, N>& bits) {
  unsigned m = 0;
  for (std::size_t j = 0; j < N; ++j) m |= (bits[j] ? 1u : 0u) << j;
  return m;
}

template <std::size_t N>
std::array<std::uint8_t, N> unpack(unsigned m) {
  std::array<std::uint8_t, N> bits{};
  for (std::size_t j = 0; j < N; ++j) bits[j] = static_cast<std::uint8_t>((m >> j) & 1u);
  return bits;
}

template <std::size_t N>
std::string describe(const std::array<std::uint8_t, N>& bits) {
  std::string s = "(";
  for (std::size_t j = 0; j < N; ++j) {
    if (j) s += ',';
    s += bits[j] ? '1' : '0';
  }
  return s + ")";
}

}  // namespace

bool ResponseIndicators::satisfies_hierarchy() const noexcept {
  return z[0] * z[1] >= z[2] && z[0] <= 1 && z[1] <= 1 && z[2] <= 1;
}

unsigned ResponseIndicators::mask() const noexcept { return pack(z); }

ResponseIndicators ResponseIndicators::from_mask(unsigned mask) noexcept {
  return ResponseIndicators{unpack<kResponseTerms>(mask)};
}

std::size_t ResponseIndicators::active_count() const noexcept {
  return static_cast<std::size_t>(std::count(z.begin(), z.end(), 1));
}

bool SurvivalIndicators::satisfies_hierarchy() const noexcept {
  for (auto b : w)
    if (b > 1) return false;
  return w[0] * w[1] >= w[3] && w[0] * w[2] >= w[4] && w[1] * w[2] >= w[5];
}

unsigned SurvivalIndicators::mask() const noexcept { return pack(w); }

SurvivalIndicators SurvivalIndicators::from_mask(unsigned mask) noexcept {
  return SurvivalIndicators{unpack<kSurvivalTerms>(mask)};
}

std::size_t SurvivalIndicators::active_count() const noexcept {
  return static_cast<std::size_t>(std::count(w.begin(), w.end(), 1));
}

const std::vector<ResponseIndicators>& enumerate_response_models() {
  static const std::vector<ResponseIndicators> models = [] {
    std::vector<ResponseIndicators> v;
    for (const auto& row : kResponseTable) v.push_back(ResponseIndicators{row});
    return v;
  }();
  return models;
}

const std::vector<SurvivalIndicators>& enumerate_survival_models() {
  static const std::vector<SurvivalIndicators> models = [] {
    std::vector<SurvivalIndicators> v;
    for (const auto& row : kSurvivalTable) v.push_back(SurvivalIndicators{row});
    return v;
  }();
  return models;
}

std::size_t classify(const ResponseIndicators& z) {
  if (!z.satisfies_hierarchy())
    throw InputError("response indicators " + describe(z.z) +
                     " violate z1*z2 >= z3");
  return kResponseLookup[z.mask()];
}

std::size_t classify(const SurvivalIndicators& w) {
  if (!w.satisfies_hierarchy()) {
    std::string which;
    if (w.w[0] * w.w[1] < w.w[3]) which = "w1*w2 >= w4";
    else if (w.w[0] * w.w[2] < w.w[4]) which = "w1*w3 >= w5";
    else which = "w2*w3 >= w6";
    throw InputError("survival indicators " + describe(w.w) + " violate " + which);
  }
  return kSurvivalLookup[w.mask()];
}

std::string model_label(ModelFamily family, std::size_t index) {
  return (family == ModelFamily::response ? "R" : "S") + std::to_string(index + 1);
}

std::string classify_label(const ResponseIndicators& z) {
  return model_label(ModelFamily::response, classify(z));
}

std::string classify_label(const SurvivalIndicators& w) {
  return model_label(ModelFamily::survival, classify(w));
}

std::size_t parse_model_label(ModelFamily family, std::string_view label) {
  const char prefix = family == ModelFamily::response ? 'R' : 'S';
  const std::size_t count = family_size(family);
  if (label.size() >= 2 && label.front() == prefix) {
    std::size_t value = 0;
    bool digits = true;
    for (char c : label.substr(1)) {
      if (c < '0' || c > '9') {
        digits = false;
        break;
      }
      value = value * 10 + static_cast<std::size_t>(c - '0');
    }
    if (digits && label[1] != '0' && value >= 1 && value <= count) return value - 1;
  }
  throw InputError("unknown model label '" + std::string(label) + "'");
}

std::size_t family_size(ModelFamily family) noexcept {
  return family == ModelFamily::response ? kResponseModels : kSurvivalModels;
}

std::size_t family_terms(ModelFamily family) noexcept {
  return family == ModelFamily::response ? kResponseTerms : kSurvivalTerms;
}

std::vector<std::uint8_t> family_indicators(ModelFamily family, std::size_t index) {
  if (family == ModelFamily::response) {
    const auto& r = kResponseTable.at(index);
    return {r.begin(), r.end()};
  }
  const auto& r = kSurvivalTable.at(index);
  return {r.begin(), r.end()};
}

std::size_t ModelConfiguration::response_id() const { return classify(response); }
std::size_t ModelConfiguration::survival_id() const { return classify(survival); }
std::string ModelConfiguration::response_label() const { return classify_label(response); }
std::string ModelConfiguration::survival_label() const { return classify_label(survival); }

ModelConfiguration ModelConfiguration::full() {
  return {ResponseIndicators{{1, 1, 1}}, SurvivalIndicators{{1, 1, 1, 1, 1, 1}}};
}

ModelConfiguration ModelConfiguration::null() { return {}; }

ModelConfiguration ModelConfiguration::from_labels(std::string_view response,
                                                   std::string_view survival) {
  ModelConfiguration c;
  c.response.z = kResponseTable[parse_model_label(ModelFamily::response, response)];
  c.survival.w = kSurvivalTable[parse_model_label(ModelFamily::survival, survival)];
  return c;
}

ResponseRow response_design_row(int arm, double covariate,
                                const ResponseIndicators& z) noexcept {
  const double a = arm;
  return {1.0, z.z[0] ? a : 0.0, z.z[1] ? covariate : 0.0,
          z.z[2] ? a * covariate : 0.0};
}

SurvivalRow survival_design_row(int arm, int response, double covariate,
                                const SurvivalIndicators& w) noexcept {
  const double a = arm;
  const double y = response;
  const double x = covariate;
  const SurvivalRow full = {a, y, x, a * y, a * x, x * y};
  SurvivalRow row{};
  for (std::size_t j = 0; j < kSurvivalTerms; ++j) row[j] = w.w[j] ? full[j] : 0.0;
  return row;
}

}  // namespace medbma
