#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "medbma/data_model.hpp"
#include "medbma/likelihood.hpp"
#include "medbma/model_space.hpp"

namespace medbma {

inline constexpr std::size_t kIndicatorCount = kResponseTerms + kSurvivalTerms;

struct SamplerConfig {
  std::size_t chains = 2;
  std::size_t iterations = 10000;  // per chain, burn-in included
  std::size_t burn_in = 5000;
  std::size_t thin = 1;
  std::uint64_t seed = 1;
  double proposal_sd_init = 0.1;
  std::size_t adapt_window = 50;
  double birth_proposal_sd = 1.0;
  unsigned threads = 1;

  // Start from this configuration instead of the full model.
  std::optional<ModelConfiguration> initial_config;
  // Indicators (z1..z3, w1..w6) that are never toggled.
  std::array<bool, kIndicatorCount> frozen{};

  void validate() const;
};

struct ChainStats {
  std::array<double, kParameterCount> acceptance{};     // within-model moves
  std::array<double, kParameterCount> proposal_scale{};  // final RW scales
  double toggle_acceptance = 0.0;
  std::size_t hierarchy_rejections = 0;
};

struct PosteriorDraws {
  std::vector<std::vector<ParameterState>> chains;
  std::vector<std::vector<std::size_t>> iterations;  // 1-based sweep index
  std::vector<ChainStats> stats;

  std::size_t total() const noexcept;
  std::vector<ParameterState> pooled() const;
};

PosteriorDraws run_mcmc(const Dataset& data, const PriorSpec& prior,
                        const SamplerConfig& config);
PosteriorDraws run_mcmc(const DesignCache& design, const PriorSpec& prior,
                        const SamplerConfig& config);

/// Shortest window holding ceil(mass * n) sorted samples; leftmost on ties.
std::pair<double, double> hpd_interval(std::span<const double> samples, double mass = 0.95);

// Split-chain R-hat. 1 when every value is identical, +inf when chains are
// individually constant but disagree.
double split_rhat(const std::vector<std::vector<double>>& chains);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double hpd_lower = 0.0;
  double hpd_upper = 0.0;
  double rhat = 1.0;
  double inclusion = 1.0;  // fraction of draws where the term is active
};

struct PosteriorSummary {
  std::array<ParameterSummary, kParameterCount> parameters;
  std::array<double, kResponseModels> response_probs{};
  std::array<double, kSurvivalModels> survival_probs{};
  std::size_t draws = 0;

  std::size_t top_response() const;
  std::size_t top_survival() const;
};

PosteriorSummary summarize_posterior(const PosteriorDraws& draws, double hpd_mass = 0.95);

// Line-delimited draws: iteration,chain,response_model,survival_model,beta0..lambda
std::string format_draws(const PosteriorDraws& draws);
void write_draws(const std::string& path, const PosteriorDraws& draws);
PosteriorDraws parse_draws(std::string_view text);
PosteriorDraws load_draws(const std::string& path);

std::string format_coefficient_table(const PosteriorSummary& summary);
std::string format_model_table(const PosteriorSummary& summary,
                               const std::vector<double>* prior_response = nullptr,
                               const std::vector<double>* prior_survival = nullptr);

}  // namespace medbma
