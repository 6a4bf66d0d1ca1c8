#include "medbma/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "medbma/errors.hpp"
#include "medbma/io.hpp"
#include "medbma/parallel.hpp"
#include "medbma/random.hpp"

namespace medbma {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTargetAcceptance = 0.44;

// Parameter slots: 0..3 beta, 4..9 gamma, 10 log nu, 11 log lambda.
constexpr std::size_t kShapeSlot = kBetaSize + kGammaSize;
constexpr std::size_t kRateSlot = kShapeSlot + 1;

class Chain {
 public:
  Chain(const DesignCache& d, const PriorSpec& prior, const SamplerConfig& cfg,
        ParameterState start, std::uint64_t seed)
      : d_(d), prior_(prior), cfg_(cfg), s_(std::move(start)), rng_(seed) {
    eta_r_.assign(d_.n, 0.0);
    eta_s_.assign(d_.n, 0.0);
    for (std::size_t i = 0; i < d_.n; ++i) {
      for (std::size_t j = 0; j < kBetaSize; ++j) eta_r_[i] += s_.beta[j] * d_.response_cols[j][i];
      for (std::size_t j = 0; j < kGammaSize; ++j) eta_s_[i] += s_.gamma[j] * d_.survival_cols[j][i];
    }
    for (std::size_t j = 0; j < kGammaSize; ++j) event_eta_ += s_.gamma[j] * d_.event_col_sums[j];
    ll_r_ = response_ll(eta_r_);
    cum_ = cumulative(s_.shape, eta_s_);
    scale_.fill(cfg_.proposal_sd_init);
    if (!std::isfinite(log_posterior()))
      throw NumericalError("log posterior is not finite at the initial state");
  }


  void run(std::vector<ParameterState>& out, std::vector<std::size_t>& iters, ChainStats& stats) {
    std::array<std::size_t, kParameterCount> batch_acc{}, batch_try{}, total_acc{}, total_try{};
    std::size_t batches = 0, toggles = 0, toggle_acc = 0;
    std::array<std::size_t, kIndicatorCount> order;
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t it = 1; it <= cfg_.iterations; ++it) {
      for (std::size_t k = 0; k < kParameterCount; ++k) {
        if (!active(k)) continue;
        const bool ok = metropolis(k);
        ++batch_try[k];
        ++total_try[k];
        if (ok) {
          ++batch_acc[k];
          ++total_acc[k];
        }
      }
      std::shuffle(order.begin(), order.end(), rng_);
      for (std::size_t k : order) {
        if (cfg_.frozen[k]) continue;
        ++toggles;
        if (toggle(k, stats)) ++toggle_acc;
      }

      if (it <= cfg_.burn_in && it % cfg_.adapt_window == 0) {
        ++batches;
        const double step = std::min(1.0, 1.0 / std::sqrt(static_cast<double>(batches)));
        for (std::size_t k = 0; k < kParameterCount; ++k) {
          if (batch_try[k] == 0) continue;
          const double rate = static_cast<double>(batch_acc[k]) / static_cast<double>(batch_try[k]);
          scale_[k] *= std::exp(step * (rate - kTargetAcceptance));
        }
        batch_acc.fill(0);
        batch_try.fill(0);
      }

      if (it > cfg_.burn_in && (it - cfg_.burn_in) % cfg_.thin == 0) {
        out.push_back(s_);
        iters.push_back(it);
      }
    }
    for (std::size_t k = 0; k < kParameterCount; ++k)
      stats.acceptance[k] =
          total_try[k] ? static_cast<double>(total_acc[k]) / static_cast<double>(total_try[k]) : 0.0;
    stats.proposal_scale = scale_;
    stats.toggle_acceptance =
        toggles ? static_cast<double>(toggle_acc) / static_cast<double>(toggles) : 0.0;
  }

 private:
  bool active(std::size_t k) const {
    if (k == 0 || k >= kShapeSlot) return true;
    if (k < kBetaSize) return s_.config.response.z[k - 1] != 0;
    return s_.config.survival.w[k - kBetaSize] != 0;
  }

  double response_ll(const std::vector<double>& eta) const {
    double ll = 0.0;
    for (std::size_t i = 0; i < d_.n; ++i) ll += d_.y[i] * eta[i] - softplus(eta[i]);
    return ll;
  }

  // sum_i t_i^nu exp(eta_i)
  double cumulative(double nu, const std::vector<double>& eta) const {
    double c = 0.0;
    for (std::size_t i = 0; i < d_.n; ++i)
      if (d_.time[i] > 0.0) c += std::exp(nu * d_.log_time[i] + eta[i]);
    return c;
  }

  double survival_ll(double nu, double lambda, double event_eta, double cum) const {
    return d_.event_count * (std::log(nu) + std::log(lambda)) +
           (nu - 1.0) * d_.event_log_time + event_eta - lambda * cum;
  }

  double coef_prior(double v) const { return normal_log_density(v, 0.0, prior_.coef_sd); }

  // Weibull prior on the log scale, Jacobian included.
  double log_scale_prior(double log_v) const {
    return gamma_log_density(std::exp(log_v), prior_.weibull_shape_hyper,
                             prior_.weibull_rate_hyper) +
           log_v;
  }

  double log_posterior() const {
    return ll_r_ + survival_ll(s_.shape, s_.rate, event_eta_, cum_) + log_prior(s_, prior_);
  }

  bool accept(double log_ratio) {
    if (!std::isfinite(log_ratio)) return false;
    return log_ratio >= 0.0 || std::log(uniform_open(rng_)) < log_ratio;
  }

  // Trial value for coefficient slot k; delta is the log-likelihood change.
  struct Proposal {
    double ll_r = 0.0, event_eta = 0.0, cum = 0.0, delta = 0.0;
  };

  Proposal evaluate_coefficient(std::size_t k, double value) {
    Proposal p;
    if (k < kBetaSize) {
      const double diff = value - s_.beta[k];
      const auto& col = d_.response_cols[k];
      for (std::size_t i = 0; i < d_.n; ++i) buf_[i] = eta_r_[i] + diff * col[i];
      p.ll_r = response_ll(buf_);
      p.delta = p.ll_r - ll_r_;
    } else {
      const std::size_t j = k - kBetaSize;
      const double diff = value - s_.gamma[j];
      const auto& col = d_.survival_cols[j];
      for (std::size_t i = 0; i < d_.n; ++i) buf_[i] = eta_s_[i] + diff * col[i];
      p.event_eta = event_eta_ + diff * d_.event_col_sums[j];
      p.cum = cumulative(s_.shape, buf_);
      p.delta = survival_ll(s_.shape, s_.rate, p.event_eta, p.cum) -
                survival_ll(s_.shape, s_.rate, event_eta_, cum_);
    }
    return p;
  }

  void commit_coefficient(std::size_t k, double value, const Proposal& p) {
    if (k < kBetaSize) {
      s_.beta[k] = value;
      eta_r_.swap(buf_);
      ll_r_ = p.ll_r;
    } else {
      s_.gamma[k - kBetaSize] = value;
      eta_s_.swap(buf_);
      event_eta_ = p.event_eta;
      cum_ = p.cum;
    }
  }

  bool metropolis(std::size_t k) {
    std::normal_distribution<double> normal(0.0, scale_[k]);
    const double step = normal(rng_);
    if (k == kRateSlot) {
      // O(1): the cumulative sum does not involve lambda.
      const double old_log = std::log(s_.rate), new_log = old_log + step;
      const double lam = std::exp(new_log);
      const double r = survival_ll(s_.shape, lam, event_eta_, cum_) -
                       survival_ll(s_.shape, s_.rate, event_eta_, cum_) +
                       log_scale_prior(new_log) - log_scale_prior(old_log);
      if (!accept(r)) return false;
      s_.rate = lam;
      return true;
    }
    if (k == kShapeSlot) {
      const double old_log = std::log(s_.shape), new_log = old_log + step;
      const double nu = std::exp(new_log);
      const double cum = cumulative(nu, eta_s_);
      const double r = survival_ll(nu, s_.rate, event_eta_, cum) -
                       survival_ll(s_.shape, s_.rate, event_eta_, cum_) +
                       log_scale_prior(new_log) - log_scale_prior(old_log);
      if (!accept(r)) return false;
      s_.shape = nu;
      cum_ = cum;
      return true;
    }
    const double old_v = k < kBetaSize ? s_.beta[k] : s_.gamma[k - kBetaSize];
    const double new_v = old_v + step;
    const auto p = evaluate_coefficient(k, new_v);
    if (!accept(p.delta + coef_prior(new_v) - coef_prior(old_v))) return false;
    commit_coefficient(k, new_v, p);
    return true;
  }

  // Birth/death move on indicator k (0..2 response, 3..8 survival).
  bool toggle(std::size_t k, ChainStats& stats) {
    ModelConfiguration next = s_.config;
    std::uint8_t& flag =
        k < kResponseTerms ? next.response.z[k] : next.survival.w[k - kResponseTerms];
    flag = flag ? 0 : 1;
    if (!next.satisfies_hierarchy()) {
      ++stats.hierarchy_rejections;
      return false;
    }
    const bool birth = flag != 0;
    const std::size_t slot = k < kResponseTerms ? k + 1 : kBetaSize + (k - kResponseTerms);
    const double psi =
        k < kResponseTerms ? prior_.psi_z[k] : prior_.psi_w[k - kResponseTerms];
    const double q_sd = cfg_.birth_proposal_sd;

    double value, log_ratio;
    if (birth) {
      std::normal_distribution<double> normal(0.0, q_sd);
      value = normal(rng_);
      const auto p = evaluate_coefficient(slot, value);
      log_ratio = p.delta + coef_prior(value) + std::log(psi) - std::log1p(-psi) -
                  normal_log_density(value, 0.0, q_sd);
      if (!accept(log_ratio)) return false;
      commit_coefficient(slot, value, p);
    } else {
      const double old_v = slot < kBetaSize ? s_.beta[slot] : s_.gamma[slot - kBetaSize];
      const auto p = evaluate_coefficient(slot, 0.0);
      log_ratio = p.delta - coef_prior(old_v) + std::log1p(-psi) - std::log(psi) +
                  normal_log_density(old_v, 0.0, q_sd);
      if (!accept(log_ratio)) return false;
      commit_coefficient(slot, 0.0, p);
    }
    s_.config = next;
    return true;
  }

  const DesignCache& d_;
  const PriorSpec& prior_;
  const SamplerConfig& cfg_;
  ParameterState s_;
  Rng rng_;
  std::vector<double> eta_r_, eta_s_;
  std::vector<double> buf_ = std::vector<double>(d_.n);
  double ll_r_ = 0.0, event_eta_ = 0.0, cum_ = 0.0;
  std::array<double, kParameterCount> scale_{};
};

ParameterState initial_state(const DesignCache& d, const SamplerConfig& cfg) {
  const ModelConfiguration config = cfg.initial_config.value_or(ModelConfiguration::full());
  ParameterState s;
  s.config = config;
  try {
    s = fit_mle(d, config).state;
  } catch (const NumericalError&) {
    s.beta = {};
    s.gamma = {};
    s.shape = 1.0;
    double total_time = std::accumulate(d.time.begin(), d.time.end(), 0.0);
    s.rate = d.event_count > 0.0 && total_time > 0.0 ? d.event_count / total_time : 1.0;
  }
  s.config = config;
  s.zero_inactive();
  return s;
}

void jitter(ParameterState& s, double sd, Rng& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  s.beta[0] += normal(rng);
  for (std::size_t j = 0; j < kResponseTerms; ++j)
    if (s.config.response.z[j]) s.beta[j + 1] += normal(rng);
  for (std::size_t j = 0; j < kSurvivalTerms; ++j)
    if (s.config.survival.w[j]) s.gamma[j] += normal(rng);
  s.shape *= std::exp(normal(rng));
  s.rate *= std::exp(normal(rng));
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

void SamplerConfig::validate() const {
  if (chains < 1) throw InputError("chains must be at least 1");
  if (thin < 1) throw InputError("thin must be at least 1");
  if (burn_in >= iterations) throw InputError("burn_in must be smaller than iterations");
  if (adapt_window < 1) throw InputError("adapt_window must be at least 1");
  if (!(proposal_sd_init > 0.0)) throw InputError("proposal_sd_init must be positive");
  if (!(birth_proposal_sd > 0.0)) throw InputError("birth_proposal_sd must be positive");
  if (initial_config && !initial_config->satisfies_hierarchy())
    throw InputError("initial configuration violates a hierarchy constraint");
}

std::size_t PosteriorDraws::total() const noexcept {
  std::size_t n = 0;
  for (const auto& c : chains) n += c.size();
  return n;
}

std::vector<ParameterState> PosteriorDraws::pooled() const {
  std::vector<ParameterState> all;
  all.reserve(total());
  for (const auto& c : chains) all.insert(all.end(), c.begin(), c.end());
  return all;
}

PosteriorDraws run_mcmc(const DesignCache& design, const PriorSpec& prior,
                        const SamplerConfig& config) {
  config.validate();
  prior.validate();
  const ParameterState start = initial_state(design, config);

  PosteriorDraws out;
  out.chains.resize(config.chains);
  out.iterations.resize(config.chains);
  out.stats.resize(config.chains);
  parallel_for(config.chains, config.threads, [&](std::size_t c) {
    const std::uint64_t seed = derive_seed(config.seed, {c});
    ParameterState s = start;
    if (c > 0) {
      Rng jitter_rng(derive_seed(seed, {0x6a}));
      jitter(s, config.proposal_sd_init, jitter_rng);
    }
    Chain chain(design, prior, config, s, seed);
    const std::size_t kept = (config.iterations - config.burn_in) / config.thin;
    out.chains[c].reserve(kept);
    out.iterations[c].reserve(kept);
    chain.run(out.chains[c], out.iterations[c], out.stats[c]);
  });
  return out;
}

PosteriorDraws run_mcmc(const Dataset& data, const PriorSpec& prior, const SamplerConfig& config) {
  return run_mcmc(DesignCache(data), prior, config);
}

std::pair<double, double> hpd_interval(std::span<const double> samples, double mass) {
  if (samples.empty()) throw InputError("hpd_interval needs samples");
  if (!(mass > 0.0 && mass <= 1.0)) throw InputError("hpd mass must lie in (0,1]");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const auto k = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n) - 1e-9)), 1, n);
  std::size_t best = 0;
  double width = kInf;
  for (std::size_t i = 0; i + k <= n; ++i) {
    const double w = s[i + k - 1] - s[i];
    if (w < width) {
      width = w;
      best = i;
    }
  }
  return {s[best], s[best + k - 1]};
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::span<const double>> halves;
  for (const auto& c : chains) {
    const std::size_t h = c.size() / 2;
    if (h < 2) throw InputError("split_rhat needs at least 4 draws per chain");
    halves.emplace_back(c.data(), h);
    halves.emplace_back(c.data() + c.size() - h, h);
  }
  std::size_t n = halves.front().size();
  for (const auto& h : halves) n = std::min(n, h.size());
  const double m = static_cast<double>(halves.size());
  const double nn = static_cast<double>(n);
  std::vector<double> means, vars;
  for (auto h : halves) {
    h = h.first(n);
    const double mu = mean_of(h);
    double ss = 0.0;
    for (double x : h) ss += (x - mu) * (x - mu);
    means.push_back(mu);
    vars.push_back(ss / (nn - 1.0));
  }
  const double grand = mean_of(means);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= nn / (m - 1.0);
  const double w = mean_of(vars);
  if (w == 0.0) return b == 0.0 ? 1.0 : kInf;
  const double var_plus = (nn - 1.0) / nn * w + b / nn;
  return std::sqrt(var_plus / w);
}

std::size_t PosteriorSummary::top_response() const {
  return static_cast<std::size_t>(
      std::max_element(response_probs.begin(), response_probs.end()) - response_probs.begin());
}

std::size_t PosteriorSummary::top_survival() const {
  return static_cast<std::size_t>(
      std::max_element(survival_probs.begin(), survival_probs.end()) - survival_probs.begin());
}

PosteriorSummary summarize_posterior(const PosteriorDraws& draws, double hpd_mass) {
  const std::size_t total = draws.total();
  if (total == 0) throw InputError("no posterior draws to summarize");
  PosteriorSummary out;
  out.draws = total;
  const auto& names = parameter_names();

  std::vector<std::vector<std::vector<double>>> per_chain(
      kParameterCount, std::vector<std::vector<double>>(draws.chains.size()));
  std::array<std::size_t, kParameterCount> included{};
  std::array<std::size_t, kResponseModels> rcount{};
  std::array<std::size_t, kSurvivalModels> scount{};
  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    for (const auto& s : draws.chains[c]) {
      if (!s.config.satisfies_hierarchy() || !s.satisfies_invariants())
        throw InputError("posterior draw violates the model constraints");
      ++rcount[classify(s.config.response)];
      ++scount[classify(s.config.survival)];
      const auto v = s.flatten();
      for (std::size_t k = 0; k < kParameterCount; ++k) per_chain[k][c].push_back(v[k]);
      ++included[0];
      for (std::size_t j = 0; j < kResponseTerms; ++j) included[j + 1] += s.config.response.z[j];
      for (std::size_t j = 0; j < kSurvivalTerms; ++j)
        included[kBetaSize + j] += s.config.survival.w[j];
      included[kShapeSlot] += 1;
      included[kRateSlot] += 1;
    }
  }
  const double n = static_cast<double>(total);
  for (std::size_t i = 0; i < kResponseModels; ++i) out.response_probs[i] = rcount[i] / n;
  for (std::size_t i = 0; i < kSurvivalModels; ++i) out.survival_probs[i] = scount[i] / n;

  bool rhat_ok = true;
  for (const auto& c : draws.chains) rhat_ok = rhat_ok && c.size() >= 4;
  for (std::size_t k = 0; k < kParameterCount; ++k) {
    std::vector<double> all;
    all.reserve(total);
    for (const auto& c : per_chain[k]) all.insert(all.end(), c.begin(), c.end());
    auto& p = out.parameters[k];
    p.name = names[k];
    p.mean = mean_of(all);
    double ss = 0.0;
    for (double x : all) ss += (x - p.mean) * (x - p.mean);
    p.sd = total > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    std::tie(p.hpd_lower, p.hpd_upper) = hpd_interval(all, hpd_mass);
    p.rhat = rhat_ok ? split_rhat(per_chain[k]) : std::numeric_limits<double>::quiet_NaN();
    p.inclusion = included[k] / n;
  }
  return out;
}

std::string format_draws(const PosteriorDraws& draws) {
  std::string out = "iteration,chain,response_model,survival_model";
  for (const char* name : parameter_names()) out += std::string(",") + name;
  out += '\n';
  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    for (std::size_t i = 0; i < draws.chains[c].size(); ++i) {
      const auto& s = draws.chains[c][i];
      out += std::to_string(draws.iterations[c][i]) + ',' + std::to_string(c) + ',' +
             s.config.response_label() + ',' + s.config.survival_label();
      for (double v : s.flatten()) out += ',' + io::format_double(v);
      out += '\n';
    }
  }
  return out;
}

void write_draws(const std::string& path, const PosteriorDraws& draws) {
  io::write_file(path, format_draws(draws));
}

PosteriorDraws parse_draws(std::string_view text) {
  PosteriorDraws out;
  std::size_t line_no = 0, pos = 0;
  bool header = true;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (io::trim(line).empty()) continue;
    const auto fields = io::split_csv_line(line);
    auto fail = [&](const std::string& what) {
      return InputError("draws line " + std::to_string(line_no) + ": " + what);
    };
    if (header) {
      header = false;
      if (fields.size() != 4 + kParameterCount || io::trim(fields[0]) != "iteration")
        throw fail("unexpected header");
      continue;
    }
    if (fields.size() != 4 + kParameterCount)
      throw fail("expected " + std::to_string(4 + kParameterCount) + " fields");
    const auto iter = io::parse_int(io::trim(fields[0]));
    const auto chain = io::parse_int(io::trim(fields[1]));
    if (!iter || !chain || *chain < 0 || *iter < 0) throw fail("bad iteration or chain");
    ParameterState s;
    try {
      s.config = ModelConfiguration::from_labels(io::trim(fields[2]), io::trim(fields[3]));
    } catch (const InputError& e) {
      throw fail(e.what());
    }
    std::array<double, kParameterCount> v{};
    for (std::size_t k = 0; k < kParameterCount; ++k) {
      const auto x = io::parse_double(io::trim(fields[4 + k]));
      if (!x || !std::isfinite(*x))
        throw fail(std::string("bad value for ") + parameter_names()[k]);
      v[k] = *x;
    }
    std::copy_n(v.begin(), kBetaSize, s.beta.begin());
    std::copy_n(v.begin() + kBetaSize, kGammaSize, s.gamma.begin());
    s.shape = v[kShapeSlot];
    s.rate = v[kRateSlot];
    if (!s.satisfies_invariants())
      throw fail("inactive coefficient is nonzero or Weibull parameter not positive");
    const auto c = static_cast<std::size_t>(*chain);
    if (c >= out.chains.size()) {
      out.chains.resize(c + 1);
      out.iterations.resize(c + 1);
    }
    out.chains[c].push_back(s);
    out.iterations[c].push_back(static_cast<std::size_t>(*iter));
  }
  if (header) throw InputError("draws file is empty");
  std::erase_if(out.chains, [](const auto& c) { return c.empty(); });
  std::erase_if(out.iterations, [](const auto& c) { return c.empty(); });
  out.stats.resize(out.chains.size());
  if (out.total() == 0) throw InputError("draws file has no draws");
  return out;
}

PosteriorDraws load_draws(const std::string& path) {
  try {
    return parse_draws(io::read_file(path));
  } catch (const InputError& e) {
    const std::string msg = e.what();
    if (msg.find(path) != std::string::npos) throw;
    throw InputError(path + ": " + msg);
  }
}

std::string format_coefficient_table(const PosteriorSummary& s) {
  std::string out = "parameter,mean,sd,hpd_lower,hpd_upper,inclusion,rhat\n";
  for (const auto& p : s.parameters)
    out += p.name + ',' + io::format_double(p.mean) + ',' + io::format_double(p.sd) + ',' +
           io::format_double(p.hpd_lower) + ',' + io::format_double(p.hpd_upper) + ',' +
           io::format_double(p.inclusion) + ',' + io::format_double(p.rhat) + '\n';
  return out;
}

std::string format_model_table(const PosteriorSummary& s, const std::vector<double>* prior_r,
                               const std::vector<double>* prior_s) {
  std::string out = "family,model,indicators,prior,posterior\n";
  auto row = [&](ModelFamily f, std::size_t i, double post, const std::vector<double>* pr) {
    std::string ind;
    for (auto b : family_indicators(f, i)) ind += static_cast<char>('0' + b);
    out += std::string(f == ModelFamily::response ? "response" : "survival") + ',' +
           model_label(f, i) + ',' + ind + ',' + (pr ? io::format_double((*pr)[i]) : "NA") + ',' +
           io::format_double(post) + '\n';
  };
  for (std::size_t i = 0; i < kResponseModels; ++i)
    row(ModelFamily::response, i, s.response_probs[i], prior_r);
  for (std::size_t i = 0; i < kSurvivalModels; ++i)
    row(ModelFamily::survival, i, s.survival_probs[i], prior_s);
  return out;
}

}  // namespace medbma
