#pragma once

// Maximum-likelihood ability estimation against known item difficulties,
// plus the stagnation bump applied to the selection threshold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "irtcl/error.hpp"
#include "irtcl/log.hpp"
#include "irtcl/nelder_mead.hpp"
#include "irtcl/rasch.hpp"

namespace irtcl {

struct AbilityEstConfig {
  std::size_t subsample_size = 1000;
  double search_lo = -6.0;
  double search_hi = 6.0;
  double nm_tol = 1e-4;
  std::size_t nm_max_iter = 100;
  bool resample_each_epoch = true;
  std::uint64_t seed = 0;

  bool operator==(const AbilityEstConfig&) const = default;

  void validate() const {
    require(subsample_size >= 1, "ability: subsample_size must be >= 1");
    require(std::isfinite(search_lo) && std::isfinite(search_hi) && search_lo < search_hi,
            "ability: need finite search_lo < search_hi");
    require(nm_tol > 0, "ability: nm_tol must be > 0");
    require(nm_max_iter >= 1, "ability: nm_max_iter must be >= 1");
  }
};

struct AbilityEstimate {
  double theta_hat = 0.0;
  std::size_t epoch = 0;
  std::size_t n_responses_used = 0;
  double bump_offset = 0.0;
  double threshold = 0.0;  // theta_hat + bump_offset
};

/// Graded responses: 1 where the prediction equals the gold label.
template <typename Label>
std::vector<std::uint8_t> response_pattern(std::span<const Label> gold, std::span<const Label> predicted) {
  if (gold.size() != predicted.size())
    throw ValidationError("response_pattern: " + std::to_string(gold.size()) + " gold labels but " +
                          std::to_string(predicted.size()) + " predictions");
  if (gold.empty()) throw ValidationError("response_pattern: empty input");
  std::vector<std::uint8_t> z(gold.size());
  for (std::size_t k = 0; k < gold.size(); ++k) z[k] = gold[k] == predicted[k] ? 1 : 0;
  return z;
}

template <typename Label>
std::vector<std::uint8_t> response_pattern(const std::vector<Label>& gold, const std::vector<Label>& predicted) {
  return response_pattern(std::span<const Label>(gold), std::span<const Label>(predicted));
}

/// Sum over responses of log p(z_k | theta, b_k). NaN difficulties are skipped.
inline double ability_log_likelihood(std::span<const std::uint8_t> pattern, std::span<const double> difficulties,
                                     double theta) {
  double ll = 0.0;
  for (std::size_t k = 0; k < pattern.size(); ++k) {
    if (std::isnan(difficulties[k])) continue;
    double x = theta - difficulties[k];
    ll += pattern[k] ? detail::log_sigmoid(x) : detail::log_sigmoid(-x);
  }
  return ll;
}

/// Maximum-likelihood ability on [search_lo, search_hi] by Nelder-Mead from
/// the simplex {0, 1}. The bump fields are left at zero; see maybe_bump.
inline AbilityEstimate estimate_ability(std::span<const std::uint8_t> pattern, std::span<const double> difficulties,
                                        const AbilityEstConfig& cfg, std::size_t epoch = 0) {
  cfg.validate();
  if (pattern.empty()) throw ValidationError("estimate_ability: empty response pattern");
  if (pattern.size() != difficulties.size())
    throw ValidationError("estimate_ability: pattern and difficulties differ in length");
  std::size_t used = 0;
  for (std::size_t k = 0; k < difficulties.size(); ++k) {
    if (std::isnan(difficulties[k])) continue;
    if (!std::isfinite(difficulties[k])) throw ValidationError("estimate_ability: infinite difficulty");
    ++used;
  }
  if (used == 0) throw ValidationError("estimate_ability: every difficulty is NaN");

  NelderMeadOptions opt;
  opt.x_tol = cfg.nm_tol;
  opt.max_iter = cfg.nm_max_iter;
  auto neg_ll = [&](double theta) { return -ability_log_likelihood(pattern, difficulties, theta); };
  auto res = nelder_mead_1d(neg_ll, 0.0, 1.0, cfg.search_lo, cfg.search_hi, opt);

  AbilityEstimate est;
  est.theta_hat = res.x;
  est.epoch = epoch;
  est.n_responses_used = used;
  est.threshold = res.x;
  return est;
}

inline constexpr double kStagnationBump = 0.1;

/// Applies the stagnation rule. An epoch "improves" when its theta_hat strictly
/// exceeds every earlier theta_hat. Each completed run of two consecutive
/// non-improving epochs adds 0.1 to the previous epoch's offset; an improving
/// epoch resets the offset to zero. `history` holds earlier epochs in order.
inline AbilityEstimate maybe_bump(const AbilityEstimate& current, std::span<const AbilityEstimate> history) {
  AbilityEstimate out = current;
  if (history.empty()) {
    out.bump_offset = 0.0;
    out.threshold = out.theta_hat;
    return out;
  }
  // Length of the current non-improving streak, counting `current`.
  std::size_t streak = 0;
  {
    std::vector<double> thetas;
    thetas.reserve(history.size() + 1);
    for (const auto& h : history) thetas.push_back(h.theta_hat);
    thetas.push_back(current.theta_hat);
    double best = thetas.front();
    for (std::size_t e = 1; e < thetas.size(); ++e) {
      if (thetas[e] > best) {
        best = thetas[e];
        streak = 0;
      } else {
        ++streak;
      }
    }
  }
  double prev = history.back().bump_offset;
  if (streak == 0) {
    out.bump_offset = 0.0;
  } else if (streak % 2 == 0) {
    out.bump_offset = prev + kStagnationBump;
  } else {
    out.bump_offset = prev;
  }
  out.threshold = out.theta_hat + out.bump_offset;
  return out;
}

inline AbilityEstimate maybe_bump(const AbilityEstimate& current, const std::vector<AbilityEstimate>& history) {
  return maybe_bump(current, std::span<const AbilityEstimate>(history));
}

/// Draws the per-epoch estimation subsample: uniform without replacement,
/// redrawn every epoch or fixed after the first draw.
class AbilitySampler {
public:
  explicit AbilitySampler(const AbilityEstConfig& cfg) : cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

  /// Sorted indices into a population of `n`.
  const std::vector<std::size_t>& draw(std::size_t n) {
    if (fixed_ && !cfg_.resample_each_epoch && last_n_ == n) return current_;
    current_.resize(n);
    std::iota(current_.begin(), current_.end(), std::size_t{0});
    if (cfg_.subsample_size < n) {
      // Partial Fisher-Yates over the first k slots.
      for (std::size_t k = 0; k < cfg_.subsample_size; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, n - 1);
        std::swap(current_[k], current_[pick(rng_)]);
      }
      current_.resize(cfg_.subsample_size);
      std::sort(current_.begin(), current_.end());
    }
    fixed_ = true;
    last_n_ = n;
    return current_;
  }

private:
  AbilityEstConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> current_;
  bool fixed_ = false;
  std::size_t last_n_ = 0;
};

}  // namespace irtcl
