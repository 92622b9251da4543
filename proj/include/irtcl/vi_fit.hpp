#pragma once

// Stochastic variational inference for the hierarchical Rasch model.
//
// Model:
//   theta_j | m_t, u_t ~ N(m_t, 1/u_t)      b_i | m_b, u_b ~ N(m_b, 1/u_b)
//   m_t, m_b ~ N(mu0, v0)                   u_t, u_b ~ Gamma(shape, rate)
//   z_ij ~ Bernoulli(sigmoid(theta_j - b_i))
//
// Mean-field family: Gaussian factors for theta, b, m_t, m_b and log-normal
// factors for the precisions u_t, u_b. Every prior and entropy term has a
// closed-form expectation. The likelihood gradient is sampled through the
// reparameterization x_ij = (mu_j - mu_i) + sqrt(s_j^2 + s_i^2) * eps_ij; the
// recorded ELBO evaluates the same expectation by quadrature, so the trace is
// free of sampling noise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"

#include "irtcl/csv.hpp"
#include "irtcl/difficulty.hpp"
#include "irtcl/error.hpp"
#include "irtcl/log.hpp"
#include "irtcl/rasch.hpp"

namespace irtcl {

struct HierarchicalPriorConfig {
  double mean_prior_mu = 0.0;
  double mean_prior_var = 1e6;
  double precision_gamma_shape = 1.0;
  double precision_gamma_rate = 1.0;

  bool operator==(const HierarchicalPriorConfig&) const = default;

  void validate() const {
    require(std::isfinite(mean_prior_mu), "prior: mean_prior_mu must be finite");
    require(mean_prior_var > 0 && std::isfinite(mean_prior_var), "prior: mean_prior_var must be > 0");
    require(precision_gamma_shape > 0, "prior: precision_gamma_shape must be > 0");
    require(precision_gamma_rate > 0, "prior: precision_gamma_rate must be > 0");
  }
};

struct FitConfig {
  std::size_t max_steps = 2000;
  double learning_rate = 0.1;
  std::size_t mc_samples = 1;
  std::size_t batch_items = 0;  // 0 = all items every step
  std::uint64_t seed = 0;
  double tol_elbo_rel = 1e-5;
  std::size_t patience = 50;

  bool operator==(const FitConfig&) const = default;

  void validate() const {
    require(max_steps >= 1, "fit: max_steps must be >= 1");
    require(learning_rate > 0 && std::isfinite(learning_rate), "fit: learning_rate must be > 0");
    require(mc_samples >= 1, "fit: mc_samples must be >= 1");
    require(tol_elbo_rel >= 0, "fit: tol_elbo_rel must be >= 0");
    require(patience >= 1, "fit: patience must be >= 1");
  }
};

/// Gaussian factor in (mean, log standard deviation) form.
struct GaussianFactor {
  double mu = 0.0;
  double log_sigma = 0.0;
  double sigma() const { return std::exp(log_sigma); }
};

struct VariationalPosterior {
  std::vector<ItemId> items;
  std::vector<GaussianFactor> b;
  std::vector<SubjectId> subjects;
  std::vector<GaussianFactor> theta;
  GaussianFactor m_theta, m_b;
  GaussianFactor log_u_theta, log_u_b;  // log-normal factors: parameters of log u
  std::vector<double> elbo;
  bool converged = false;

  bool fitted() const { return !elbo.empty(); }
};

/// Smoothing window applied to the ELBO trace by the stopping rule.
inline constexpr std::size_t kElboSmoothingWindow = 20;

/// Trailing moving average with the given window (shorter at the start).
inline std::vector<double> smooth_trailing(std::span<const double> v, std::size_t window) {
  std::vector<double> out(v.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < v.size(); ++t) {
    acc += v[t];
    if (t >= window) acc -= v[t - window];
    out[t] = acc / static_cast<double>(std::min(t + 1, window));
  }
  return out;
}

namespace detail {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

// Three-point Gauss-Hermite rule for E[f(eps)], eps ~ N(0, 1).
inline constexpr std::array<double, 3> kGhNodes{0.0, 1.7320508075688772, -1.7320508075688772};
inline constexpr std::array<double, 3> kGhWeights{2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0};

// Adam ascent on a flat parameter vector with lazily updated coordinates.
class AdamAscent {
public:
  AdamAscent(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  void begin_step() {
    ++t_;
    c1_ = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    c2_ = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  }

  void shrink(double f) { scale_ *= f; }
  void update(std::size_t k, double& param, double grad) {
    m_[k] = kBeta1 * m_[k] + (1.0 - kBeta1) * grad;
    v_[k] = kBeta2 * v_[k] + (1.0 - kBeta2) * grad * grad;
    param += lr_ * scale_ * (m_[k] / c1_) / (std::sqrt(v_[k] / c2_) + kEps);
  }

private:
  static constexpr double kBeta1 = 0.7;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  double scale_ = 1.0;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
  double c1_ = 1.0, c2_ = 1.0;
};

// Expected log N(x | m, 1/u) under the factors and its gradients.
struct NormalPriorTerm {
  double value = 0.0;
  double d_x_mu = 0.0, d_x_ls = 0.0;
  double d_m_mu = 0.0, d_m_ls = 0.0;
  double d_u_mu = 0.0, d_u_ls = 0.0;
};

inline NormalPriorTerm normal_prior_term(const GaussianFactor& x, const GaussianFactor& m,
                                         const GaussianFactor& log_u) {
  double sx2 = std::exp(2 * x.log_sigma);
  double sm2 = std::exp(2 * m.log_sigma);
  double su2 = std::exp(2 * log_u.log_sigma);
  double eu = std::exp(log_u.mu + 0.5 * su2);
  double diff = x.mu - m.mu;
  double d2 = diff * diff + sx2 + sm2;
  NormalPriorTerm t;
  t.value = -kHalfLog2Pi + 0.5 * log_u.mu - 0.5 * eu * d2;
  t.d_x_mu = -eu * diff;
  t.d_x_ls = -eu * sx2;
  t.d_m_mu = eu * diff;
  t.d_m_ls = -eu * sm2;
  t.d_u_mu = 0.5 - 0.5 * eu * d2;
  t.d_u_ls = -0.5 * d2 * eu * su2;
  return t;
}

}  // namespace detail

/// Fits the hierarchical 1PL model by stochastic gradient ascent on the ELBO.
/// Deterministic given `cfg.seed`. Throws DivergenceError on a non-finite ELBO.
inline VariationalPosterior fit_vi(const ResponseMatrix& z, const HierarchicalPriorConfig& prior,
                                   const FitConfig& cfg) {
  prior.validate();
  cfg.validate();
  if (z.empty()) throw ValidationError("fit_vi: response matrix is empty");
  {
    auto counts = z.subject_counts();
    for (std::size_t j = 0; j < counts.size(); ++j)
      if (counts[j] == 0) throw ValidationError("fit_vi: subject '" + z.subjects()[j].str() + "' has no responses");
  }

  const std::size_t n_items = z.n_items();
  const std::size_t n_subj = z.n_subjects();
  const std::size_t batch = (cfg.batch_items == 0 || cfg.batch_items >= n_items) ? n_items : cfg.batch_items;
  const double item_scale = static_cast<double>(n_items) / static_cast<double>(batch);

  VariationalPosterior q;
  q.items = z.items();
  q.subjects = z.subjects();
  q.b.assign(n_items, GaussianFactor{});
  q.theta.assign(n_subj, GaussianFactor{});

  // Flat parameter layout for the optimizer.
  const std::size_t off_th = 0;
  const std::size_t off_b = 2 * n_subj;
  const std::size_t off_hyper = off_b + 2 * n_items;
  detail::AdamAscent adam(off_hyper + 8, cfg.learning_rate);

  std::vector<double> g_th_mu(n_subj), g_th_ls(n_subj);
  std::vector<double> g_b_mu(n_items), g_b_ls(n_items);
  std::vector<std::uint32_t> order(n_items);
  std::iota(order.begin(), order.end(), 0u);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double v0 = prior.mean_prior_var;
  const double a0 = prior.precision_gamma_shape;
  const double r0 = prior.precision_gamma_rate;
  const double inv_k = 1.0 / static_cast<double>(cfg.mc_samples);

  std::size_t cursor = n_items;  // forces a shuffle before the first batch when batching
  std::vector<double> smoothed;
  double window_sum = 0.0;
  q.elbo.reserve(cfg.max_steps);

  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    std::span<const std::uint32_t> batch_items;
    if (batch == n_items) {
      batch_items = order;
    } else {
      if (cursor + batch > n_items) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch_items = std::span<const std::uint32_t>(order).subspan(cursor, batch);
      cursor += batch;
    }

    std::fill(g_th_mu.begin(), g_th_mu.end(), 0.0);
    std::fill(g_th_ls.begin(), g_th_ls.end(), 0.0);
    double g_mt_mu = 0, g_mt_ls = 0, g_mb_mu = 0, g_mb_ls = 0;
    double g_ut_mu = 0, g_ut_ls = 0, g_ub_mu = 0, g_ub_ls = 0;
    double elbo = 0.0;

    std::vector<double> th_var(n_subj);
    for (std::size_t j = 0; j < n_subj; ++j) th_var[j] = std::exp(2 * q.theta[j].log_sigma);

    // Likelihood, item prior and item entropy for the batch.
    double item_terms = 0.0;
    for (std::uint32_t i : batch_items) {
      const auto& bi = q.b[i];
      double b_var = std::exp(2 * bi.log_sigma);
      double gmu = 0.0, gls = 0.0;
      double lik = 0.0;
      for (const auto& r : z.item_responses(i)) {
        const auto& tj = q.theta[r.subject];
        double mean = tj.mu - bi.mu;
        double sd = std::sqrt(th_var[r.subject] + b_var);
        for (std::size_t k = 0; k < detail::kGhNodes.size(); ++k) {
          double x = mean + sd * detail::kGhNodes[k];
          lik += detail::kGhWeights[k] * (r.value ? detail::log_sigmoid(x) : detail::log_sigmoid(-x));
        }
        for (std::size_t k = 0; k < cfg.mc_samples; ++k) {
          double eps = normal(rng);
          double g = inv_k * (r.value - detail::sigmoid(mean + sd * eps));
          g_th_mu[r.subject] += item_scale * g;
          g_th_ls[r.subject] += item_scale * g * eps * th_var[r.subject] / sd;
          gmu -= g;
          gls += g * eps * b_var / sd;
        }
      }
      auto pt = detail::normal_prior_term(bi, q.m_b, q.log_u_b);
      gmu += pt.d_x_mu;
      gls += pt.d_x_ls + 1.0;  // +1 from the entropy of the factor
      g_b_mu[i] = gmu;
      g_b_ls[i] = gls;
      g_mb_mu += item_scale * pt.d_m_mu;
      g_mb_ls += item_scale * pt.d_m_ls;
      g_ub_mu += item_scale * pt.d_u_mu;
      g_ub_ls += item_scale * pt.d_u_ls;
      item_terms += lik + pt.value + detail::kHalfLog2Pi + 0.5 + bi.log_sigma;
    }
    elbo += item_scale * item_terms;

    // Subject prior and entropy.
    for (std::size_t j = 0; j < n_subj; ++j) {
      auto pt = detail::normal_prior_term(q.theta[j], q.m_theta, q.log_u_theta);
      g_th_mu[j] += pt.d_x_mu;
      g_th_ls[j] += pt.d_x_ls + 1.0;
      g_mt_mu += pt.d_m_mu;
      g_mt_ls += pt.d_m_ls;
      g_ut_mu += pt.d_u_mu;
      g_ut_ls += pt.d_u_ls;
      elbo += pt.value + detail::kHalfLog2Pi + 0.5 + q.theta[j].log_sigma;
    }

    // Hyper-priors and hyper entropies.
    auto mean_hyper = [&](const GaussianFactor& m, double& gmu, double& gls) {
      double sm2 = std::exp(2 * m.log_sigma);
      double d = m.mu - prior.mean_prior_mu;
      elbo += -0.5 * std::log(2 * M_PI * v0) - (d * d + sm2) / (2 * v0);
      elbo += detail::kHalfLog2Pi + 0.5 + m.log_sigma;
      gmu += -d / v0;
      gls += -sm2 / v0 + 1.0;
    };
    auto precision_hyper = [&](const GaussianFactor& lu, double& gmu, double& gls) {
      double su2 = std::exp(2 * lu.log_sigma);
      double eu = std::exp(lu.mu + 0.5 * su2);
      elbo += a0 * std::log(r0) - std::lgamma(a0) + (a0 - 1.0) * lu.mu - r0 * eu;
      elbo += lu.mu + detail::kHalfLog2Pi + 0.5 + lu.log_sigma;  // log-normal entropy
      gmu += (a0 - 1.0) - r0 * eu + 1.0;
      gls += -r0 * eu * su2 + 1.0;
    };
    mean_hyper(q.m_theta, g_mt_mu, g_mt_ls);
    mean_hyper(q.m_b, g_mb_mu, g_mb_ls);
    precision_hyper(q.log_u_theta, g_ut_mu, g_ut_ls);
    precision_hyper(q.log_u_b, g_ub_mu, g_ub_ls);

    if (!std::isfinite(elbo)) throw DivergenceError("fit_vi: non-finite ELBO", step);
    q.elbo.push_back(elbo);

    adam.begin_step();
    for (std::size_t j = 0; j < n_subj; ++j) {
      adam.update(off_th + 2 * j, q.theta[j].mu, g_th_mu[j]);
      adam.update(off_th + 2 * j + 1, q.theta[j].log_sigma, g_th_ls[j]);
    }
    for (std::uint32_t i : batch_items) {
      adam.update(off_b + 2 * i, q.b[i].mu, g_b_mu[i]);
      adam.update(off_b + 2 * i + 1, q.b[i].log_sigma, g_b_ls[i]);
    }
    adam.update(off_hyper + 0, q.m_theta.mu, g_mt_mu);
    adam.update(off_hyper + 1, q.m_theta.log_sigma, g_mt_ls);
    adam.update(off_hyper + 2, q.m_b.mu, g_mb_mu);
    adam.update(off_hyper + 3, q.m_b.log_sigma, g_mb_ls);
    adam.update(off_hyper + 4, q.log_u_theta.mu, g_ut_mu);
    adam.update(off_hyper + 5, q.log_u_theta.log_sigma, g_ut_ls);
    adam.update(off_hyper + 6, q.log_u_b.mu, g_ub_mu);
    adam.update(off_hyper + 7, q.log_u_b.log_sigma, g_ub_ls);

    // Stopping rule on the smoothed trace.
    window_sum += elbo;
    if (q.elbo.size() > kElboSmoothingWindow) window_sum -= q.elbo[q.elbo.size() - 1 - kElboSmoothingWindow];
    double s = window_sum / static_cast<double>(std::min(q.elbo.size(), kElboSmoothingWindow));
    // Constant-step Adam jitters around the optimum; halving the step whenever
    // the smoothed trace drops keeps the reported ELBO climbing.
    if (!smoothed.empty() && s < smoothed.back()) adam.shrink(0.5);
    smoothed.push_back(s);
    std::size_t t = smoothed.size() - 1;
    if (t >= kElboSmoothingWindow + cfg.patience) {
      double before = smoothed[t - cfg.patience];
      double rel = (s - before) / std::max(std::abs(before), 1e-12);
      if (rel < cfg.tol_elbo_rel) {
        q.converged = true;
        log::info("fit_vi: converged at step ", step, " (relative gain ", rel, ")");
        break;
      }
    }
    if (log::enabled(log::Level::debug) && step % 100 == 0) log::debug("fit_vi: step ", step, " elbo ", elbo);
  }

  for (const auto& f : q.b)
    if (!std::isfinite(f.mu) || !std::isfinite(f.log_sigma))
      throw DivergenceError("fit_vi: non-finite item factor", q.elbo.size());
  for (const auto& f : q.theta)
    if (!std::isfinite(f.mu) || !std::isfinite(f.log_sigma))
      throw DivergenceError("fit_vi: non-finite subject factor", q.elbo.size());
  return q;
}

/// Posterior difficulty means as a difficulty table.
inline DifficultyTable extract_difficulties(const VariationalPosterior& post) {
  if (!post.fitted()) throw ValidationError("extract_difficulties: posterior has not been fitted");
  if (post.items.empty()) throw ValidationError("extract_difficulties: posterior has no items");
  DifficultyTable t(DifficultySource::irt_ac);
  for (std::size_t i = 0; i < post.items.size(); ++i) t.set(post.items[i], post.b[i].mu);
  return t;
}

// ---- posterior file ---------------------------------------------------------

inline nlohmann::json posterior_to_json(const VariationalPosterior& q) {
  nlohmann::json j;
  auto items = nlohmann::json::array();
  for (std::size_t i = 0; i < q.items.size(); ++i)
    items.push_back({{"item_id", q.items[i].str()}, {"b_mu", q.b[i].mu}, {"b_sigma", q.b[i].sigma()}});
  auto subjects = nlohmann::json::array();
  for (std::size_t k = 0; k < q.subjects.size(); ++k)
    subjects.push_back(
        {{"subject_id", q.subjects[k].str()}, {"theta_mu", q.theta[k].mu}, {"theta_sigma", q.theta[k].sigma()}});
  auto gauss = [](const GaussianFactor& f) { return nlohmann::json{{"mu", f.mu}, {"sigma", f.sigma()}}; };
  auto lognormal = [](const GaussianFactor& f) { return nlohmann::json{{"log_mu", f.mu}, {"log_sigma", f.sigma()}}; };
  j["items"] = std::move(items);
  j["subjects"] = std::move(subjects);
  j["hyper"] = {{"m_theta", gauss(q.m_theta)},
                {"m_b", gauss(q.m_b)},
                {"u_theta", lognormal(q.log_u_theta)},
                {"u_b", lognormal(q.log_u_b)},
                {"converged", q.converged}};
  j["elbo"] = q.elbo;
  return j;
}

inline VariationalPosterior posterior_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("items") && j.contains("subjects") && j.contains("elbo"),
          "posterior file: expected items, subjects and elbo");
  auto sigma_to_log = [](double s) {
    require(s > 0 && std::isfinite(s), "posterior file: sigma must be positive and finite");
    return std::log(s);
  };
  VariationalPosterior q;
  for (const auto& e : j.at("items")) {
    q.items.emplace_back(e.at("item_id").get<std::string>());
    q.b.push_back({e.at("b_mu").get<double>(), sigma_to_log(e.at("b_sigma").get<double>())});
  }
  for (const auto& e : j.at("subjects")) {
    q.subjects.emplace_back(e.at("subject_id").get<std::string>());
    q.theta.push_back({e.at("theta_mu").get<double>(), sigma_to_log(e.at("theta_sigma").get<double>())});
  }
  if (j.contains("hyper")) {
    const auto& h = j.at("hyper");
    auto gauss = [&](const char* k) {
      return GaussianFactor{h.at(k).at("mu").get<double>(), sigma_to_log(h.at(k).at("sigma").get<double>())};
    };
    auto lognormal = [&](const char* k) {
      return GaussianFactor{h.at(k).at("log_mu").get<double>(), sigma_to_log(h.at(k).at("log_sigma").get<double>())};
    };
    q.m_theta = gauss("m_theta");
    q.m_b = gauss("m_b");
    q.log_u_theta = lognormal("u_theta");
    q.log_u_b = lognormal("u_b");
    q.converged = h.value("converged", false);
  }
  q.elbo = j.at("elbo").get<std::vector<double>>();
  return q;
}

inline void write_posterior(const std::filesystem::path& path, const VariationalPosterior& q) {
  csv::write_atomic(path, posterior_to_json(q).dump(1) + "\n");
}

inline VariationalPosterior read_posterior(const std::filesystem::path& path) {
  try {
    return posterior_from_json(nlohmann::json::parse(csv::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace irtcl
