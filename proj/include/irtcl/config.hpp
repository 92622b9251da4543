#pragma once

// One JSON document configuring every stage of the pipeline. Parsing is
// strict: unknown keys and wrongly typed values are rejected before any
// work starts.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "irtcl/ability.hpp"
#include "irtcl/benchmark.hpp"
#include "irtcl/crowd.hpp"
#include "irtcl/csv.hpp"
#include "irtcl/error.hpp"
#include "irtcl/student.hpp"
#include "irtcl/vi_fit.hpp"

namespace irtcl {

struct PathsConfig {
  std::string train;
  std::string val;
  std::string responses;
  std::string predictions;
  std::string gold;
  std::string difficulties;
  std::vector<std::string> traces;
  std::string summaries;
  std::string out = "out";

  bool operator==(const PathsConfig&) const = default;
};

struct AblationConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t jobs = 1;

  bool operator==(const AblationConfig&) const = default;
};

struct ReportConfig {
  double bin_width = 0.5;
  std::vector<double> bin_edges = default_bin_edges();

  bool operator==(const ReportConfig&) const = default;
};

/// Per-stage seeds are derived from `seed`; the stage sections carry no seeds
/// of their own.
struct RunConfig {
  std::uint64_t seed = 0;
  BenchmarkConfig benchmark;
  CrowdConfig crowd;
  HierarchicalPriorConfig prior;
  FitConfig fit;
  AbilityEstConfig ability;
  StudentConfig student;
  AblationConfig ablation;
  ReportConfig report;
  PathsConfig paths;

  bool operator==(const RunConfig&) const = default;

  void validate() const {
    benchmark.validate();
    crowd.validate();
    prior.validate();
    fit.validate();
    ability.validate();
    student.validate();
    require(!ablation.seeds.empty(), "config: ablation.seeds must be non-empty");
    require(ablation.jobs >= 1, "config: ablation.jobs must be >= 1");
    require(bin_width_ok(), "config: report.bin_width must be > 0");
    for (std::size_t k = 1; k < report.bin_edges.size(); ++k)
      require(report.bin_edges[k] > report.bin_edges[k - 1], "config: report.bin_edges must be strictly increasing");
    require(!report.bin_edges.empty(), "config: report.bin_edges must be non-empty");
    require(!paths.out.empty(), "config: paths.out must be non-empty");
  }

private:
  bool bin_width_ok() const { return report.bin_width > 0 && std::isfinite(report.bin_width); }
};

/// splitmix64 over (seed, stream): independent seeds for each pipeline stage.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum SeedStream : std::uint64_t { kBenchmarkStream = 1, kCrowdStream, kFitStream, kAbilityStream, kStudentStream };

namespace detail {

using nlohmann::json;

/// Reads members of one JSON object, recording which keys were consumed.
class ObjectReader {
public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ValidationError("config: '" + path_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    read(*it, dst, path_ + "." + key);
  }

  ObjectReader sub(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    auto it = j_.find(key);
    return ObjectReader(it == j_.end() ? empty : *it, path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ValidationError("config: unknown key '" + path_ + "." + k + "'");
  }

private:
  static void read(const json& v, double& dst, const std::string& where) {
    if (!v.is_number()) throw ValidationError("config: '" + where + "' must be a number");
    dst = v.get<double>();
  }
  static void read(const json& v, bool& dst, const std::string& where) {
    if (!v.is_boolean()) throw ValidationError("config: '" + where + "' must be a boolean");
    dst = v.get<bool>();
  }
  static void read(const json& v, std::string& dst, const std::string& where) {
    if (!v.is_string()) throw ValidationError("config: '" + where + "' must be a string");
    dst = v.get<std::string>();
  }
  template <typename T>
    requires std::is_unsigned_v<T>
  static void read(const json& v, T& dst, const std::string& where) {
    if (!v.is_number_unsigned()) throw ValidationError("config: '" + where + "' must be a non-negative integer");
    dst = v.get<T>();
  }
  template <typename T>
  static void read(const json& v, std::vector<T>& dst, const std::string& where) {
    if (!v.is_array()) throw ValidationError("config: '" + where + "' must be an array");
    dst.clear();
    for (std::size_t k = 0; k < v.size(); ++k) {
      T x{};
      read(v[k], x, where + "[" + std::to_string(k) + "]");
      dst.push_back(std::move(x));
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  detail::ObjectReader root(j, "$");
  root.get("seed", c.seed);

  auto b = root.sub("benchmark");
  b.get("n_train", c.benchmark.n_train);
  b.get("n_val", c.benchmark.n_val);
  b.get("n_features", c.benchmark.n_features);
  b.get("n_classes", c.benchmark.n_classes);
  b.get("separation", c.benchmark.separation);
  b.get("noise_frac", c.benchmark.noise_frac);
  b.get("boundary_frac", c.benchmark.boundary_frac);
  b.get("noisy_val", c.benchmark.noisy_val);
  b.get("vocab_size", c.benchmark.vocab_size);
  b.finish();

  auto cr = root.sub("crowd");
  cr.get("n_base_learners", c.crowd.n_base_learners);
  cr.get("variant_epochs", c.crowd.variant_epochs);
  cr.get("subsample_fracs", c.crowd.subsample_fracs);
  cr.get("label_flip_probs", c.crowd.label_flip_probs);
  cr.get("learner_lr", c.crowd.learner_lr);
  cr.get("learner_batch", c.crowd.learner_batch);
  cr.finish();

  auto pr = root.sub("prior");
  pr.get("mean_prior_mu", c.prior.mean_prior_mu);
  pr.get("mean_prior_var", c.prior.mean_prior_var);
  pr.get("precision_gamma_shape", c.prior.precision_gamma_shape);
  pr.get("precision_gamma_rate", c.prior.precision_gamma_rate);
  pr.finish();

  auto f = root.sub("fit");
  f.get("max_steps", c.fit.max_steps);
  f.get("learning_rate", c.fit.learning_rate);
  f.get("mc_samples", c.fit.mc_samples);
  f.get("batch_items", c.fit.batch_items);
  f.get("tol_elbo_rel", c.fit.tol_elbo_rel);
  f.get("patience", c.fit.patience);
  f.finish();

  auto a = root.sub("ability");
  a.get("subsample_size", c.ability.subsample_size);
  a.get("search_lo", c.ability.search_lo);
  a.get("search_hi", c.ability.search_hi);
  a.get("nm_tol", c.ability.nm_tol);
  a.get("nm_max_iter", c.ability.nm_max_iter);
  a.get("resample_each_epoch", c.ability.resample_each_epoch);
  a.finish();

  auto s = root.sub("student");
  std::string kind = c.student.model.kind == ModelKind::mlp ? "mlp" : "logistic";
  s.get("model", kind);
  if (kind == "mlp") c.student.model.kind = ModelKind::mlp;
  else if (kind == "logistic") c.student.model.kind = ModelKind::logistic;
  else throw ValidationError("config: '$.student.model' must be \"mlp\" or \"logistic\"");
  s.get("hidden", c.student.model.hidden);
  std::string opt = c.student.optimizer.kind == OptimizerKind::sgd ? "sgd" : "adamw";
  s.get("optimizer", opt);
  if (opt == "sgd") c.student.optimizer.kind = OptimizerKind::sgd;
  else if (opt == "adamw") c.student.optimizer.kind = OptimizerKind::adamw;
  else throw ValidationError("config: '$.student.optimizer' must be \"sgd\" or \"adamw\"");
  s.get("lr", c.student.optimizer.lr);
  s.get("weight_decay", c.student.optimizer.weight_decay);
  s.get("momentum", c.student.optimizer.momentum);
  s.get("batch_size", c.student.batch_size);
  s.get("max_epochs", c.student.max_epochs);
  s.get("early_stop_patience", c.student.early_stop_patience);
  std::string sched(to_string(c.student.scheduler));
  s.get("scheduler", sched);
  c.student.scheduler = scheduler_from(sched);
  s.finish();

  auto comp = root.sub("competence");
  comp.get("c0", c.student.competence_c0);
  comp.get("T", c.student.competence_T);
  comp.finish();

  auto ab = root.sub("ablation");
  ab.get("seeds", c.ablation.seeds);
  ab.get("jobs", c.ablation.jobs);
  ab.finish();

  auto rp = root.sub("report");
  rp.get("bin_width", c.report.bin_width);
  rp.get("bin_edges", c.report.bin_edges);
  rp.finish();

  auto p = root.sub("paths");
  p.get("train", c.paths.train);
  p.get("val", c.paths.val);
  p.get("responses", c.paths.responses);
  p.get("predictions", c.paths.predictions);
  p.get("gold", c.paths.gold);
  p.get("difficulties", c.paths.difficulties);
  p.get("traces", c.paths.traces);
  p.get("summaries", c.paths.summaries);
  p.get("out", c.paths.out);
  p.finish();

  root.finish();
  c.validate();
  return c;
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["benchmark"] = {{"n_train", c.benchmark.n_train},       {"n_val", c.benchmark.n_val},
                    {"n_features", c.benchmark.n_features}, {"n_classes", c.benchmark.n_classes},
                    {"separation", c.benchmark.separation}, {"noise_frac", c.benchmark.noise_frac},
                    {"boundary_frac", c.benchmark.boundary_frac}, {"noisy_val", c.benchmark.noisy_val},
                    {"vocab_size", c.benchmark.vocab_size}};
  j["crowd"] = {{"n_base_learners", c.crowd.n_base_learners}, {"variant_epochs", c.crowd.variant_epochs},
                {"subsample_fracs", c.crowd.subsample_fracs},   {"label_flip_probs", c.crowd.label_flip_probs},
                {"learner_lr", c.crowd.learner_lr},             {"learner_batch", c.crowd.learner_batch}};
  j["prior"] = {{"mean_prior_mu", c.prior.mean_prior_mu},
                {"mean_prior_var", c.prior.mean_prior_var},
                {"precision_gamma_shape", c.prior.precision_gamma_shape},
                {"precision_gamma_rate", c.prior.precision_gamma_rate}};
  j["fit"] = {{"max_steps", c.fit.max_steps},     {"learning_rate", c.fit.learning_rate},
              {"mc_samples", c.fit.mc_samples},   {"batch_items", c.fit.batch_items},
              {"tol_elbo_rel", c.fit.tol_elbo_rel}, {"patience", c.fit.patience}};
  j["ability"] = {{"subsample_size", c.ability.subsample_size}, {"search_lo", c.ability.search_lo},
                  {"search_hi", c.ability.search_hi},           {"nm_tol", c.ability.nm_tol},
                  {"nm_max_iter", c.ability.nm_max_iter},       {"resample_each_epoch", c.ability.resample_each_epoch}};
  j["student"] = {{"model", c.student.model.kind == ModelKind::mlp ? "mlp" : "logistic"},
                  {"hidden", c.student.model.hidden},
                  {"optimizer", c.student.optimizer.kind == OptimizerKind::sgd ? "sgd" : "adamw"},
                  {"lr", c.student.optimizer.lr},
                  {"weight_decay", c.student.optimizer.weight_decay},
                  {"momentum", c.student.optimizer.momentum},
                  {"batch_size", c.student.batch_size},
                  {"max_epochs", c.student.max_epochs},
                  {"early_stop_patience", c.student.early_stop_patience},
                  {"scheduler", std::string(to_string(c.student.scheduler))}};
  j["competence"] = {{"c0", c.student.competence_c0}, {"T", c.student.competence_T}};
  j["ablation"] = {{"seeds", c.ablation.seeds}, {"jobs", c.ablation.jobs}};
  j["report"] = {{"bin_width", c.report.bin_width}, {"bin_edges", c.report.bin_edges}};
  j["paths"] = {{"train", c.paths.train},
                {"val", c.paths.val},
                {"responses", c.paths.responses},
                {"predictions", c.paths.predictions},
                {"gold", c.paths.gold},
                {"difficulties", c.paths.difficulties},
                {"traces", c.paths.traces},
                {"summaries", c.paths.summaries},
                {"out", c.paths.out}};
  return j;
}

inline RunConfig parse_run_config(std::string_view text, const std::string& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(source + ": " + e.what());
  }
  return parse_run_config(j);
}

inline RunConfig read_run_config(const std::filesystem::path& path) {
  return parse_run_config(csv::read_file(path), path.string());
}

/// Stage configs with their seeds filled in from the run seed.
inline CrowdConfig crowd_config(const RunConfig& c, std::uint64_t seed) {
  CrowdConfig x = c.crowd;
  x.seed = derive_seed(seed, kCrowdStream);
  return x;
}
inline FitConfig fit_config(const RunConfig& c, std::uint64_t seed) {
  FitConfig x = c.fit;
  x.seed = derive_seed(seed, kFitStream);
  return x;
}
inline AbilityEstConfig ability_config(const RunConfig& c, std::uint64_t seed) {
  AbilityEstConfig x = c.ability;
  x.seed = derive_seed(seed, kAbilityStream);
  return x;
}
inline StudentConfig student_config(const RunConfig& c, std::uint64_t seed) {
  StudentConfig x = c.student;
  x.seed = derive_seed(seed, kStudentStream);
  return x;
}
inline BenchmarkConfig benchmark_config(const RunConfig& c, std::uint64_t seed) {
  BenchmarkConfig x = c.benchmark;
  x.seed = derive_seed(seed, kBenchmarkStream);
  return x;
}

}  // namespace irtcl
