#pragma once

// Curriculum training loop: per epoch, estimate the student's ability from a
// forward pass (no parameter update), pick the training subset the scheduler
// allows, run one epoch of mini-batch training on it, evaluate on the
// validation split, and stop early when validation accuracy plateaus.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "irtcl/ability.hpp"
#include "irtcl/csv.hpp"
#include "irtcl/curriculum.hpp"
#include "irtcl/difficulty.hpp"
#include "irtcl/error.hpp"
#include "irtcl/log.hpp"
#include "irtcl/model.hpp"

namespace irtcl {

enum class SchedulerKind { none, dds_mae, competence_linear, competence_root };

inline std::string_view to_string(SchedulerKind s) {
  switch (s) {
    case SchedulerKind::none: return "none";
    case SchedulerKind::dds_mae: return "dds-mae";
    case SchedulerKind::competence_linear: return "linear";
    case SchedulerKind::competence_root: return "root";
  }
  return "none";
}

/// Accepts the CLI spellings (none, dds-mae, linear, root) and the long forms.
inline SchedulerKind scheduler_from(std::string_view s) {
  if (s == "none" || s == "baseline") return SchedulerKind::none;
  if (s == "dds-mae" || s == "dds_mae") return SchedulerKind::dds_mae;
  if (s == "linear" || s == "competence_linear") return SchedulerKind::competence_linear;
  if (s == "root" || s == "competence_root") return SchedulerKind::competence_root;
  throw ValidationError("unknown scheduler '" + std::string(s) + "'");
}

struct StudentConfig {
  ModelSpec model{ModelKind::mlp, 128};
  OptimizerConfig optimizer{};
  std::size_t batch_size = 32;
  std::size_t max_epochs = 20;
  std::size_t early_stop_patience = 3;
  std::uint64_t seed = 0;
  SchedulerKind scheduler = SchedulerKind::none;
  double competence_c0 = 0.01;
  std::size_t competence_T = 0;  // 0 = max_epochs / 2

  bool operator==(const StudentConfig&) const = default;

  void validate() const {
    require(optimizer.lr > 0 && std::isfinite(optimizer.lr), "student: lr must be > 0");
    require(optimizer.weight_decay >= 0, "student: weight_decay must be >= 0");
    require(optimizer.momentum >= 0 && optimizer.momentum < 1, "student: momentum must lie in [0, 1)");
    require(batch_size >= 1, "student: batch_size must be >= 1");
    require(max_epochs >= 1, "student: max_epochs must be >= 1");
    require(early_stop_patience >= 1, "student: early_stop_patience must be >= 1");
    require(model.kind == ModelKind::logistic || model.hidden >= 1, "student: mlp needs hidden >= 1");
    competence_schedule().validate();
  }

  CompetenceSchedule competence_schedule() const {
    CompetenceSchedule s;
    s.c0 = competence_c0;
    s.T = competence_T ? competence_T : std::max<std::size_t>(1, max_epochs / 2);
    s.shape = scheduler == SchedulerKind::competence_root ? CompetenceShape::root : CompetenceShape::linear;
    return s;
  }
};

inline constexpr double kNotApplicable = std::numeric_limits<double>::quiet_NaN();

struct EpochRecord {
  std::size_t epoch = 0;
  double theta_hat = kNotApplicable;  // dds-mae only
  double bump_offset = kNotApplicable;
  double threshold = kNotApplicable;
  std::size_t n_selected = 0;
  double frac_selected = 0.0;
  double train_acc = 0.0;  // running accuracy over the selected examples during the epoch
  double val_acc = 0.0;
  double epoch_wall_ms = 0.0;
  double ability_est_wall_ms = 0.0;
};

struct CurriculumTrace {
  std::vector<EpochRecord> epochs;

  /// Index of the first epoch attaining the best validation accuracy.
  std::size_t best_epoch() const {
    require(!epochs.empty(), "empty trace");
    std::size_t best = 0;
    for (std::size_t e = 1; e < epochs.size(); ++e)
      if (epochs[e].val_acc > epochs[best].val_acc) best = e;
    return best;
  }
  double best_val_acc() const { return epochs.at(best_epoch()).val_acc; }

  /// First epoch whose validation accuracy reaches `target`, if any.
  std::optional<std::size_t> first_epoch_reaching(double target) const {
    for (const auto& r : epochs)
      if (r.val_acc >= target) return r.epoch;
    return std::nullopt;
  }

  double total_wall_ms() const {
    double s = 0;
    for (const auto& r : epochs) s += r.epoch_wall_ms;
    return s;
  }
  double ability_wall_ms() const {
    double s = 0;
    for (const auto& r : epochs) s += r.ability_est_wall_ms;
    return s;
  }
};

struct TrainResult {
  Classifier model;  // state at the best validation epoch
  CurriculumTrace trace;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace detail

/// One DDS-MAE estimation step: grade the model's predictions on `rows`,
/// fit the ability by maximum likelihood against `diff` (indexed like
/// `train`) and apply the stagnation rule. The model is only read.
inline AbilityEstimate estimate_student_ability(const Classifier& model, const LabeledDataset& train,
                                                std::span<const std::size_t> rows, std::span<const double> diff,
                                                const AbilityEstConfig& acfg, std::size_t epoch,
                                                std::span<const AbilityEstimate> history) {
  auto predicted = predict_labels(model, train, rows);
  std::vector<int> gold(rows.size());
  std::vector<double> sub_diff(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    gold[k] = train.labels[rows[k]];
    sub_diff[k] = diff[rows[k]];
  }
  auto pattern = response_pattern(std::span<const int>(gold), std::span<const int>(predicted));
  return maybe_bump(estimate_ability(pattern, sub_diff, acfg, epoch), history);
}

/// Runs the curriculum loop. `table` must score every training item; it is
/// ignored by the `none` scheduler.
inline TrainResult train_with_curriculum(const LabeledDataset& train, const LabeledDataset& val,
                                         const DifficultyTable& table, const StudentConfig& cfg,
                                         const AbilityEstConfig& acfg) {
  cfg.validate();
  acfg.validate();
  train.validate();
  val.validate();
  require(!train.empty(), "train_with_curriculum: empty training set");
  require(val.n_features == train.n_features, "train_with_curriculum: train/val feature mismatch");
  require(train.distinct_labels() >= 2, "train_with_curriculum: training split needs at least two classes");
  const std::size_t n = train.size();
  const std::size_t n_classes = std::max(train.n_classes, val.n_classes);

  // Difficulty per training row; the selection below filters this vector,
  // which is the same set select_dds_mae / select_competence return.
  std::vector<double> diff(n, 0.0);
  if (cfg.scheduler != SchedulerKind::none) {
    for (std::size_t k = 0; k < n; ++k) {
      if (!table.contains(train.ids[k]))
        throw ValidationError("difficulty table does not score training item '" + train.ids[k].str() + "'");
      diff[k] = table.at(train.ids[k]);
    }
  }
  const double min_diff = *std::min_element(diff.begin(), diff.end());
  const double max_diff = *std::max_element(diff.begin(), diff.end());
  // Rank order for competence schedules: by score, ties by id.
  std::vector<std::size_t> by_difficulty(n);
  std::iota(by_difficulty.begin(), by_difficulty.end(), std::size_t{0});
  std::stable_sort(by_difficulty.begin(), by_difficulty.end(), [&](std::size_t a, std::size_t b) {
    if (diff[a] != diff[b]) return diff[a] < diff[b];
    return train.ids[a] < train.ids[b];
  });

  Classifier model(cfg.model, train.n_features, n_classes, cfg.seed);
  Optimizer opt(cfg.optimizer, model.n_params());
  AbilitySampler sampler(acfg);
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto sched = cfg.competence_schedule();

  TrainResult result{model, {}};
  std::vector<AbilityEstimate> history;
  double best_val = -1.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> selected;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    auto t_epoch = detail::Clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    selected.clear();

    switch (cfg.scheduler) {
      case SchedulerKind::none:
        selected.resize(n);
        std::iota(selected.begin(), selected.end(), std::size_t{0});
        break;
      case SchedulerKind::dds_mae: {
        auto t_ability = detail::Clock::now();
        auto est = estimate_student_ability(model, train, sampler.draw(n), diff, acfg, epoch, history);
        rec.ability_est_wall_ms = detail::ms_since(t_ability);
        // Empty-selection guard: keep bumping until something is selected.
        while (est.threshold < min_diff) {
          est.bump_offset += kStagnationBump;
          est.threshold = est.theta_hat + est.bump_offset;
          log::info("epoch ", epoch, ": empty selection at threshold ", est.threshold - kStagnationBump,
                    ", bumping to ", est.threshold);
        }
        history.push_back(est);
        for (std::size_t k = 0; k < n; ++k)
          if (diff[k] <= est.threshold) selected.push_back(k);
        if (selected.empty())
          throw RuntimeError("train_with_curriculum: empty selection at threshold " + csv::fmt(est.threshold) +
                             " (max difficulty " + csv::fmt(max_diff) + ")");
        rec.theta_hat = est.theta_hat;
        rec.bump_offset = est.bump_offset;
        rec.threshold = est.threshold;
        break;
      }
      case SchedulerKind::competence_linear:
      case SchedulerKind::competence_root: {
        double c = competence(epoch, sched);
        auto want = static_cast<std::size_t>(std::ceil(c * static_cast<double>(n) - 1e-9));
        want = std::min(want, n);
        selected.assign(by_difficulty.begin(), by_difficulty.begin() + static_cast<std::ptrdiff_t>(want));
        std::sort(selected.begin(), selected.end());
        break;
      }
    }

    rec.n_selected = selected.size();
    rec.frac_selected = static_cast<double>(selected.size()) / static_cast<double>(n);
    std::shuffle(selected.begin(), selected.end(), shuffle_rng);
    rec.train_acc = train_epoch(model, opt, train, selected, cfg.batch_size);
    rec.val_acc = accuracy(model, val);
    rec.epoch_wall_ms = detail::ms_since(t_epoch);
    log::debug("epoch ", epoch, " n_selected ", rec.n_selected, " val_acc ", rec.val_acc);
    result.trace.epochs.push_back(rec);

    if (rec.val_acc > best_val) {
      best_val = rec.val_acc;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      log::info("early stop after epoch ", epoch);
      break;
    }
  }
  return result;
}

// ---- trace file -----------------------------------------------------------------

/// Column order is fixed; wall-clock columns come last.
inline constexpr const char* kTraceHeader =
    "epoch,theta_hat,bump_offset,threshold,n_selected,frac_selected,train_acc,val_acc,epoch_wall_ms,"
    "ability_est_wall_ms";

inline std::string format_trace_csv(const CurriculumTrace& trace) {
  auto opt = [](double v) { return std::isnan(v) ? std::string() : csv::fmt(v); };
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& r : trace.epochs)
    csv::append_row(out, {std::to_string(r.epoch), opt(r.theta_hat), opt(r.bump_offset), opt(r.threshold),
                          std::to_string(r.n_selected), csv::fmt(r.frac_selected), csv::fmt(r.train_acc),
                          csv::fmt(r.val_acc), csv::fmt(r.epoch_wall_ms), csv::fmt(r.ability_est_wall_ms)});
  return out;
}

inline CurriculumTrace parse_trace_csv(const csv::Table& t) {
  CurriculumTrace trace;
  auto num = [&](const csv::Row& row, const char* col) {
    const auto& s = row.fields[t.col(col)];
    return s.empty() ? kNotApplicable : csv::to_double(s, t.where(row));
  };
  for (const auto& row : t.rows()) {
    EpochRecord r;
    r.epoch = static_cast<std::size_t>(csv::to_int(row.fields[t.col("epoch")], t.where(row)));
    r.theta_hat = num(row, "theta_hat");
    r.bump_offset = num(row, "bump_offset");
    r.threshold = num(row, "threshold");
    r.n_selected = static_cast<std::size_t>(csv::to_int(row.fields[t.col("n_selected")], t.where(row)));
    r.frac_selected = num(row, "frac_selected");
    r.train_acc = num(row, "train_acc");
    r.val_acc = num(row, "val_acc");
    r.epoch_wall_ms = num(row, "epoch_wall_ms");
    r.ability_est_wall_ms = num(row, "ability_est_wall_ms");
    require(r.epoch == trace.epochs.size(), t.where(row) + ": epochs must be consecutive from 0");
    require(r.frac_selected >= 0 && r.frac_selected <= 1, t.where(row) + ": frac_selected outside [0, 1]");
    trace.epochs.push_back(r);
  }
  return trace;
}

inline CurriculumTrace read_trace(const std::filesystem::path& path) { return parse_trace_csv(csv::read(path)); }

inline void write_trace(const std::filesystem::path& path, const CurriculumTrace& trace) {
  csv::write_atomic(path, format_trace_csv(trace));
}

inline void write_checkpoint(const std::filesystem::path& path, const Classifier& model) {
  csv::write_atomic(path, classifier_to_json(model).dump() + "\n");
}

inline Classifier read_checkpoint(const std::filesystem::path& path) {
  try {
    return classifier_from_json(nlohmann::json::parse(csv::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace irtcl
