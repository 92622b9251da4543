#pragma once

// Pipeline commands behind the CLI. Each reads its inputs from a RunConfig,
// writes outputs under paths.out (atomically) and returns what it wrote.

#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "irtcl/benchmark.hpp"
#include "irtcl/config.hpp"
#include "irtcl/crowd.hpp"
#include "irtcl/curriculum.hpp"
#include "irtcl/difficulty.hpp"
#include "irtcl/log.hpp"
#include "irtcl/report.hpp"
#include "irtcl/student.hpp"
#include "irtcl/vi_fit.hpp"

namespace irtcl {

namespace fs = std::filesystem;

/// Short difficulty-measurer names used in run ids and summaries.
inline std::string dm_name(DifficultySource s) {
  switch (s) {
    case DifficultySource::irt_ac: return "irt-ac";
    case DifficultySource::sentence_length: return "sl";
    case DifficultySource::word_rarity: return "wr";
    case DifficultySource::external: return "external";
  }
  return "external";
}

inline std::string run_id(const std::string& dm, SchedulerKind s, std::uint64_t seed) {
  return dm + "_" + std::string(to_string(s)) + "_s" + std::to_string(seed);
}

namespace detail {

inline const std::string& need_path(const std::string& p, const char* key) {
  if (p.empty()) throw ValidationError(std::string("config: paths.") + key + " is required for this command");
  return p;
}

inline LabeledDataset load_split(const std::string& p, const char* key) {
  return read_dataset(need_path(p, key));
}

/// Aligns train/val class counts so both see the union of labels.
inline void align_classes(LabeledDataset& train, LabeledDataset& val) {
  std::size_t k = std::max(train.n_classes, val.n_classes);
  train.n_classes = val.n_classes = k;
}

/// Runs `tasks` on up to `jobs` threads. The first failure (in task order)
/// is rethrown after every worker has finished.
inline void run_pool(std::vector<std::function<void()>>& tasks, std::size_t jobs) {
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next++) < tasks.size();) {
      try {
        tasks[k]();
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Synthetic noisy-hard benchmark: train.csv, val.csv and train_flipped.csv.
inline std::vector<fs::path> cmd_generate_benchmark(const RunConfig& cfg) {
  auto bm = make_noisy_hard_benchmark(benchmark_config(cfg, cfg.seed));
  fs::path out = cfg.paths.out;
  write_dataset(out / "train.csv", bm.train);
  write_dataset(out / "val.csv", bm.val);
  std::string flipped = "item_id,flipped\n";
  for (std::size_t k = 0; k < bm.train.size(); ++k)
    csv::append_row(flipped, {bm.train.ids[k].str(), bm.train_flipped[k] ? "1" : "0"});
  csv::write_atomic(out / "train_flipped.csv", flipped);
  return {out / "train.csv", out / "val.csv", out / "train_flipped.csv"};
}

inline std::vector<fs::path> cmd_simulate_crowd(const RunConfig& cfg) {
  auto train = detail::load_split(cfg.paths.train, "train");
  auto val = detail::load_split(cfg.paths.val, "val");
  detail::align_classes(train, val);
  auto crowd = simulate_crowd(train, val, crowd_config(cfg, cfg.seed));
  fs::path out = cfg.paths.out;
  write_responses(out / "responses.csv", crowd.responses);
  csv::write_atomic(out / "predictions.csv", format_prediction_csv(crowd.predictions));
  csv::write_atomic(out / "gold.csv", format_gold_csv(train));
  return {out / "responses.csv", out / "predictions.csv", out / "gold.csv"};
}

/// Response matrix from paths.responses, or by grading paths.predictions
/// against paths.gold.
inline ResponseMatrix load_responses(const RunConfig& cfg) {
  if (!cfg.paths.responses.empty()) {
    if (cfg.paths.gold.empty()) return read_responses(cfg.paths.responses);
    auto gold = read_gold_labels(cfg.paths.gold);
    return ingest_predictions(cfg.paths.responses, &gold);
  }
  auto gold = read_gold_labels(detail::need_path(cfg.paths.gold, "gold"));
  return ingest_predictions(detail::need_path(cfg.paths.predictions, "predictions"), &gold);
}

inline std::vector<fs::path> cmd_ingest(const RunConfig& cfg) {
  auto z = load_responses(cfg);
  fs::path out = fs::path(cfg.paths.out) / "responses.csv";
  write_responses(out, z);
  return {out};
}

inline std::vector<fs::path> cmd_fit_irt(const RunConfig& cfg) {
  auto z = load_responses(cfg);
  auto post = fit_vi(z, cfg.prior, fit_config(cfg, cfg.seed));
  fs::path out = cfg.paths.out;
  write_posterior(out / "posterior.json", post);
  write_difficulty_table(out / "difficulties.csv", extract_difficulties(post));
  return {out / "posterior.json", out / "difficulties.csv"};
}

/// Heuristic difficulty of every training example; `dm` is "sl" or "wr".
/// Word frequencies come from the training texts themselves.
inline DifficultyTable score_heuristic(const LabeledDataset& train, const std::string& dm) {
  if (!train.has_text()) throw ValidationError("score: training dataset has no text column");
  auto corpus = train.text_corpus();
  if (dm == "sl") return score_sentence_length(corpus);
  if (dm == "wr") return score_word_rarity(corpus, count_words(corpus));
  throw ValidationError("unknown difficulty measurer '" + dm + "' (expected sl or wr)");
}

inline std::vector<fs::path> cmd_score(const RunConfig& cfg, const std::string& dm) {
  auto train = detail::load_split(cfg.paths.train, "train");
  auto table = score_heuristic(train, dm);
  fs::path out = fs::path(cfg.paths.out) / ("difficulties_" + dm + ".csv");
  write_difficulty_table(out, table);
  return {out};
}

struct TrainOutcome {
  RunSummary summary;
  CurriculumTrace trace;
};

inline std::vector<fs::path> cmd_train(const RunConfig& cfg, std::optional<SchedulerKind> scheduler,
                                       TrainOutcome* outcome = nullptr) {
  auto train = detail::load_split(cfg.paths.train, "train");
  auto val = detail::load_split(cfg.paths.val, "val");
  detail::align_classes(train, val);
  auto scfg = student_config(cfg, cfg.seed);
  if (scheduler) scfg.scheduler = *scheduler;
  DifficultyTable table;
  std::string dm = "none";
  if (scfg.scheduler != SchedulerKind::none) {
    table = read_difficulty_table(detail::need_path(cfg.paths.difficulties, "difficulties"));
    dm = dm_name(table.source());
  }
  auto res = train_with_curriculum(train, val, table, scfg, ability_config(cfg, cfg.seed));
  auto summary = summarize_run(run_id(dm, scfg.scheduler, cfg.seed), std::string(to_string(scfg.scheduler)), dm,
                               cfg.seed, res.trace);
  fs::path out = cfg.paths.out;
  write_trace(out / "trace.csv", res.trace);
  write_checkpoint(out / "checkpoint.json", res.model);
  csv::write_atomic(out / "summary.csv", format_summary_csv({summary}));
  if (outcome) *outcome = {summary, res.trace};
  return {out / "trace.csv", out / "checkpoint.json", out / "summary.csv"};
}

// ---- ablation grid ----------------------------------------------------------------

struct AblationCell {
  std::string dm;  // "none" for the baseline
  SchedulerKind scheduler;
};

/// The baseline plus every difficulty measurer crossed with every scheduler.
inline std::vector<AblationCell> ablation_cells() {
  std::vector<AblationCell> cells{{"none", SchedulerKind::none}};
  for (const char* dm : {"sl", "wr", "irt-ac"})
    for (auto s : {SchedulerKind::competence_linear, SchedulerKind::competence_root, SchedulerKind::dds_mae})
      cells.push_back({dm, s});
  return cells;
}

struct AblationResult {
  std::vector<RunSummary> runs;  // sorted by run_id
  std::vector<CellAggregate> cells;
  std::map<std::string, CurriculumTrace> traces;  // by run_id
  std::map<std::uint64_t, DifficultyTable> irt_tables;  // by seed
};

/// Uses paths.train / paths.val when given, otherwise the synthetic benchmark
/// drawn from the run seed. Each ablation seed gets its own crowd, IRT fit
/// and student initialization; all cells of one seed share them.
inline AblationResult run_ablation(const RunConfig& cfg, std::size_t jobs) {
  LabeledDataset train, val;
  if (!cfg.paths.train.empty() || !cfg.paths.val.empty()) {
    train = detail::load_split(cfg.paths.train, "train");
    val = detail::load_split(cfg.paths.val, "val");
  } else {
    auto bm = make_noisy_hard_benchmark(benchmark_config(cfg, cfg.seed));
    train = std::move(bm.train);
    val = std::move(bm.val);
  }
  detail::align_classes(train, val);

  std::map<std::string, DifficultyTable> heuristic;
  for (const char* dm : {"sl", "wr"}) heuristic[dm] = score_heuristic(train, dm);

  AblationResult result;
  const auto& seeds = cfg.ablation.seeds;
  std::vector<DifficultyTable> irt(seeds.size());
  std::vector<std::function<void()>> prep;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    prep.emplace_back([&, k] {
      auto crowd = simulate_crowd(train, val, crowd_config(cfg, seeds[k]));
      irt[k] = extract_difficulties(fit_vi(crowd.responses, cfg.prior, fit_config(cfg, seeds[k])));
    });
  }
  detail::run_pool(prep, jobs);

  const auto cells = ablation_cells();
  std::vector<TrainOutcome> outcomes(seeds.size() * cells.size());
  std::vector<std::function<void()>> work;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      work.emplace_back([&, k, c] {
        const auto& cell = cells[c];
        auto scfg = student_config(cfg, seeds[k]);
        scfg.scheduler = cell.scheduler;
        static const DifficultyTable none;
        const DifficultyTable& table = cell.dm == "none" ? none : cell.dm == "irt-ac" ? irt[k] : heuristic.at(cell.dm);
        auto res = train_with_curriculum(train, val, table, scfg, ability_config(cfg, seeds[k]));
        auto id = run_id(cell.dm, cell.scheduler, seeds[k]);
        outcomes[k * cells.size() + c] = {
            summarize_run(id, std::string(to_string(cell.scheduler)), cell.dm, seeds[k], res.trace), res.trace};
        log::info("ablation: ", id, " best_val_acc ", res.trace.best_val_acc());
      });
    }
  }
  detail::run_pool(work, jobs);

  for (auto& o : outcomes) {
    result.traces[o.summary.run_id] = o.trace;
    result.runs.push_back(std::move(o.summary));
  }
  std::sort(result.runs.begin(), result.runs.end(),
            [](const RunSummary& a, const RunSummary& b) { return a.run_id < b.run_id; });
  result.cells = aggregate_runs(result.runs);
  for (std::size_t k = 0; k < seeds.size(); ++k) result.irt_tables[seeds[k]] = std::move(irt[k]);
  return result;
}

inline std::vector<fs::path> write_ablation(const AblationResult& r, const fs::path& dir) {
  std::vector<fs::path> written;
  for (const auto& [id, trace] : r.traces) {
    write_trace(dir / "traces" / (id + ".csv"), trace);
    written.push_back(dir / "traces" / (id + ".csv"));
  }
  for (const auto& [seed, table] : r.irt_tables) {
    auto p = dir / ("difficulties_irt-ac_s" + std::to_string(seed) + ".csv");
    write_difficulty_table(p, table);
    written.push_back(p);
  }
  csv::write_atomic(dir / "summary.csv", format_summary_csv(r.runs));
  csv::write_atomic(dir / "aggregate.csv", format_aggregate_csv(r.cells));
  written.push_back(dir / "summary.csv");
  written.push_back(dir / "aggregate.csv");
  return written;
}

inline std::vector<fs::path> cmd_ablate(const RunConfig& cfg, std::size_t jobs, AblationResult* result = nullptr) {
  auto r = run_ablation(cfg, jobs);
  auto written = write_ablation(r, fs::path(cfg.paths.out) / "ablation");
  if (result) *result = std::move(r);
  return written;
}

// ---- report -------------------------------------------------------------------------

/// Histogram (paths.difficulties), accuracy by difficulty bin (paths.responses
/// with paths.difficulties), convergence plot (paths.traces) and per-cell
/// aggregates (paths.summaries), for whichever inputs are configured.
inline std::vector<fs::path> cmd_report(const RunConfig& cfg) {
  const auto& p = cfg.paths;
  fs::path out = p.out;
  std::vector<fs::path> written;
  PlotInputs plots;
  if (!p.difficulties.empty()) {
    auto table = read_difficulty_table(p.difficulties);
    auto h = difficulty_histogram(table, cfg.report.bin_width);
    csv::write_atomic(out / "histogram.csv", format_histogram_csv(h));
    written.push_back(out / "histogram.csv");
    plots.histogram = h;
    if (!p.responses.empty() || !p.predictions.empty()) {
      auto acc = accuracy_by_difficulty_bin(load_responses(cfg), table, cfg.report.bin_edges);
      csv::write_atomic(out / "bin_accuracy.csv", format_bin_accuracy_csv(acc));
      written.push_back(out / "bin_accuracy.csv");
      plots.bin_accuracy = std::move(acc);
    }
  }
  for (const auto& t : p.traces) plots.traces.push_back({fs::path(t).stem().string(), read_trace(t)});
  if (!p.summaries.empty()) {
    csv::write_atomic(out / "aggregate.csv", format_aggregate_csv(aggregate_runs(read_summaries(p.summaries))));
    written.push_back(out / "aggregate.csv");
  }
  if (plots.histogram || plots.bin_accuracy || !plots.traces.empty()) {
    auto svgs = emit_plots(plots, out);
    written.insert(written.end(), svgs.begin(), svgs.end());
  }
  if (written.empty())
    throw ValidationError("report: configure at least one of paths.difficulties, paths.traces, paths.summaries");
  return written;
}

}  // namespace irtcl
