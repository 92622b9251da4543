// irtcl: command-line front end for the curriculum pipeline.
//
// Exit codes: 0 success, 1 invalid input, 2 runtime failure. Failures print
// {"error": {"kind": ..., "message": ...}} on stderr; successes print the
// written paths as JSON on stdout.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "irtcl/pipeline.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string train, val, responses, predictions, gold, difficulties, summaries;
  std::vector<std::string> traces;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "Run configuration JSON");
  sub->add_option("--seed", c.seed, "Run seed (overrides the config)");
  sub->add_option("--out", c.out, "Output directory (overrides paths.out)");
  sub->add_option("--train", c.train, "Training split CSV");
  sub->add_option("--val", c.val, "Validation split CSV");
  sub->add_option("--responses", c.responses, "Response CSV");
  sub->add_option("--predictions", c.predictions, "Prediction CSV");
  sub->add_option("--gold", c.gold, "Gold label CSV");
  sub->add_option("--difficulties", c.difficulties, "Difficulty table CSV");
  sub->add_option("--trace", c.traces, "Trace CSV (repeatable)");
  sub->add_option("--summaries", c.summaries, "Run summary CSV");
}

irtcl::RunConfig load_config(const Common& c) {
  irtcl::RunConfig cfg = c.config.empty() ? irtcl::RunConfig{} : irtcl::read_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  auto set = [](std::string& dst, const std::string& v) {
    if (!v.empty()) dst = v;
  };
  set(cfg.paths.out, c.out);
  set(cfg.paths.train, c.train);
  set(cfg.paths.val, c.val);
  set(cfg.paths.responses, c.responses);
  set(cfg.paths.predictions, c.predictions);
  set(cfg.paths.gold, c.gold);
  set(cfg.paths.difficulties, c.difficulties);
  set(cfg.paths.summaries, c.summaries);
  if (!c.traces.empty()) cfg.paths.traces = c.traces;
  cfg.validate();
  return cfg;
}

int fail(const char* kind, const std::string& message, int code) {
  nlohmann::json j = {{"error", {{"kind", kind}, {"message", message}}}};
  std::cerr << j.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Psychometrics-driven curriculum learning"};
  app.require_subcommand(1);
  Common common;
  std::string scheduler, dm = "sl";
  std::optional<std::size_t> jobs;

  auto* gen = app.add_subcommand("generate", "Write the synthetic noisy-hard benchmark");
  auto* sim = app.add_subcommand("simulate-crowd", "Simulate an artificial crowd and grade it on the training split");
  auto* ing = app.add_subcommand("ingest", "Grade external predictions into a response CSV");
  auto* fit = app.add_subcommand("fit-irt", "Fit the Rasch model by variational inference");
  auto* score = app.add_subcommand("score", "Heuristic difficulty scores");
  auto* train = app.add_subcommand("train", "Train a student with a curriculum scheduler");
  auto* ablate = app.add_subcommand("ablate", "Run the difficulty-measurer x scheduler grid");
  auto* report = app.add_subcommand("report", "Histograms, bin accuracy, convergence plots, aggregates");
  for (auto* sub : {gen, sim, ing, fit, score, train, ablate, report}) add_common(sub, common);
  score->add_option("--dm", dm, "Difficulty measurer")->check(CLI::IsMember({"sl", "wr"}));
  train->add_option("--scheduler", scheduler, "Scheduler")->check(CLI::IsMember({"none", "dds-mae", "linear", "root"}));
  ablate->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("validation", e.what(), 1);
  }

  try {
    auto cfg = load_config(common);
    std::vector<std::filesystem::path> written;
    std::string name;
    if (*gen) {
      name = "generate";
      written = irtcl::cmd_generate_benchmark(cfg);
    } else if (*sim) {
      name = "simulate-crowd";
      written = irtcl::cmd_simulate_crowd(cfg);
    } else if (*ing) {
      name = "ingest";
      written = irtcl::cmd_ingest(cfg);
    } else if (*fit) {
      name = "fit-irt";
      written = irtcl::cmd_fit_irt(cfg);
    } else if (*score) {
      name = "score";
      written = irtcl::cmd_score(cfg, dm);
    } else if (*train) {
      name = "train";
      std::optional<irtcl::SchedulerKind> s;
      if (!scheduler.empty()) s = irtcl::scheduler_from(scheduler);
      written = irtcl::cmd_train(cfg, s);
    } else if (*ablate) {
      name = "ablate";
      written = irtcl::cmd_ablate(cfg, jobs.value_or(cfg.ablation.jobs));
    } else {
      name = "report";
      written = irtcl::cmd_report(cfg);
    }
    nlohmann::json j = {{"command", name}, {"written", nlohmann::json::array()}};
    for (const auto& p : written) j["written"].push_back(p.string());
    std::cout << j.dump() << "\n";
    return 0;
  } catch (const irtcl::ValidationError& e) {
    return fail("validation", e.what(), 1);
  } catch (const irtcl::RuntimeError& e) {
    return fail("runtime", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 2);
  }
}
