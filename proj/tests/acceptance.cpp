// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance [--only 1,2,...] [--keep DIR]
//
// Statistics come from tests/oracles.hpp rather than the library.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unistd.h>

#include "irtcl/pipeline.hpp"
#include "oracles.hpp"

using namespace irtcl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string drop_tail_columns(const std::string& csv, int k) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    for (int j = 0; j < k; ++j) line = line.substr(0, line.rfind(','));
    out += line + "\n";
  }
  return out;
}

int failures = 0;

void verdict(int n, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %d [%s] %s: %s\n", n, pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

// Fits `crowd` through cmd_fit_irt in `dir` and returns the posterior.
VariationalPosterior fit_through_cli(const RaschCrowd& crowd, const fs::path& dir, std::uint64_t seed) {
  fs::create_directories(dir);
  write_responses(dir / "responses.csv", crowd.responses);
  RunConfig cfg;
  cfg.seed = seed;
  cfg.paths.responses = (dir / "responses.csv").string();
  cfg.paths.out = dir.string();
  cmd_fit_irt(cfg);
  return read_posterior(dir / "posterior.json");
}

// Posterior means lined up with the true parameters by id.
std::pair<std::vector<double>, std::vector<double>> fitted_b(const VariationalPosterior& q, const RaschCrowd& c) {
  std::unordered_map<ItemId, double> by_id;
  for (std::size_t i = 0; i < q.items.size(); ++i) by_id[q.items[i]] = q.b[i].mu;
  std::vector<double> fit, truth;
  for (std::size_t i = 0; i < c.responses.n_items(); ++i) {
    fit.push_back(by_id.at(c.responses.items()[i]));
    truth.push_back(c.b[i]);
  }
  return {fit, truth};
}

std::pair<std::vector<double>, std::vector<double>> fitted_theta(const VariationalPosterior& q, const RaschCrowd& c) {
  std::unordered_map<SubjectId, double> by_id;
  for (std::size_t j = 0; j < q.subjects.size(); ++j) by_id[q.subjects[j]] = q.theta[j].mu;
  std::vector<double> fit, truth;
  for (std::size_t j = 0; j < c.responses.n_subjects(); ++j) {
    fit.push_back(by_id.at(c.responses.subjects()[j]));
    truth.push_back(c.theta[j]);
  }
  return {fit, truth};
}

void criterion1(const fs::path& dir) {
  auto crowd = make_rasch_crowd(50, 2000, 1.0, 1.0, 101);
  auto t0 = Clock::now();
  auto q = fit_through_cli(crowd, dir / "c1", 1);
  double secs = seconds_since(t0);
  auto [bf, bt] = fitted_b(q, crowd);
  auto [tf, tt] = fitted_theta(q, crowd);
  double rb = oracle::pearson(bf, bt), rt = oracle::pearson(tf, tt);
  verdict(1, "rasch recovery", rb >= 0.9 && rt >= 0.85 && secs <= 120,
          fmt("r_b=%.4f (>=0.9) r_theta=%.4f (>=0.85) fit %.1fs (<=120s) steps=%zu", rb, rt, secs, q.elbo.size()));
}

void criterion2() {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  AbilityEstConfig cfg;
  double worst = 0;
  for (int inst = 0; inst < 100; ++inst) {
    double theta = 1.5 * normal(rng);
    std::vector<double> b(50);
    std::vector<std::uint8_t> z(50);
    for (int i = 0; i < 50; ++i) {
      b[i] = normal(rng);
      z[i] = unif(rng) < static_cast<double>(oracle::icc(theta, b[i]));
    }
    double est = estimate_ability(z, b, cfg).theta_hat;
    worst = std::max(worst, std::abs(est - oracle::grid_argmax(z, b)));
  }
  std::vector<double> b(50);
  for (auto& x : b) x = normal(rng);
  double hi = estimate_ability(std::vector<std::uint8_t>(50, 1), b, cfg).theta_hat;
  double lo = estimate_ability(std::vector<std::uint8_t>(50, 0), b, cfg).theta_hat;
  verdict(2, "ability MLE vs grid", worst <= 0.02 && hi == 6.0 && lo == -6.0,
          fmt("max |nm - grid| = %.5f over 100 instances (<=0.02); all-correct %.17g, all-incorrect %.17g", worst,
              hi, lo));
}

void criterion3() {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> normal(0.0, 1.5);
  std::uniform_real_distribution<double> thr(-4, 4);
  int mismatches = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    DifficultyTable t(DifficultySource::irt_ac);
    std::size_t n = 1 + rng() % 100;
    bool coarse = inst % 2 == 0;
    for (std::size_t i = 0; i < n; ++i)
      t.set(ItemId("x" + std::to_string(i)), coarse ? 0.5 * static_cast<double>(rng() % 13) - 3.0 : normal(rng));
    double theta = coarse ? 0.5 * static_cast<double>(rng() % 13) - 3.0 : thr(rng);
    std::set<ItemId> expect;
    for (const auto& [id, s] : t.scores())
      if (s <= theta) expect.insert(id);
    auto got = select_dds_mae(t, theta);
    if (got.size() != expect.size() || std::set<ItemId>(got.begin(), got.end()) != expect) ++mismatches;
  }
  DifficultyTable ex(DifficultySource::irt_ac);
  ex.set(ItemId("Q1"), 1.3);
  ex.set(ItemId("Q2"), 1.7);
  ex.set(ItemId("Q3"), 0.1);
  ex.set(ItemId("Q4"), 2.1);
  auto sel = select_dds_mae(ex, 1.5);
  bool worked = sel == std::vector<ItemId>{ItemId("Q1"), ItemId("Q3")};
  verdict(3, "scheduler correctness", mismatches == 0 && worked,
          fmt("%d/1000 brute-force mismatches; worked example %s", mismatches, worked ? "{Q1, Q3}" : "WRONG"));
}

void criteria67(const fs::path& dir) {
  auto crowd = make_rasch_crowd(20, 20000, 1.0, 1.5, 606);
  auto t0 = Clock::now();
  auto q = fit_through_cli(crowd, dir / "c67", 6);
  double secs = seconds_since(t0);

  DifficultyTable table = read_difficulty_table(dir / "c67" / "difficulties.csv");
  auto acc = accuracy_by_difficulty_bin(crowd.responses, table);
  double worst = -1;
  for (std::size_t s = 0; s < acc.subjects.size(); ++s) {
    std::vector<double> bin, a;
    for (std::size_t k = 0; k < acc.n_bins(); ++k) {
      if (acc.count[s][k] == 0) continue;
      bin.push_back(static_cast<double>(k));
      a.push_back(acc.accuracy(s, k));
    }
    worst = std::max(worst, oracle::spearman(bin, a));
  }
  verdict(6, "bin accuracy falls with difficulty", worst <= -0.8,
          fmt("max over 20 subjects of spearman(bin, accuracy) = %.4f (<=-0.8)", worst));

  auto [bf, bt] = fitted_b(q, crowd);
  double skew = oracle::skewness(bf), rho = oracle::spearman(bf, bt);
  verdict(7, "IRT-AC difficulty shape", std::abs(skew) <= 0.3 && rho >= 0.9,
          fmt("skewness %.4f (|.|<=0.3), spearman vs b* %.4f (>=0.9), fit %.1fs", skew, rho, secs));
}

void criterion8(const fs::path& dir) {
  std::vector<std::string> broken;
  auto check = [&](bool ok, const char* what) {
    if (!ok) broken.push_back(what);
  };

  // Likelihood invariant under theta + c, b + c.
  {
    auto crowd = make_rasch_crowd(15, 80, 1.0, 1.0, 808);
    std::unordered_map<SubjectId, double> th;
    std::unordered_map<ItemId, double> b;
    for (std::size_t j = 0; j < crowd.theta.size(); ++j) th[crowd.responses.subjects()[j]] = crowd.theta[j];
    for (std::size_t i = 0; i < crowd.b.size(); ++i) b[crowd.responses.items()[i]] = crowd.b[i];
    double base = log_likelihood(crowd.responses, th, b);
    bool ok = true;
    for (double c : {-3.7, 0.25, 1.0, 5.5}) {
      auto th2 = th;
      auto b2 = b;
      for (auto& [k, v] : th2) v += c;
      for (auto& [k, v] : b2) v += c;
      ok = ok && std::abs(log_likelihood(crowd.responses, th2, b2) - base) <= 1e-9;
    }
    check(ok, "translation invariance");
  }
  {
    bool ok = true;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-30, 30);
    for (int k = 0; k < 10000; ++k) {
      double t = u(rng), b = u(rng);
      ok = ok && std::abs(icc_prob(t, b) - (1.0 - icc_prob(b, t))) <= 1e-15;
    }
    check(ok, "icc complement symmetry");
  }
  {
    bool ok = true;
    for (auto shape : {CompetenceShape::linear, CompetenceShape::root})
      for (std::size_t T : {1, 5, 10, 37}) {
        CompetenceSchedule s{0.01, T, shape};
        ok = ok && competence(0, s) == 0.01 && competence(T, s) == 1.0 && competence(T + 3, s) == 1.0;
      }
    check(ok, "competence saturation");
  }
  {
    std::mt19937_64 rng(88);
    std::normal_distribution<double> normal(0, 1.5);
    DifficultyTable t(DifficultySource::irt_ac);
    for (int i = 0; i < 500; ++i) t.set(ItemId("m" + std::to_string(i)), normal(rng));
    bool ok = true;
    std::size_t prev = 0;
    std::set<ItemId> prev_set;
    for (double th = -6; th <= 6; th += 0.01) {
      auto sel = select_dds_mae(t, th);
      std::set<ItemId> cur(sel.begin(), sel.end());
      ok = ok && sel.size() >= prev && std::includes(cur.begin(), cur.end(), prev_set.begin(), prev_set.end());
      prev = sel.size();
      prev_set = std::move(cur);
    }
    check(ok, "monotone selection");
  }
  {
    BenchmarkConfig bc;
    bc.n_train = 600;
    bc.n_val = 200;
    bc.seed = 8;
    auto bm = make_noisy_hard_benchmark(bc);
    StudentConfig sc;
    sc.model = {ModelKind::mlp, 16};
    sc.max_epochs = 2;
    auto model = train_with_curriculum(bm.train, bm.val, {}, sc, {}).model;
    auto before = model.params();
    AbilityEstConfig ac;
    ac.subsample_size = 200;
    AbilitySampler sampler(ac);
    std::vector<double> diff(bm.train.size());
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = static_cast<double>(k % 9) - 4.0;
    std::vector<AbilityEstimate> history;
    for (std::size_t e = 0; e < 3; ++e)
      history.push_back(estimate_student_ability(model, bm.train, sampler.draw(bm.train.size()), diff, ac, e, history));
    check(model.params() == before, "estimation purity");
  }
  {
    auto pipeline = [](const fs::path& out) {
      RunConfig c;
      c.seed = 21;
      c.benchmark.n_train = 400;
      c.benchmark.n_val = 150;
      c.crowd.n_base_learners = 3;
      c.crowd.variant_epochs = {1, 2};
      c.fit.max_steps = 300;
      c.ability.subsample_size = 150;
      c.student.model = {ModelKind::mlp, 16};
      c.student.max_epochs = 4;
      c.paths.out = out.string();
      cmd_generate_benchmark(c);
      c.paths.train = (out / "train.csv").string();
      c.paths.val = (out / "val.csv").string();
      cmd_simulate_crowd(c);
      c.paths.responses = (out / "responses.csv").string();
      cmd_fit_irt(c);
      c.paths.difficulties = (out / "difficulties.csv").string();
      cmd_train(c, SchedulerKind::dds_mae);
    };
    pipeline(dir / "c8a");
    pipeline(dir / "c8b");
    bool ok = true;
    for (const char* f : {"train.csv", "val.csv", "train_flipped.csv", "responses.csv", "predictions.csv",
                          "gold.csv", "posterior.json", "difficulties.csv", "checkpoint.json"})
      ok = ok && slurp(dir / "c8a" / f) == slurp(dir / "c8b" / f);
    for (const char* f : {"trace.csv", "summary.csv"})
      ok = ok && drop_tail_columns(slurp(dir / "c8a" / f), 2) == drop_tail_columns(slurp(dir / "c8b" / f), 2);
    check(ok, "seed determinism");
  }
  std::string detail = "translation, icc symmetry, competence, monotone selection, purity, determinism";
  if (!broken.empty()) {
    detail = "broken:";
    for (const auto& b : broken) detail += " " + b + ";";
  }
  verdict(8, "invariant suites", broken.empty(), detail);
}

// The grid repetitions use benchmark seed r and ablation seeds 3r, 3r+1, 3r+2.
RunConfig grid_config(std::uint64_t rep, const fs::path& dir) {
  RunConfig c;
  c.seed = rep;
  c.ablation.seeds = {3 * rep, 3 * rep + 1, 3 * rep + 2};
  c.paths.out = (dir / ("grid" + std::to_string(rep))).string();
  return c;
}

void criteria45(const AblationResult& grid, const std::vector<std::uint64_t>& seeds) {
  int faster = 0;
  double base_sum = 0, dds_sum = 0, ability_ms = 0, epoch_ms = 0;
  std::string per_seed;
  for (auto s : seeds) {
    const auto& base = grid.traces.at(run_id("none", SchedulerKind::none, s));
    const auto& dds = grid.traces.at(run_id("irt-ac", SchedulerKind::dds_mae, s));
    double target = base.best_val_acc();
    std::size_t base_epoch = 0;
    while (base.epochs[base_epoch].val_acc < target) ++base_epoch;
    std::optional<std::size_t> reach;
    for (std::size_t e = 0; e < dds.epochs.size() && !reach; ++e)
      if (dds.epochs[e].val_acc >= target) reach = e;
    if (reach && *reach <= base_epoch) ++faster;
    base_sum += target;
    dds_sum += dds.best_val_acc();
    ability_ms += dds.ability_wall_ms();
    epoch_ms += dds.total_wall_ms();
    per_seed += fmt(" s%llu: base %.4f@%zu dds %.4f reach %s;", (unsigned long long)s, target, base_epoch,
                    dds.best_val_acc(), reach ? std::to_string(*reach).c_str() : "never");
  }
  double n = static_cast<double>(seeds.size());
  double gap = dds_sum / n - base_sum / n;
  verdict(4, "DDS-MAE convergence", faster >= 2 && gap >= -0.005,
          fmt("reached baseline best no later in %d/3 seeds (>=2); mean best-val gap %+.4f (>=-0.005);", faster, gap) +
              per_seed);
  double ratio = ability_ms / epoch_ms;
  verdict(5, "ability overhead", ratio <= 0.10,
          fmt("sum ability_wall_ms / sum epoch_wall_ms = %.4f (<=0.10) over %zu DDS-MAE runs", ratio, seeds.size()));
}

void criterion9(const fs::path& dir, bool want45) {
  int wins = 0;
  bool in_time = true;
  std::string detail;
  for (std::uint64_t rep = 0; rep < 3; ++rep) {
    auto cfg = grid_config(rep, dir);
    AblationResult r;
    auto t0 = Clock::now();
    cmd_ablate(cfg, 1, &r);
    double secs = seconds_since(t0);
    in_time = in_time && secs <= 900 && r.runs.size() == 30;
    double best = 0, ours = 0;
    std::string best_cell;
    for (const auto& c : r.cells) {
      if (c.acc_mean > best) {
        best = c.acc_mean;
        best_cell = c.dm + "/" + c.scheduler;
      }
      if (c.dm == "irt-ac" && c.scheduler == to_string(SchedulerKind::dds_mae)) ours = c.acc_mean;
    }
    bool win = ours >= best - 0.005;
    wins += win;
    detail += fmt(" rep%llu %.0fs irt-ac/dds-mae %.4f best %s %.4f%s;", (unsigned long long)rep, secs, ours,
                  best_cell.c_str(), best, win ? "" : " (lost)");
    if (rep == 0 && want45) criteria45(r, cfg.ablation.seeds);
  }
  verdict(9, "ablation grid", wins >= 2 && in_time,
          fmt("IRT-AC + DDS-MAE best or within 0.005 in %d/3 repetitions (>=2), each grid <=900s:", wins) + detail);
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path keep;
  for (int k = 1; k < argc; ++k) {
    std::string a = argv[k];
    if (a == "--only" && k + 1 < argc) {
      std::stringstream ss(argv[++k]);
      for (std::string x; std::getline(ss, x, ',');) only.insert(std::stoi(x));
    } else if (a == "--keep" && k + 1 < argc) {
      keep = argv[++k];
    } else {
      std::fprintf(stderr, "usage: acceptance [--only 1,2,...] [--keep DIR]\n");
      return 1;
    }
  }
  auto want = [&](int n) { return only.empty() || only.count(n); };

  fs::path dir = keep.empty() ? fs::temp_directory_path() / ("irtcl_acceptance_" + std::to_string(::getpid())) : keep;
  fs::create_directories(dir);
  try {
    if (want(2)) criterion2();
    if (want(3)) criterion3();
    if (want(8)) criterion8(dir);
    if (want(1)) criterion1(dir);
    if (want(6) || want(7)) criteria67(dir);
    if (want(9) || want(4) || want(5)) criterion9(dir, want(4) || want(5));
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    ++failures;
  }
  if (keep.empty()) fs::remove_all(dir);
  std::printf("%s: %d criterion failure(s)\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
