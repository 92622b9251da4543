#pragma once

// Post-hoc analyses: difficulty histograms, per-cell aggregation across
// seeds, and deterministic SVG plots.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "irtcl/crowd.hpp"
#include "irtcl/csv.hpp"
#include "irtcl/difficulty.hpp"
#include "irtcl/error.hpp"
#include "irtcl/stats.hpp"
#include "irtcl/student.hpp"

namespace irtcl {

// ---- histogram -----------------------------------------------------------------

struct Histogram {
  double origin = 0.0;  // left edge of bin 0
  double bin_width = 1.0;
  std::vector<std::size_t> counts;
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;
  double skewness = 0.0;

  double lower(std::size_t k) const { return origin + static_cast<double>(k) * bin_width; }
};

/// Bins are [origin + k w, origin + (k+1) w) with origin = floor(min / w) * w.
inline Histogram difficulty_histogram(const DifficultyTable& table, double bin_width) {
  if (!(bin_width > 0) || !std::isfinite(bin_width))
    throw ValidationError("difficulty_histogram: bin width must be > 0");
  if (table.empty()) throw ValidationError("difficulty_histogram: empty table");
  std::vector<double> v;
  v.reserve(table.size());
  for (const auto& [id, s] : table.scores()) v.push_back(s);
  auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  Histogram h;
  h.bin_width = bin_width;
  h.origin = std::floor(*mn / bin_width) * bin_width;
  auto bin_of = [&](double x) { return static_cast<std::size_t>(std::floor((x - h.origin) / bin_width)); };
  h.counts.assign(bin_of(*mx) + 1, 0);
  for (double x : v) ++h.counts[std::min(bin_of(x), h.counts.size() - 1)];
  h.n = v.size();
  h.mean = stats::mean(v);
  h.std = stats::sample_std(v);
  h.skewness = stats::skewness(v);
  return h;
}

inline std::string format_histogram_csv(const Histogram& h) {
  std::string out = "lower,upper,count\n";
  for (std::size_t k = 0; k < h.counts.size(); ++k)
    csv::append_row(out, {csv::fmt(h.lower(k)), csv::fmt(h.lower(k + 1)), std::to_string(h.counts[k])});
  return out;
}

// ---- run summaries ------------------------------------------------------------------

struct RunSummary {
  std::string run_id;
  std::string scheduler;
  std::string dm;
  std::uint64_t seed = 0;
  double best_val_acc = 0.0;
  std::size_t best_epoch = 0;
  double total_wall_ms = 0.0;
  double ability_wall_ms = 0.0;

  bool operator==(const RunSummary&) const = default;
};

inline RunSummary summarize_run(std::string run_id, std::string scheduler, std::string dm, std::uint64_t seed,
                                const CurriculumTrace& trace) {
  RunSummary s{std::move(run_id), std::move(scheduler), std::move(dm), seed};
  s.best_epoch = trace.best_epoch();
  s.best_val_acc = trace.best_val_acc();
  s.total_wall_ms = trace.total_wall_ms();
  s.ability_wall_ms = trace.ability_wall_ms();
  return s;
}

inline constexpr const char* kSummaryHeader =
    "run_id,scheduler,dm,seed,best_val_acc,best_epoch,total_wall_ms,ability_wall_ms";

inline void append_summary_row(std::string& out, const RunSummary& s) {
  csv::append_row(out, {s.run_id, s.scheduler, s.dm, std::to_string(s.seed), csv::fmt(s.best_val_acc),
                        std::to_string(s.best_epoch), csv::fmt(s.total_wall_ms), csv::fmt(s.ability_wall_ms)});
}

inline std::string format_summary_csv(const std::vector<RunSummary>& runs) {
  std::string out = std::string(kSummaryHeader) + "\n";
  for (const auto& s : runs) append_summary_row(out, s);
  return out;
}

inline std::vector<RunSummary> parse_summary_csv(const csv::Table& t) {
  std::vector<RunSummary> out;
  for (const auto& row : t.rows()) {
    auto where = t.where(row);
    RunSummary s;
    s.run_id = row.fields[t.col("run_id")];
    s.scheduler = row.fields[t.col("scheduler")];
    s.dm = row.fields[t.col("dm")];
    auto seed = csv::to_int(row.fields[t.col("seed")], where);
    auto best = csv::to_int(row.fields[t.col("best_epoch")], where);
    require(seed >= 0 && best >= 0, where + ": seed and best_epoch must be >= 0");
    s.seed = static_cast<std::uint64_t>(seed);
    s.best_epoch = static_cast<std::size_t>(best);
    s.best_val_acc = csv::to_double(row.fields[t.col("best_val_acc")], where);
    s.total_wall_ms = csv::to_double(row.fields[t.col("total_wall_ms")], where);
    s.ability_wall_ms = csv::to_double(row.fields[t.col("ability_wall_ms")], where);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<RunSummary> read_summaries(const std::filesystem::path& path) {
  return parse_summary_csv(csv::read(path));
}

struct CellAggregate {
  std::string scheduler;
  std::string dm;
  std::size_t n_runs = 0;
  double acc_mean = 0.0;
  double acc_std = 0.0;
  double wall_mean = 0.0;
  double wall_std = 0.0;
  bool single_run = false;  // std is reported as 0 because there is nothing to spread
};

/// Mean and sample (n - 1) standard deviation of best_val_acc and
/// total_wall_ms per (scheduler, dm) cell, cells sorted by (dm, scheduler).
inline std::vector<CellAggregate> aggregate_runs(const std::vector<RunSummary>& runs) {
  if (runs.empty()) throw ValidationError("aggregate_runs: no run summaries");
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> cells;
  for (const auto& r : runs) {
    auto& [acc, wall] = cells[{r.dm, r.scheduler}];
    acc.push_back(r.best_val_acc);
    wall.push_back(r.total_wall_ms);
  }
  std::vector<CellAggregate> out;
  for (const auto& [key, v] : cells) {
    CellAggregate c;
    c.dm = key.first;
    c.scheduler = key.second;
    c.n_runs = v.first.size();
    c.single_run = c.n_runs == 1;
    c.acc_mean = stats::mean(v.first);
    c.wall_mean = stats::mean(v.second);
    c.acc_std = c.single_run ? 0.0 : stats::sample_std(v.first);
    c.wall_std = c.single_run ? 0.0 : stats::sample_std(v.second);
    out.push_back(std::move(c));
  }
  return out;
}

inline std::string format_aggregate_csv(const std::vector<CellAggregate>& cells) {
  std::string out =
      "scheduler,dm,n_runs,best_val_acc_mean,best_val_acc_std,total_wall_ms_mean,total_wall_ms_std,single_run\n";
  for (const auto& c : cells)
    csv::append_row(out, {c.scheduler, c.dm, std::to_string(c.n_runs), csv::fmt(c.acc_mean), csv::fmt(c.acc_std),
                          csv::fmt(c.wall_mean), csv::fmt(c.wall_std), c.single_run ? "1" : "0"});
  return out;
}

// ---- SVG ---------------------------------------------------------------------------

namespace svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline const char* color(std::size_t k) {
  static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[k % 10];
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

/// Plot frame mapping data coordinates to a fixed 640x400 canvas.
struct Frame {
  double x0, x1, y0, y1;
  static constexpr double W = 640, H = 400, L = 60, R = 160, T = 30, B = 50;

  double px(double x) const { return L + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * (W - L - R); }
  double py(double y) const { return H - B - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * (H - T - B); }

  std::string open(const std::string& title, const std::string& xlabel, const std::string& ylabel) const {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
    s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(W / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) + "</text>\n";
    s += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(H - B) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" + num(H - B) +
         "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
      s += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(H - B + 16) + "\" text-anchor=\"middle\" font-size=\"10\">" +
           num(xv) + "</text>\n";
      s += "<text x=\"" + num(L - 6) + "\" y=\"" + num(py(yv) + 3) + "\" text-anchor=\"end\" font-size=\"10\">" +
           num(yv) + "</text>\n";
    }
    s += "<text x=\"" + num((L + W - R) / 2) + "\" y=\"" + num(H - 12) + "\" text-anchor=\"middle\" font-size=\"12\">" +
         escape(xlabel) + "</text>\n";
    s += "<text x=\"14\" y=\"" + num((T + H - B) / 2) + "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " +
         num((T + H - B) / 2) + ")\">" + escape(ylabel) + "</text>\n";
    return s;
  }

  std::string polyline(const std::vector<std::pair<double, double>>& pts, const char* stroke, bool dashed) const {
    std::string s = "<polyline fill=\"none\" stroke=\"" + std::string(stroke) + "\" stroke-width=\"1.5\"";
    if (dashed) s += " stroke-dasharray=\"4 3\"";
    s += " points=\"";
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (k) s += ' ';
      s += num(px(pts[k].first)) + "," + num(py(pts[k].second));
    }
    s += "\"/>\n";
    for (const auto& [x, y] : pts)
      s += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"2\" fill=\"" + stroke + "\"/>\n";
    return s;
  }

  std::string legend(std::size_t row, const std::string& label, const char* stroke, bool dashed) const {
    double y = T + 10 + 16 * static_cast<double>(row);
    std::string s = "<line x1=\"" + num(W - R + 10) + "\" y1=\"" + num(y) + "\" x2=\"" + num(W - R + 30) + "\" y2=\"" +
                    num(y) + "\" stroke=\"" + stroke + "\" stroke-width=\"1.5\"";
    if (dashed) s += " stroke-dasharray=\"4 3\"";
    s += "/>\n<text x=\"" + num(W - R + 34) + "\" y=\"" + num(y + 4) + "\" font-size=\"10\">" + escape(label) +
         "</text>\n";
    return s;
  }
};

}  // namespace svg

struct LabeledTrace {
  std::string label;
  CurriculumTrace trace;
};

/// Validation accuracy per epoch (solid) with the selected-data fraction
/// overlaid (dashed) on the same [0, 1] axis.
inline std::string convergence_svg(const std::vector<LabeledTrace>& traces) {
  require(!traces.empty(), "convergence plot: no traces");
  std::size_t max_epoch = 0;
  for (const auto& t : traces) {
    require(!t.trace.epochs.empty(), "convergence plot: empty trace '" + t.label + "'");
    max_epoch = std::max(max_epoch, t.trace.epochs.back().epoch);
  }
  svg::Frame f{0, std::max<double>(1, static_cast<double>(max_epoch)), 0, 1};
  std::string s = f.open("Validation accuracy and data usage", "epoch", "accuracy / fraction selected");
  std::size_t row = 0;
  for (std::size_t k = 0; k < traces.size(); ++k) {
    std::vector<std::pair<double, double>> acc, use;
    for (const auto& r : traces[k].trace.epochs) {
      acc.emplace_back(static_cast<double>(r.epoch), r.val_acc);
      use.emplace_back(static_cast<double>(r.epoch), r.frac_selected);
    }
    s += f.polyline(acc, svg::color(k), false);
    s += f.polyline(use, svg::color(k), true);
    s += f.legend(row++, traces[k].label + " val acc", svg::color(k), false);
    s += f.legend(row++, traces[k].label + " data used", svg::color(k), true);
  }
  return s + "</svg>\n";
}

inline std::string histogram_svg(const Histogram& h) {
  require(!h.counts.empty(), "histogram plot: no bins");
  double top = static_cast<double>(*std::max_element(h.counts.begin(), h.counts.end()));
  svg::Frame f{h.origin, h.lower(h.counts.size()), 0, std::max(1.0, top)};
  std::string s = f.open("Difficulty distribution (mean " + svg::num(h.mean) + ", sd " + svg::num(h.std) +
                             ", skew " + svg::num(h.skewness) + ")",
                         "difficulty", "items");
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    double x = f.px(h.lower(k)), w = f.px(h.lower(k + 1)) - x;
    double y = f.py(static_cast<double>(h.counts[k]));
    s += "<rect x=\"" + svg::num(x) + "\" y=\"" + svg::num(y) + "\" width=\"" + svg::num(w) + "\" height=\"" +
         svg::num(f.py(0) - y) + "\" fill=\"#1f77b4\" stroke=\"white\"/>\n";
  }
  return s + "</svg>\n";
}

/// One line per subject: accuracy against bin index. Empty cells are skipped.
inline std::string bin_accuracy_svg(const BinAccuracy& acc) {
  require(!acc.subjects.empty(), "bin accuracy plot: no subjects");
  svg::Frame f{0, static_cast<double>(acc.n_bins() - 1), 0, 1};
  std::string s = f.open("Accuracy by difficulty bin (bin 0: " + acc.bin_label(0) + ")", "difficulty bin", "accuracy");
  for (std::size_t j = 0; j < acc.subjects.size(); ++j) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t b = 0; b < acc.n_bins(); ++b) {
      double a = acc.accuracy(j, b);
      if (!std::isnan(a)) pts.emplace_back(static_cast<double>(b), a);
    }
    s += f.polyline(pts, svg::color(j), false);
    if (j < 20) s += f.legend(j, acc.subjects[j].str(), svg::color(j), false);
  }
  return s + "</svg>\n";
}

struct PlotInputs {
  std::vector<LabeledTrace> traces;
  std::optional<Histogram> histogram;
  std::optional<BinAccuracy> bin_accuracy;
};

/// Writes convergence.svg, difficulty_histogram.svg and bin_accuracy.svg for
/// whichever inputs are present. Returns the written paths in that order.
inline std::vector<std::filesystem::path> emit_plots(const PlotInputs& in, const std::filesystem::path& out_dir) {
  std::vector<std::pair<std::string, std::string>> files;
  if (!in.traces.empty()) files.emplace_back("convergence.svg", convergence_svg(in.traces));
  if (in.histogram) files.emplace_back("difficulty_histogram.svg", histogram_svg(*in.histogram));
  if (in.bin_accuracy) files.emplace_back("bin_accuracy.svg", bin_accuracy_svg(*in.bin_accuracy));
  if (files.empty()) throw ValidationError("emit_plots: nothing to plot");
  std::vector<std::filesystem::path> written;
  for (const auto& [name, content] : files) {
    csv::write_atomic(out_dir / name, content);
    written.push_back(out_dir / name);
  }
  return written;
}

}  // namespace irtcl
