#pragma once

// Artificial crowds: response matrices produced either by an ensemble of
// perturbed small learners or by grading externally supplied predictions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "irtcl/csv.hpp"
#include "irtcl/difficulty.hpp"
#include "irtcl/error.hpp"
#include "irtcl/log.hpp"
#include "irtcl/model.hpp"
#include "irtcl/rasch.hpp"

namespace irtcl {

struct CrowdConfig {
  std::size_t n_base_learners = 10;
  std::vector<std::size_t> variant_epochs{1, 3, 5};
  std::vector<double> subsample_fracs{0.8};
  std::vector<double> label_flip_probs{0.0, 0.1};
  std::uint64_t seed = 0;
  double learner_lr = 0.05;
  std::size_t learner_batch = 32;

  std::size_t n_perturbations() const { return subsample_fracs.size() * label_flip_probs.size(); }
  std::size_t n_subjects() const { return n_base_learners * variant_epochs.size() * n_perturbations(); }

  bool operator==(const CrowdConfig&) const = default;

  void validate() const {
    require(n_base_learners >= 1, "crowd: need at least one learner");
    require(!variant_epochs.empty(), "crowd: variant_epochs must be non-empty");
    for (auto e : variant_epochs) require(e >= 1, "crowd: variant epochs must be >= 1");
    require(!subsample_fracs.empty() && !label_flip_probs.empty(), "crowd: need at least one perturbation");
    for (double f : subsample_fracs) require(f > 0 && f <= 1, "crowd: subsample fractions must lie in (0, 1]");
    for (double p : label_flip_probs) require(p >= 0 && p < 1, "crowd: label flip probabilities must lie in [0, 1)");
    require(learner_lr > 0, "crowd: learner_lr must be > 0");
    require(learner_batch >= 1, "crowd: learner_batch must be >= 1");
  }
};

struct PredictionRecord {
  SubjectId subject;
  ItemId item;
  std::string predicted_label;
  std::optional<double> correct_prob;
};

struct CrowdResult {
  ResponseMatrix responses;
  std::vector<PredictionRecord> predictions;
};

/// Learner architecture for crowd member `l`: alternating softmax regression
/// and MLPs of growing width, each reading a learner-specific share of the
/// input features.
inline ModelSpec crowd_learner_spec(std::size_t l) {
  if (l % 2 == 0) return {ModelKind::logistic, 0};
  return {ModelKind::mlp, 8 * (1 + l / 2)};
}

inline double crowd_learner_feature_share(std::size_t l) {
  static constexpr double shares[] = {1.0, 0.75, 0.5};
  return shares[l % 3];
}

inline std::string crowd_subject_id(std::size_t learner, std::size_t epochs, std::size_t perturbation) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "l%02zu-e%02zu-p%zu", learner, epochs, perturbation);
  return buf;
}

/// Trains every (learner, perturbation) pair on a sub-sampled, label-flipped
/// copy of `val`, snapshots it after each variant epoch count, and grades
/// its predictions on every item of `train`. One subject per
/// (learner, epochs, perturbation).
inline CrowdResult simulate_crowd(const LabeledDataset& train, const LabeledDataset& val, const CrowdConfig& cfg) {
  cfg.validate();
  train.validate();
  val.validate();
  require(!train.empty() && !val.empty(), "simulate_crowd: datasets must be non-empty");
  require(train.n_features == val.n_features, "simulate_crowd: train/val feature mismatch");
  require(val.distinct_labels() >= 2, "simulate_crowd: degenerate dataset (single class in the crowd's split)");
  const std::size_t n_classes = std::max({train.n_classes, val.n_classes, std::size_t{2}});
  const std::size_t max_epochs = *std::max_element(cfg.variant_epochs.begin(), cfg.variant_epochs.end());

  struct Subject {
    std::string id;
    Predictions preds;
  };
  std::vector<Subject> subjects;
  subjects.reserve(cfg.n_subjects());

  for (std::size_t l = 0; l < cfg.n_base_learners; ++l) {
    std::size_t p = 0;
    for (double frac : cfg.subsample_fracs) {
      for (double flip : cfg.label_flip_probs) {
        std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(p)};
        std::mt19937_64 rng(seq);

        auto n_keep = static_cast<std::size_t>(std::llround(frac * static_cast<double>(val.size())));
        if (n_keep == 0) throw ValidationError("simulate_crowd: subsample fraction " + csv::fmt(frac) + " keeps no examples");
        std::vector<std::size_t> rows(val.size());
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        std::shuffle(rows.begin(), rows.end(), rng);
        rows.resize(n_keep);
        LabeledDataset noisy = val.subset(rows);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> other(1, n_classes - 1);
        for (auto& y : noisy.labels)
          if (unif(rng) < flip) y = static_cast<int>((static_cast<std::size_t>(y) + other(rng)) % n_classes);
        noisy.n_classes = n_classes;

        std::vector<std::size_t> mask(train.n_features);
        std::iota(mask.begin(), mask.end(), std::size_t{0});
        std::shuffle(mask.begin(), mask.end(), rng);
        auto width = static_cast<std::size_t>(
            std::ceil(crowd_learner_feature_share(l) * static_cast<double>(train.n_features)));
        mask.resize(std::max<std::size_t>(1, width));
        std::sort(mask.begin(), mask.end());

        Classifier model(crowd_learner_spec(l), train.n_features, n_classes, rng(), mask);
        OptimizerConfig oc;
        oc.kind = OptimizerKind::adamw;
        oc.lr = cfg.learner_lr;
        oc.weight_decay = 0.01;
        Optimizer opt(oc, model.n_params());
        std::vector<std::size_t> order(noisy.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t e = 1; e <= max_epochs; ++e) {
          std::shuffle(order.begin(), order.end(), rng);
          train_epoch(model, opt, noisy, order, cfg.learner_batch);
          if (std::find(cfg.variant_epochs.begin(), cfg.variant_epochs.end(), e) != cfg.variant_epochs.end())
            subjects.push_back({crowd_subject_id(l, e, p), predict(model, train)});
        }
        ++p;
      }
    }
  }
  std::sort(subjects.begin(), subjects.end(), [](const Subject& a, const Subject& b) { return a.id < b.id; });

  CrowdResult out;
  ResponseMatrix::Builder builder;
  for (const auto& id : train.ids) builder.add_item(id);
  out.predictions.reserve(subjects.size() * train.size());
  for (const auto& s : subjects) {
    SubjectId sid(s.id);
    for (std::size_t k = 0; k < train.size(); ++k) {
      int pred = s.preds.labels[k];
      builder.add(sid, train.ids[k], pred == train.labels[k] ? 1 : 0);
      out.predictions.push_back({sid, train.ids[k], std::to_string(pred), s.preds.prob(k, train.labels[k])});
    }
  }
  out.responses = std::move(builder).build();
  log::info("simulate_crowd: ", subjects.size(), " subjects x ", train.size(), " items");
  return out;
}

// ---- synthetic Rasch crowds ------------------------------------------------------

struct RaschCrowd {
  ResponseMatrix responses;
  std::vector<double> theta;  // by subject index of `responses`
  std::vector<double> b;      // by item index of `responses`
};

/// Responses drawn from the 1PL model for the given true parameters.
inline RaschCrowd simulate_rasch_responses(std::vector<double> theta, std::vector<double> b, std::uint64_t seed) {
  require(!theta.empty() && !b.empty(), "simulate_rasch_responses: need subjects and items");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t sw = std::to_string(theta.size()).size();
  const std::size_t iw = std::to_string(b.size()).size();
  auto pad = [](std::size_t v, std::size_t w) {
    auto s = std::to_string(v);
    return std::string(w - s.size(), '0') + s;
  };
  ResponseMatrix::Builder builder;
  for (std::size_t i = 0; i < b.size(); ++i) builder.add_item(ItemId("q" + pad(i, iw)));
  for (std::size_t j = 0; j < theta.size(); ++j) builder.add_subject(SubjectId("s" + pad(j, sw)));
  for (std::size_t j = 0; j < theta.size(); ++j) {
    SubjectId sid("s" + pad(j, sw));
    for (std::size_t i = 0; i < b.size(); ++i)
      builder.add(sid, ItemId("q" + pad(i, iw)), unif(rng) < icc_prob(theta[j], b[i]) ? 1 : 0);
  }
  return {std::move(builder).build(), std::move(theta), std::move(b)};
}

/// theta ~ N(0, theta_sd^2), b ~ N(0, b_sd^2), then 1PL responses.
inline RaschCrowd make_rasch_crowd(std::size_t n_subjects, std::size_t n_items, double theta_sd, double b_sd,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> theta(n_subjects), b(n_items);
  for (auto& t : theta) t = theta_sd * normal(rng);
  for (auto& x : b) x = b_sd * normal(rng);
  return simulate_rasch_responses(std::move(theta), std::move(b), rng());
}

// ---- prediction files -------------------------------------------------------------

/// Gold labels CSV: `item_id,label`.
inline std::unordered_map<ItemId, std::string> read_gold_labels(const std::filesystem::path& path) {
  auto t = csv::read(path);
  auto ci = t.col("item_id");
  auto cl = t.col("label");
  std::unordered_map<ItemId, std::string> gold;
  for (const auto& row : t.rows()) {
    ItemId id(row.fields[ci]);
    if (!gold.emplace(id, row.fields[cl]).second)
      throw ValidationError(t.where(row) + ": duplicate gold label for '" + id.str() + "'");
  }
  return gold;
}

inline std::string format_gold_csv(const LabeledDataset& ds) {
  std::string out = "item_id,label\n";
  for (std::size_t k = 0; k < ds.size(); ++k) csv::append_row(out, {ds.ids[k].str(), std::to_string(ds.labels[k])});
  return out;
}

inline std::string format_prediction_csv(const std::vector<PredictionRecord>& preds) {
  std::string out = "subject_id,item_id,predicted_label,correct_prob\n";
  for (const auto& p : preds)
    csv::append_row(out, {p.subject.str(), p.item.str(), p.predicted_label,
                          p.correct_prob ? csv::fmt(*p.correct_prob) : std::string()});
  return out;
}

/// Grades a prediction CSV (`subject_id,item_id,predicted_label[,correct_prob]`)
/// against gold labels, or passes an already graded CSV
/// (`subject_id,item_id,response`) through. Gold labels are required only
/// for ungraded input; when given, every item must appear in them.
inline ResponseMatrix ingest_predictions(const std::filesystem::path& path,
                                         const std::unordered_map<ItemId, std::string>* gold = nullptr) {
  auto t = csv::read(path);
  if (t.has("response") && !t.has("predicted_label")) {
    auto z = parse_response_csv(t);
    if (gold)
      for (const auto& id : z.items())
        if (!gold->count(id)) throw ValidationError(t.source() + ": unknown item id '" + id.str() + "'");
    return z;
  }
  if (!t.has("predicted_label"))
    throw ValidationError(t.source() + ": need a predicted_label or response column");
  if (!gold) throw ValidationError(t.source() + ": grading predictions requires gold labels");
  auto cs = t.col("subject_id");
  auto ci = t.col("item_id");
  auto cp = t.col("predicted_label");
  std::optional<std::size_t> cprob;
  if (t.has("correct_prob")) cprob = t.col("correct_prob");
  ResponseMatrix::Builder builder;
  for (const auto& row : t.rows()) {
    auto where = t.where(row);
    if (row.fields[cs].empty() || row.fields[ci].empty()) throw ValidationError(where + ": empty identifier");
    ItemId item(row.fields[ci]);
    auto g = gold->find(item);
    if (g == gold->end()) throw ValidationError(where + ": unknown item id '" + item.str() + "'");
    if (cprob && !row.fields[*cprob].empty()) {
      double p = csv::to_double(row.fields[*cprob], where);
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(where + ": correct_prob outside [0, 1]");
    }
    builder.add(SubjectId(row.fields[cs]), item, row.fields[cp] == g->second ? 1 : 0, where);
  }
  return std::move(builder).build();
}

// ---- accuracy by difficulty bin ------------------------------------------------------

struct BinAccuracy {
  std::vector<double> edges;                    // k edges -> k + 1 bins
  std::vector<SubjectId> subjects;
  std::vector<std::vector<std::size_t>> count;  // [subject][bin]
  std::vector<std::vector<std::size_t>> correct;

  std::size_t n_bins() const { return edges.size() + 1; }

  /// NaN for an empty cell.
  double accuracy(std::size_t s, std::size_t bin) const {
    if (count[s][bin] == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(correct[s][bin]) / static_cast<double>(count[s][bin]);
  }

  std::string bin_label(std::size_t bin) const {
    if (bin == 0) return "<" + csv::fmt(edges.front());
    if (bin == edges.size()) return ">=" + csv::fmt(edges.back());
    return "[" + csv::fmt(edges[bin - 1]) + "," + csv::fmt(edges[bin]) + ")";
  }
};

inline const std::vector<double>& default_bin_edges() {
  static const std::vector<double> edges{-3, -2, -1, 0, 1, 2, 3};
  return edges;
}

/// Bin of score `b`: 0 for b < e1, k for b >= ek.
inline std::size_t difficulty_bin(std::span<const double> edges, double b) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), b) - edges.begin());
}

inline BinAccuracy accuracy_by_difficulty_bin(const ResponseMatrix& z, const DifficultyTable& table,
                                              std::vector<double> edges = default_bin_edges()) {
  require(!edges.empty(), "accuracy_by_difficulty_bin: need at least one edge");
  for (std::size_t k = 1; k < edges.size(); ++k)
    require(edges[k] > edges[k - 1], "accuracy_by_difficulty_bin: edges must be strictly increasing");
  std::vector<std::size_t> item_bin(z.n_items());
  for (std::size_t i = 0; i < z.n_items(); ++i) {
    if (!table.contains(z.items()[i]))
      throw ValidationError("accuracy_by_difficulty_bin: item '" + z.items()[i].str() + "' is not scored");
    item_bin[i] = difficulty_bin(edges, table.at(z.items()[i]));
  }
  BinAccuracy out;
  out.edges = std::move(edges);
  out.subjects = z.subjects();
  out.count.assign(z.n_subjects(), std::vector<std::size_t>(out.n_bins(), 0));
  out.correct = out.count;
  for (const auto& r : z.responses()) {
    ++out.count[r.subject][item_bin[r.item]];
    out.correct[r.subject][item_bin[r.item]] += r.value;
  }
  return out;
}

inline std::string format_bin_accuracy_csv(const BinAccuracy& acc) {
  std::string out = "subject_id,bin,lower,upper,n,accuracy\n";
  for (std::size_t s = 0; s < acc.subjects.size(); ++s) {
    for (std::size_t bin = 0; bin < acc.n_bins(); ++bin) {
      std::string lo = bin == 0 ? "-inf" : csv::fmt(acc.edges[bin - 1]);
      std::string hi = bin == acc.edges.size() ? "inf" : csv::fmt(acc.edges[bin]);
      double a = acc.accuracy(s, bin);
      csv::append_row(out, {acc.subjects[s].str(), std::to_string(bin), lo, hi, std::to_string(acc.count[s][bin]),
                            std::isnan(a) ? std::string() : csv::fmt(a)});
    }
  }
  return out;
}

}  // namespace irtcl
