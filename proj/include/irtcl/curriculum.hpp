#pragma once

// Training-data selection rules and heuristic difficulty measurers.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "irtcl/csv.hpp"
#include "irtcl/difficulty.hpp"
#include "irtcl/error.hpp"
#include "irtcl/rasch.hpp"

namespace irtcl {

// ---- selection ----------------------------------------------------------------

/// Items whose difficulty does not exceed `threshold` (ties included), in id order.
inline std::vector<ItemId> select_dds_mae(const DifficultyTable& table, double threshold) {
  std::vector<ItemId> out;
  for (const auto& [id, score] : table.scores())
    if (score <= threshold) out.push_back(id);
  return out;
}

enum class CompetenceShape { linear, root };

struct CompetenceSchedule {
  double c0 = 0.01;
  std::size_t T = 10;
  CompetenceShape shape = CompetenceShape::linear;

  bool operator==(const CompetenceSchedule&) const = default;

  void validate() const {
    require(c0 > 0.0 && c0 <= 1.0, "competence: c0 must lie in (0, 1]");
    require(T >= 1, "competence: T must be >= 1");
  }
};

/// Fraction of the easiest data available at step `t`.
///   linear: min(1, t (1 - c0) / T + c0)
///   root:   min(1, sqrt(t (1 - c0^2) / T + c0^2))
inline double competence(std::size_t t, const CompetenceSchedule& s) {
  s.validate();
  if (t >= s.T) return 1.0;
  double frac = static_cast<double>(t) / static_cast<double>(s.T);
  double c = s.shape == CompetenceShape::linear ? frac * (1.0 - s.c0) + s.c0
                                                : std::sqrt(frac * (1.0 - s.c0 * s.c0) + s.c0 * s.c0);
  return std::min(1.0, c);
}

/// The ceil(c * n_total) lowest-scored items, ties broken by ascending id.
/// Result is in id order.
inline std::vector<ItemId> select_competence(const DifficultyTable& table, double c, std::size_t n_total) {
  require(c > 0.0 && c <= 1.0, "select_competence: c must lie in (0, 1]");
  // The small slack keeps products such as 0.01 * 10000 from rounding up.
  auto want = static_cast<std::size_t>(std::ceil(c * static_cast<double>(n_total) - 1e-9));
  want = std::min(want, table.size());
  std::vector<std::pair<double, const ItemId*>> ranked;
  ranked.reserve(table.size());
  for (const auto& [id, score] : table.scores()) ranked.emplace_back(score, &id);
  // The map is already in id order, so a stable sort on score breaks ties by id.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<ItemId> out;
  out.reserve(want);
  for (std::size_t k = 0; k < want; ++k) out.push_back(*ranked[k].second);
  std::sort(out.begin(), out.end());
  return out;
}

// ---- heuristic difficulty measurers -------------------------------------------

/// Text fields of one example (one field for single-sentence tasks, two for pairs).
using TextFields = std::vector<std::string>;
using TextCorpus = std::map<ItemId, TextFields>;

/// Lowercased whitespace tokens of the fields joined by a space.
inline std::vector<std::string> tokenize(const TextFields& fields) {
  std::vector<std::string> toks;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) toks.push_back(std::move(cur));
    cur.clear();
  };
  for (const auto& f : fields) {
    for (unsigned char ch : f) {
      if (std::isspace(ch)) {
        flush();
      } else {
        cur.push_back(static_cast<char>(std::tolower(ch)));
      }
    }
    flush();
  }
  return toks;
}

inline DifficultyTable score_sentence_length(const TextCorpus& texts) {
  require(!texts.empty(), "score_sentence_length: no texts");
  DifficultyTable t(DifficultySource::sentence_length);
  for (const auto& [id, fields] : texts) t.set(id, static_cast<double>(tokenize(fields).size()));
  return t;
}

struct WordCounts {
  std::unordered_map<std::string, std::size_t> counts;
  std::size_t total = 0;

  std::size_t vocabulary() const { return counts.size(); }
};

inline WordCounts count_words(const TextCorpus& corpus) {
  WordCounts wc;
  for (const auto& [id, fields] : corpus) {
    for (auto& tok : tokenize(fields)) {
      ++wc.counts[tok];
      ++wc.total;
    }
  }
  return wc;
}

/// -sum over tokens of log p(w), with p(w) = (count(w) + 1) / (total + V).
inline DifficultyTable score_word_rarity(const TextCorpus& texts, const WordCounts& corpus) {
  if (corpus.vocabulary() == 0) throw ValidationError("score_word_rarity: empty vocabulary");
  const double denom = static_cast<double>(corpus.total + corpus.vocabulary());
  DifficultyTable t(DifficultySource::word_rarity);
  for (const auto& [id, fields] : texts) {
    double s = 0.0;
    for (const auto& tok : tokenize(fields)) {
      auto it = corpus.counts.find(tok);
      double c = it == corpus.counts.end() ? 0.0 : static_cast<double>(it->second);
      s -= std::log((c + 1.0) / denom);
    }
    t.set(id, s);
  }
  return t;
}

/// Text corpus CSV: `item_id,text[,text2],label`. Labels are not needed for scoring.
inline TextCorpus parse_text_corpus(const csv::Table& t) {
  auto ci = t.col("item_id");
  auto ct = t.col("text");
  std::optional<std::size_t> ct2;
  if (t.has("text2")) ct2 = t.col("text2");
  TextCorpus out;
  for (const auto& row : t.rows()) {
    ItemId id(row.fields[ci]);
    TextFields f{row.fields[ct]};
    if (ct2) f.push_back(row.fields[*ct2]);
    if (!out.emplace(id, std::move(f)).second)
      throw ValidationError(t.where(row) + ": duplicate item '" + id.str() + "'");
  }
  return out;
}

}  // namespace irtcl
