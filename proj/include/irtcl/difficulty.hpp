#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "irtcl/csv.hpp"
#include "irtcl/error.hpp"
#include "irtcl/rasch.hpp"

namespace irtcl {

enum class DifficultySource { irt_ac, sentence_length, word_rarity, external };

inline std::string_view to_string(DifficultySource s) {
  switch (s) {
    case DifficultySource::irt_ac: return "irt_ac";
    case DifficultySource::sentence_length: return "sentence_length";
    case DifficultySource::word_rarity: return "word_rarity";
    case DifficultySource::external: return "external";
  }
  return "external";
}

inline DifficultySource difficulty_source_from(std::string_view s) {
  if (s == "irt_ac") return DifficultySource::irt_ac;
  if (s == "sentence_length") return DifficultySource::sentence_length;
  if (s == "word_rarity") return DifficultySource::word_rarity;
  if (s == "external") return DifficultySource::external;
  throw ValidationError("unknown difficulty source '" + std::string(s) + "'");
}

/// Item id -> difficulty score. Higher means harder; all scores finite.
/// Iteration is in ascending id order.
class DifficultyTable {
public:
  DifficultyTable() = default;
  explicit DifficultyTable(DifficultySource source) : source_(source) {}

  void set(const ItemId& id, double score) {
    if (!std::isfinite(score)) throw ValidationError("non-finite difficulty for '" + id.str() + "'");
    scores_[id] = score;
  }

  DifficultySource source() const noexcept { return source_; }
  std::size_t size() const noexcept { return scores_.size(); }
  bool empty() const noexcept { return scores_.empty(); }
  bool contains(const ItemId& id) const { return scores_.count(id) != 0; }

  double at(const ItemId& id) const {
    auto it = scores_.find(id);
    if (it == scores_.end()) throw ValidationError("item '" + id.str() + "' has no difficulty score");
    return it->second;
  }

  const std::map<ItemId, double>& scores() const noexcept { return scores_; }

  bool operator==(const DifficultyTable&) const = default;

private:
  DifficultySource source_ = DifficultySource::external;
  std::map<ItemId, double> scores_;
};

/// CSV `item_id,score,source`. The source column must be constant.
inline DifficultyTable parse_difficulty_csv(const csv::Table& t) {
  auto ci = t.col("item_id");
  auto cs = t.col("score");
  auto csrc = t.col("source");
  if (t.rows().empty()) throw ValidationError(t.source() + ": difficulty table has no rows");
  auto src = difficulty_source_from(t.rows().front().fields[csrc]);
  DifficultyTable table(src);
  for (const auto& row : t.rows()) {
    auto where = t.where(row);
    if (difficulty_source_from(row.fields[csrc]) != src)
      throw ValidationError(where + ": mixed difficulty sources in one table");
    ItemId id(row.fields[ci]);
    if (table.contains(id)) throw ValidationError(where + ": duplicate item '" + id.str() + "'");
    double v = csv::to_double(row.fields[cs], where);
    if (!std::isfinite(v)) throw ValidationError(where + ": non-finite score");
    table.set(id, v);
  }
  return table;
}

inline DifficultyTable read_difficulty_table(const std::filesystem::path& path) {
  return parse_difficulty_csv(csv::read(path));
}

inline std::string format_difficulty_csv(const DifficultyTable& table) {
  std::string out = "item_id,score,source\n";
  std::string src(to_string(table.source()));
  for (const auto& [id, v] : table.scores()) csv::append_row(out, {id.str(), csv::fmt(v), src});
  return out;
}

inline void write_difficulty_table(const std::filesystem::path& path, const DifficultyTable& table) {
  csv::write_atomic(path, format_difficulty_csv(table));
}

}  // namespace irtcl
