#pragma once

// One-parameter logistic (Rasch) model: identifiers, the sparse response
// matrix, the item characteristic curve and the joint log-likelihood.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "irtcl/csv.hpp"
#include "irtcl/error.hpp"

namespace irtcl {

template <typename Tag>
class StrongId {
public:
  StrongId() = default;
  explicit StrongId(std::string v) : value_(std::move(v)) {
    require(!value_.empty(), "identifier must be non-empty");
  }

  const std::string& str() const noexcept { return value_; }
  auto operator<=>(const StrongId&) const = default;

private:
  std::string value_;
};

struct ItemTag {};
struct SubjectTag {};
using ItemId = StrongId<ItemTag>;
using SubjectId = StrongId<SubjectTag>;

struct ItemDifficulty {
  ItemId item;
  double b = 0.0;
};

struct SubjectAbility {
  SubjectId subject;
  double theta = 0.0;
};

}  // namespace irtcl

template <typename Tag>
struct std::hash<irtcl::StrongId<Tag>> {
  std::size_t operator()(const irtcl::StrongId<Tag>& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};

namespace irtcl {

/// One graded response, in dense index space.
struct Response {
  std::uint32_t subject;
  std::uint32_t item;
  std::uint8_t value;  // 0 or 1
};

/// Sparse binary response matrix. Immutable once built; responses are kept
/// sorted by (item, subject) so per-item slices are contiguous.
class ResponseMatrix {
public:
  class Builder;

  ResponseMatrix() = default;

  std::size_t n_items() const noexcept { return items_.size(); }
  std::size_t n_subjects() const noexcept { return subjects_.size(); }
  std::size_t n_responses() const noexcept { return responses_.size(); }
  bool empty() const noexcept { return responses_.empty(); }

  const std::vector<ItemId>& items() const noexcept { return items_; }
  const std::vector<SubjectId>& subjects() const noexcept { return subjects_; }
  std::span<const Response> responses() const noexcept { return responses_; }

  /// Responses to item `i` (dense index).
  std::span<const Response> item_responses(std::size_t i) const {
    return std::span<const Response>(responses_).subspan(item_offsets_[i],
                                                         item_offsets_[i + 1] - item_offsets_[i]);
  }

  std::optional<std::size_t> item_index(const ItemId& id) const {
    auto it = item_lookup_.find(id);
    if (it == item_lookup_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> subject_index(const SubjectId& id) const {
    auto it = subject_lookup_.find(id);
    if (it == subject_lookup_.end()) return std::nullopt;
    return it->second;
  }

  /// Response count per subject.
  std::vector<std::size_t> subject_counts() const {
    std::vector<std::size_t> c(subjects_.size(), 0);
    for (const auto& r : responses_) ++c[r.subject];
    return c;
  }

  bool operator==(const ResponseMatrix& o) const {
    if (items_ != o.items_ || subjects_ != o.subjects_ || responses_.size() != o.responses_.size())
      return false;
    for (std::size_t k = 0; k < responses_.size(); ++k) {
      const auto& a = responses_[k];
      const auto& b = o.responses_[k];
      if (a.subject != b.subject || a.item != b.item || a.value != b.value) return false;
    }
    return true;
  }

private:
  std::vector<ItemId> items_;
  std::vector<SubjectId> subjects_;
  std::unordered_map<ItemId, std::size_t> item_lookup_;
  std::unordered_map<SubjectId, std::size_t> subject_lookup_;
  std::vector<Response> responses_;
  std::vector<std::size_t> item_offsets_{0};
};

/// Accumulates (subject, item, response) triplets and enforces the matrix
/// invariants. Index order is first-seen order unless ids are pre-declared.
class ResponseMatrix::Builder {
public:
  std::size_t add_item(const ItemId& id) {
    auto [it, fresh] = m_.item_lookup_.emplace(id, m_.items_.size());
    if (fresh) m_.items_.push_back(id);
    return it->second;
  }

  std::size_t add_subject(const SubjectId& id) {
    auto [it, fresh] = m_.subject_lookup_.emplace(id, m_.subjects_.size());
    if (fresh) m_.subjects_.push_back(id);
    return it->second;
  }

  /// `where` labels the origin (e.g. "file.csv:12") for duplicate diagnostics.
  void add(const SubjectId& subject, const ItemId& item, int response, std::string where = {}) {
    if (response != 0 && response != 1)
      throw ValidationError(prefix(where) + "response must be 0 or 1, got " + std::to_string(response));
    auto s = static_cast<std::uint32_t>(add_subject(subject));
    auto i = static_cast<std::uint32_t>(add_item(item));
    std::uint64_t key = (static_cast<std::uint64_t>(s) << 32) | i;
    auto [it, fresh] = seen_.emplace(key, where);
    if (!fresh)
      throw ValidationError("duplicate response for (" + subject.str() + ", " + item.str() + ")" +
                            (where.empty() && it->second.empty()
                                 ? std::string()
                                 : " at " + it->second + " and " + where));
    m_.responses_.push_back({s, i, static_cast<std::uint8_t>(response)});
  }

  ResponseMatrix build() && {
    auto& r = m_.responses_;
    std::sort(r.begin(), r.end(), [](const Response& a, const Response& b) {
      return a.item != b.item ? a.item < b.item : a.subject < b.subject;
    });
    m_.item_offsets_.assign(m_.items_.size() + 1, 0);
    for (const auto& x : r) ++m_.item_offsets_[x.item + 1];
    for (std::size_t i = 0; i < m_.items_.size(); ++i) m_.item_offsets_[i + 1] += m_.item_offsets_[i];
    seen_.clear();
    return std::move(m_);
  }

private:
  static std::string prefix(const std::string& where) { return where.empty() ? "" : where + ": "; }

  ResponseMatrix m_;
  std::unordered_map<std::uint64_t, std::string> seen_;
};

/// P(correct | theta, b) = 1 / (1 + exp(-(theta - b))), evaluated without overflow.
inline double icc_prob(double theta, double b) {
  if (!std::isfinite(theta) || !std::isfinite(b))
    throw ValidationError("icc_prob: non-finite input");
  double x = theta - b;
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

inline constexpr double kProbFloor = 1e-12;

/// Stable logistic without input validation, for inner loops.
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

/// log sigmoid(x), stable for large |x|.
inline double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

/// log p(z | x = theta - b) with p clamped to [1e-12, 1 - 1e-12].
inline double log_prob_response(double x, int z) {
  double p = std::clamp(sigmoid(x), kProbFloor, 1.0 - kProbFloor);
  return z ? std::log(p) : std::log1p(-p);
}

}  // namespace detail

/// Joint log-likelihood of every response in `z`. Parameters are looked up by id;
/// a referenced subject or item without a parameter is an error.
inline double log_likelihood(const ResponseMatrix& z,
                             const std::unordered_map<SubjectId, double>& thetas,
                             const std::unordered_map<ItemId, double>& bs) {
  std::vector<double> th(z.n_subjects());
  std::vector<double> b(z.n_items());
  for (std::size_t j = 0; j < z.n_subjects(); ++j) {
    auto it = thetas.find(z.subjects()[j]);
    if (it == thetas.end()) throw ValidationError("no ability for subject '" + z.subjects()[j].str() + "'");
    th[j] = it->second;
  }
  for (std::size_t i = 0; i < z.n_items(); ++i) {
    auto it = bs.find(z.items()[i]);
    if (it == bs.end()) throw ValidationError("no difficulty for item '" + z.items()[i].str() + "'");
    b[i] = it->second;
  }
  double ll = 0.0;
  for (const auto& r : z.responses()) ll += detail::log_prob_response(th[r.subject] - b[r.item], r.value);
  return ll;
}

// ---- file formats -----------------------------------------------------------

/// `subject_id,item_id,response`
inline ResponseMatrix parse_response_csv(const csv::Table& t) {
  auto cs = t.col("subject_id");
  auto ci = t.col("item_id");
  auto cr = t.col("response");
  ResponseMatrix::Builder b;
  for (const auto& row : t.rows()) {
    auto where = t.where(row);
    const auto& rs = row.fields[cr];
    if (rs != "0" && rs != "1") throw ValidationError(where + ": response must be 0 or 1, got '" + rs + "'");
    if (row.fields[cs].empty() || row.fields[ci].empty()) throw ValidationError(where + ": empty identifier");
    b.add(SubjectId(row.fields[cs]), ItemId(row.fields[ci]), rs == "1" ? 1 : 0, where);
  }
  return std::move(b).build();
}

inline ResponseMatrix read_responses(const std::filesystem::path& path) {
  return parse_response_csv(csv::read(path));
}

/// Rows sorted by (subject, item) id so output is independent of construction order.
inline std::string format_response_csv(const ResponseMatrix& z) {
  std::vector<const Response*> rows;
  rows.reserve(z.n_responses());
  for (const auto& r : z.responses()) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(), [&](const Response* a, const Response* b) {
    const auto& sa = z.subjects()[a->subject];
    const auto& sb = z.subjects()[b->subject];
    if (sa != sb) return sa < sb;
    return z.items()[a->item] < z.items()[b->item];
  });
  std::string out = "subject_id,item_id,response\n";
  for (const auto* r : rows)
    csv::append_row(out, {z.subjects()[r->subject].str(), z.items()[r->item].str(), r->value ? "1" : "0"});
  return out;
}

inline void write_responses(const std::filesystem::path& path, const ResponseMatrix& z) {
  csv::write_atomic(path, format_response_csv(z));
}

inline nlohmann::json difficulties_to_json(const std::vector<ItemDifficulty>& v) {
  auto arr = nlohmann::json::array();
  for (const auto& d : v) arr.push_back({{"item_id", d.item.str()}, {"b", d.b}});
  return arr;
}

inline nlohmann::json abilities_to_json(const std::vector<SubjectAbility>& v) {
  auto arr = nlohmann::json::array();
  for (const auto& a : v) arr.push_back({{"subject_id", a.subject.str()}, {"theta", a.theta}});
  return arr;
}

inline std::vector<ItemDifficulty> difficulties_from_json(const nlohmann::json& j) {
  require(j.is_array(), "difficulty file: expected a JSON array");
  std::vector<ItemDifficulty> out;
  for (const auto& e : j) {
    require(e.is_object() && e.contains("item_id") && e.contains("b") && e["b"].is_number(),
            "difficulty file: each entry needs item_id and numeric b");
    double b = e["b"].get<double>();
    require(std::isfinite(b), "difficulty file: non-finite b");
    out.push_back({ItemId(e["item_id"].get<std::string>()), b});
  }
  return out;
}

inline std::vector<SubjectAbility> abilities_from_json(const nlohmann::json& j) {
  require(j.is_array(), "ability file: expected a JSON array");
  std::vector<SubjectAbility> out;
  for (const auto& e : j) {
    require(e.is_object() && e.contains("subject_id") && e.contains("theta") && e["theta"].is_number(),
            "ability file: each entry needs subject_id and numeric theta");
    double t = e["theta"].get<double>();
    require(std::isfinite(t), "ability file: non-finite theta");
    out.push_back({SubjectId(e["subject_id"].get<std::string>()), t});
  }
  return out;
}

}  // namespace irtcl
