#pragma once

// Minimal RFC 4180 CSV reading/writing plus atomic file output.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include "irtcl/error.hpp"

namespace irtcl::csv {

struct Row {
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::vector<std::string> fields;
};

/// Parsed table with a header. Field access by column name.
class Table {
public:
  Table(std::vector<std::string> header, std::vector<Row> rows, std::string source)
      : header_(std::move(header)), rows_(std::move(rows)), source_(std::move(source)) {
    for (std::size_t i = 0; i < header_.size(); ++i) index_.emplace(header_[i], i);
  }

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<Row>& rows() const { return rows_; }
  const std::string& source() const { return source_; }

  bool has(const std::string& col) const { return index_.count(col) != 0; }

  std::size_t col(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError(source_ + ": missing column '" + name + "'");
    return it->second;
  }

  std::string where(const Row& r) const { return source_ + ":" + std::to_string(r.line); }

private:
  std::vector<std::string> header_;
  std::vector<Row> rows_;
  std::string source_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline std::vector<Row> parse_records(std::string_view text, const std::string& source) {
  std::vector<Row> out;
  Row cur;
  std::string field;
  bool in_quotes = false;
  bool field_quoted = false;
  std::size_t line = 1;
  cur.line = 1;
  auto end_field = [&] {
    cur.fields.push_back(std::move(field));
    field.clear();
    field_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    bool blank = cur.fields.size() == 1 && cur.fields[0].empty();
    if (!blank) out.push_back(std::move(cur));
    cur = Row{};
    cur.line = line;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_quoted)
          throw ValidationError(source + ":" + std::to_string(line) + ": stray quote");
        in_quotes = true;
        field_quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        ++line;
        end_record();
        break;
      default:
        field.push_back(c);
    }
  }
  if (in_quotes) throw ValidationError(source + ": unterminated quoted field");
  if (!field.empty() || !cur.fields.empty() || field_quoted) end_record();
  return out;
}

inline Table parse(std::string_view text, const std::string& source) {
  // Strip a UTF-8 BOM.
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  auto rows = parse_records(text, source);
  if (rows.empty()) throw ValidationError(source + ": empty file (no header)");
  std::vector<std::string> header = std::move(rows.front().fields);
  rows.erase(rows.begin());
  for (const auto& r : rows) {
    if (r.fields.size() != header.size())
      throw ValidationError(source + ":" + std::to_string(r.line) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(r.fields.size()));
  }
  return Table(std::move(header), std::move(rows), source);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Table read(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

inline double to_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || s.empty())
    throw ValidationError(where + ": not a number: '" + s + "'");
  return v;
}

inline long long to_int(const std::string& s, const std::string& where) {
  long long v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || s.empty())
    throw ValidationError(where + ": not an integer: '" + s + "'");
  return v;
}

/// Shortest representation that round-trips; "nan"/"inf" spelled out.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

inline std::string quote(std::string_view s) {
  bool needs = s.find_first_of(",\"\n\r") != std::string_view::npos;
  if (!needs) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void append_row(std::string& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += quote(fields[i]);
  }
  out.push_back('\n');
}

/// Writes via a sibling temp file and rename, so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw RuntimeError("cannot create directory '" + path.parent_path().string() + "'");
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw RuntimeError("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw RuntimeError("cannot rename into '" + path.string() + "'");
  }
}

}  // namespace irtcl::csv
