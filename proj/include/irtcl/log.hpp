#pragma once

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <string_view>

namespace irtcl::log {

enum class Level { error = 0, info = 1, debug = 2 };

/// Level from IRTCL_LOG; unset or unrecognized means `error`.
inline Level level_from_env() {
  const char* v = std::getenv("IRTCL_LOG");
  if (v == nullptr) return Level::error;
  std::string_view s(v);
  if (s == "debug") return Level::debug;
  if (s == "info") return Level::info;
  return Level::error;
}

inline Level& threshold() {
  static Level lvl = level_from_env();
  return lvl;
}

inline bool enabled(Level lvl) { return static_cast<int>(lvl) <= static_cast<int>(threshold()); }

template <typename... Args>
void write(Level lvl, const Args&... args) {
  if (!enabled(lvl)) return;
  static constexpr const char* tags[] = {"error", "info", "debug"};
  std::ostringstream os;
  os << "[irtcl:" << tags[static_cast<int>(lvl)] << "] ";
  (os << ... << args);
  os << '\n';
  std::cerr << os.str();
}

template <typename... Args> void error(const Args&... args) { write(Level::error, args...); }
template <typename... Args> void info(const Args&... args) { write(Level::info, args...); }
template <typename... Args> void debug(const Args&... args) { write(Level::debug, args...); }

}  // namespace irtcl::log
