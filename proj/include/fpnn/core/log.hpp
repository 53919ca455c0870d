#pragma once

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string_view>

namespace fpnn::log {

enum class Level { error = 0, info = 1, debug = 2 };

/// Level from FPNN_LOG (error|info|debug); unset or unrecognized means info.
inline Level level() {
  static const Level lvl = [] {
    const char* env = std::getenv("FPNN_LOG");
    const std::string_view v = env ? env : "";
    if (v == "error") return Level::error;
    if (v == "debug") return Level::debug;
    return Level::info;
  }();
  return lvl;
}

inline bool enabled(Level l) { return static_cast<int>(l) <= static_cast<int>(level()); }

template <typename... Args>
void write(Level l, const Args&... args) {
  if (!enabled(l)) return;
  static constexpr const char* tags[] = {"error", "info", "debug"};
  std::ostringstream s;
  s << "[fpnn " << tags[static_cast<int>(l)] << "] ";
  (s << ... << args);
  s << '\n';
  std::cerr << s.str();
}

template <typename... Args>
void error(const Args&... args) { write(Level::error, args...); }
template <typename... Args>
void info(const Args&... args) { write(Level::info, args...); }
template <typename... Args>
void debug(const Args&... args) { write(Level::debug, args...); }

}  // namespace fpnn::log
