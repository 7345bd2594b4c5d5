#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace lyapdoa {

enum class LogLevel { Quiet = 0, Warn = 1, Info = 2, Debug = 3 };

namespace detail {
inline std::atomic<int>& log_level_storage() {
  static std::atomic<int> level{static_cast<int>(LogLevel::Warn)};
  return level;
}
inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

inline void set_log_level(LogLevel level) { detail::log_level_storage().store(static_cast<int>(level)); }

inline bool log_enabled(LogLevel level) {
  return static_cast<int>(level) <= detail::log_level_storage().load();
}

inline void log(LogLevel level, std::string_view msg) {
  if (!log_enabled(level)) return;
  static constexpr const char* tags[] = {"", "warn", "info", "debug"};
  std::lock_guard lock(detail::log_mutex());
  std::clog << "[" << tags[static_cast<int>(level)] << "] " << msg << '\n';
}

}  // namespace lyapdoa
