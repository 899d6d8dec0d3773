#pragma once

#include <atomic>
#include <cstdio>

#include <fmt/core.h>

namespace ecg {

enum class LogLevel { debug = 0, info = 1, warn = 2, quiet = 3 };

inline std::atomic<LogLevel>& log_level() {
  static std::atomic<LogLevel> level{LogLevel::info};
  return level;
}

template <typename... Args>
void log_at(LogLevel level, const char* tag, fmt::format_string<Args...> f, Args&&... args) {
  if (level < log_level().load()) return;
  fmt::print(stderr, "[{}] {}\n", tag, fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void log_info(fmt::format_string<Args...> f, Args&&... args) {
  log_at(LogLevel::info, "info", f, std::forward<Args>(args)...);
}

template <typename... Args>
void log_warn(fmt::format_string<Args...> f, Args&&... args) {
  log_at(LogLevel::warn, "warn", f, std::forward<Args>(args)...);
}

template <typename... Args>
void log_debug(fmt::format_string<Args...> f, Args&&... args) {
  log_at(LogLevel::debug, "debug", f, std::forward<Args>(args)...);
}

}  // namespace ecg
