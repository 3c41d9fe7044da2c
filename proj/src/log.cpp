#include "seqxfer/log.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>

namespace seqxfer {

namespace {

std::optional<LogLevel>& override_level() {
  static std::optional<LogLevel> level;
  return level;
}

LogLevel from_env() {
  const char* env = std::getenv("SEQXFER_LOG");
  if (!env) return LogLevel::kInfo;
  const std::string v(env);
  if (v == "debug") return LogLevel::kDebug;
  if (v == "warn") return LogLevel::kWarn;
  return LogLevel::kInfo;
}

}  // namespace

LogLevel log_threshold() { return override_level() ? *override_level() : from_env(); }

void set_log_threshold(LogLevel level) { override_level() = level; }

void log_line(LogLevel level, const std::string& line) {
  if (static_cast<int>(level) < static_cast<int>(log_threshold())) return;
  static const char* names[] = {"debug", "info", "warn"};
  std::cerr << "level=" << names[static_cast<int>(level)] << ' ' << line << '\n';
}

}  // namespace seqxfer
