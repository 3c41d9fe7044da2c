#pragma once

#include <string>

namespace seqxfer {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2 };

/// Threshold read from SEQXFER_LOG (debug, info, warn); defaults to info.
LogLevel log_threshold();
void set_log_threshold(LogLevel level);

/// Writes one line to stderr when `level` passes the threshold.
void log_line(LogLevel level, const std::string& line);

}  // namespace seqxfer
