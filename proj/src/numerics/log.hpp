#pragma once

#include <functional>
#include <string>

namespace drift {

enum class LogLevel { kInfo, kWarning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

// Replaces the process-wide sink (default: stderr). Pass nullptr to restore it.
void set_log_sink(LogSink sink);
void log_message(LogLevel level, const std::string& msg);
inline void log_warning(const std::string& msg) { log_message(LogLevel::kWarning, msg); }
inline void log_info(const std::string& msg) { log_message(LogLevel::kInfo, msg); }

}  // namespace drift
