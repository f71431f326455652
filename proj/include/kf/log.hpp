#pragma once

#include <string_view>

namespace kf {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Threshold comes from KF_LOG (error|warn|info|debug); default warn.
LogLevel log_threshold();

void log(LogLevel level, std::string_view message);

inline void log_error(std::string_view m) { log(LogLevel::Error, m); }
inline void log_warn(std::string_view m) { log(LogLevel::Warn, m); }
inline void log_info(std::string_view m) { log(LogLevel::Info, m); }
inline void log_debug(std::string_view m) { log(LogLevel::Debug, m); }

} // namespace kf
