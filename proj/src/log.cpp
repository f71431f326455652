#include "kf/log.hpp"

#include <cstdlib>
#include <iostream>
#include <string>

namespace kf {

LogLevel log_threshold() {
    static LogLevel level = [] {
        const char* env = std::getenv("KF_LOG");
        std::string v = env ? env : "warn";
        if (v == "error") return LogLevel::Error;
        if (v == "info") return LogLevel::Info;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Warn;
    }();
    return level;
}

void log(LogLevel level, std::string_view message) {
    if (level > log_threshold()) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "kf: " << names[static_cast<int>(level)] << ": " << message << "\n";
}

} // namespace kf
