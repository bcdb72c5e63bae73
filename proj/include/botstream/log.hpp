#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>

namespace botstream {

enum class LogLevel : int { error = 0, warn = 1, info = 2, debug = 3 };

// Level comes from BOTSTREAM_LOG (error|warn|info|debug), default warn.
inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("BOTSTREAM_LOG");
        if (!env) return LogLevel::warn;
        std::string s(env);
        if (s == "error") return LogLevel::error;
        if (s == "info") return LogLevel::info;
        if (s == "debug") return LogLevel::debug;
        return LogLevel::warn;
    }();
    return level;
}

namespace detail {
inline std::mutex& log_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace detail

template <typename... Args>
void log_at(LogLevel level, const char* tag, Args&&... args) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) return;
    std::ostringstream os;
    (os << ... << args);
    std::lock_guard<std::mutex> lock(detail::log_mutex());
    std::cerr << "botstream[" << tag << "] " << os.str() << '\n';
}

template <typename... Args>
void log_error(Args&&... args) { log_at(LogLevel::error, "error", std::forward<Args>(args)...); }
template <typename... Args>
void log_warn(Args&&... args) { log_at(LogLevel::warn, "warn", std::forward<Args>(args)...); }
template <typename... Args>
void log_info(Args&&... args) { log_at(LogLevel::info, "info", std::forward<Args>(args)...); }
template <typename... Args>
void log_debug(Args&&... args) { log_at(LogLevel::debug, "debug", std::forward<Args>(args)...); }

}  // namespace botstream
