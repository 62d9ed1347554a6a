#include "unfold/common.hpp"

#include <cstring>
#include <mutex>

namespace unfold {

LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("UNFOLD_LOG");
        if (!env) return LogLevel::warn;
        if (std::strcmp(env, "silent") == 0) return LogLevel::silent;
        if (std::strcmp(env, "info") == 0) return LogLevel::info;
        if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
        return LogLevel::warn;
    }();
    return level;
}

void log_msg(LogLevel level, const std::string& msg) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) return;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    const char* tag = level == LogLevel::warn ? "warn" : (level == LogLevel::info ? "info" : "debug");
    std::fprintf(stderr, "[unfold %s] %s\n", tag, msg.c_str());
}

}  // namespace unfold
