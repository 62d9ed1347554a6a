#ifndef UNFOLD_COMMON_HPP_
#define UNFOLD_COMMON_HPP_

#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace unfold {

/// Closed interval [lo, hi] on the real line.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    Interval() = default;
    Interval(double lo_, double hi_) : lo(lo_), hi(hi_) {
        if (!(lo < hi))
            throw std::invalid_argument("Interval: need lo < hi, got [" +
                                        std::to_string(lo_) + ", " + std::to_string(hi_) + "]");
    }

    double length() const { return hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
    bool contains_open(double x) const { return x > lo && x < hi; }
};

enum class LogLevel { silent = 0, warn = 1, info = 2, debug = 3 };

// Log level comes from the UNFOLD_LOG environment variable
// (silent|warn|info|debug); defaults to warn.
LogLevel log_level();

void log_msg(LogLevel level, const std::string& msg);

inline void log_warn(const std::string& msg) { log_msg(LogLevel::warn, msg); }
inline void log_info(const std::string& msg) { log_msg(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log_msg(LogLevel::debug, msg); }

}  // namespace unfold

#endif  // UNFOLD_COMMON_HPP_
