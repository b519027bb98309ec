#include "dhn/log.hpp"

#include <cstdlib>
#include <iostream>

namespace dhn {

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("DHN_LOG_LEVEL");
        if (!env) return LogLevel::Info;
        const std::string s(env);
        if (s == "error") return LogLevel::Error;
        if (s == "debug") return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return level;
}

namespace {
void emit(const char* tag, const std::string& msg) {
    std::cerr << "[dhn:" << tag << "] " << msg << "\n";
}
} // namespace

void log_error(const std::string& msg) {
    emit("error", msg);
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info) emit("info", msg);
}

void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::Debug) emit("debug", msg);
}

} // namespace dhn
