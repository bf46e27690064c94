#include "taupipe/log.hpp"

#include <atomic>
#include <cstdio>

namespace taupipe::log {

namespace {
std::atomic<Level> g_level{Level::Info};
std::mutex g_mutex;

const char* label(Level level) {
    switch (level) {
        case Level::Debug: return "debug";
        case Level::Info: return "info";
        case Level::Warn: return "warn";
        case Level::Error: return "error";
    }
    return "?";
}
}  // namespace

void set_level(Level level) { g_level.store(level); }

Level level() { return g_level.load(); }

void write(Level level, const std::string& message) {
    std::lock_guard<std::mutex> lock(g_mutex);
    std::fprintf(stderr, "[%s] %s\n", label(level), message.c_str());
}

}  // namespace taupipe::log
