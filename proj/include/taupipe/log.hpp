#pragma once

#include <mutex>
#include <sstream>
#include <string>

namespace taupipe::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3 };

void set_level(Level level);
Level level();

// All output goes to stderr; artifacts never depend on log text.
void write(Level level, const std::string& message);

namespace detail {
template <typename... Args>
std::string concat(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}
}  // namespace detail

template <typename... Args>
void debug(Args&&... args) {
    if (level() <= Level::Debug) write(Level::Debug, detail::concat(std::forward<Args>(args)...));
}
template <typename... Args>
void info(Args&&... args) {
    if (level() <= Level::Info) write(Level::Info, detail::concat(std::forward<Args>(args)...));
}
template <typename... Args>
void warn(Args&&... args) {
    if (level() <= Level::Warn) write(Level::Warn, detail::concat(std::forward<Args>(args)...));
}
template <typename... Args>
void error(Args&&... args) {
    write(Level::Error, detail::concat(std::forward<Args>(args)...));
}

}  // namespace taupipe::log
