#pragma once

#include <stdexcept>
#include <string>

namespace taupipe {

// Bad configuration: missing keys, unreadable paths, inconsistent settings.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Input data violates a documented invariant (trait out of range, third
// speaker in a dialog, ...). The message names the offending entity.
class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A file that should parse does not (malformed JSON line, bad template).
class FileParseError : public std::runtime_error {
  public:
    explicit FileParseError(const std::string& what) : std::runtime_error(what) {}
};

// A pipeline stage was invoked before the artifacts it consumes exist.
class DependencyError : public std::runtime_error {
  public:
    explicit DependencyError(const std::string& what) : std::runtime_error(what) {}
};

// Chat backend failures. `retryable` distinguishes transient transport
// trouble (handled by the retry loop) from hard protocol/auth errors.
class BackendError : public std::runtime_error {
  public:
    enum class Kind { Auth, Protocol, Transport, RetryExhausted, Unscripted };

    BackendError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const { return kind_; }

  private:
    Kind kind_;
};

}  // namespace taupipe
