#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace taupipe {

// Flat key=value run configuration. Lines starting with '#' are comments;
// values may interpolate ${ENV_VAR}. Relative paths resolve against the
// config file's directory.
struct RunConfig {
    std::map<std::string, std::string> values;
    std::string hash;                       // content hash of the raw file
    std::filesystem::path base_dir;

    static RunConfig load(const std::filesystem::path& path);
    static RunConfig from_text(const std::string& text,
                               const std::filesystem::path& base_dir = ".");

    bool has(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback) const;
    std::string require(const std::string& key) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Resolves the value of `key` as a path; must exist when `must_exist`.
    std::filesystem::path path(const std::string& key, bool must_exist = true) const;
    std::filesystem::path resolve(const std::string& value) const;
};

}  // namespace taupipe
