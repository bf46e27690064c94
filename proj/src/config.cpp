#include "taupipe/config.hpp"

#include <cstdlib>

#include "taupipe/errors.hpp"
#include "taupipe/util.hpp"

namespace taupipe {

namespace {

std::string interpolate_env(const std::string& value, const std::string& key) {
    std::string out;
    std::size_t i = 0;
    while (i < value.size()) {
        if (value[i] == '$' && i + 1 < value.size() && value[i + 1] == '{') {
            auto end = value.find('}', i + 2);
            if (end == std::string::npos)
                throw ConfigError("unterminated ${...} in value of " + key);
            const std::string name = value.substr(i + 2, end - i - 2);
            const char* env = std::getenv(name.c_str());
            if (env == nullptr)
                throw ConfigError("environment variable " + name + " (used by " + key +
                                  ") is not set");
            out += env;
            i = end + 1;
        } else {
            out += value[i++];
        }
    }
    return out;
}

}  // namespace

RunConfig RunConfig::from_text(const std::string& text, const std::filesystem::path& base_dir) {
    RunConfig config;
    config.hash = content_hash(text);
    config.base_dir = base_dir;
    const std::vector<std::string> lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view line = trim(lines[i]);
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(i + 1) + " is not key=value: " +
                              std::string(line));
        const std::string key{trim(line.substr(0, eq))};
        const std::string raw_value{trim(line.substr(eq + 1))};
        if (key.empty())
            throw ConfigError("config line " + std::to_string(i + 1) + " has an empty key");
        config.values[key] = interpolate_env(raw_value, key);
    }
    return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError("cannot read config " + path.string() + ": " + e.what());
    }
    return from_text(text, std::filesystem::absolute(path).parent_path());
}

bool RunConfig::has(const std::string& key) const { return values.count(key) != 0; }

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
}

std::string RunConfig::require(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw ConfigError("config key " + key + " is required");
    return it->second;
}

int RunConfig::get_int(const std::string& key, int fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        std::size_t used = 0;
        int parsed = std::stoi(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing characters");
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " is not an integer: " + it->second);
    }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        std::size_t used = 0;
        double parsed = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing characters");
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " is not a number: " + it->second);
    }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw ConfigError("config key " + key + " is not a boolean: " + it->second);
}

std::filesystem::path RunConfig::resolve(const std::string& value) const {
    std::filesystem::path p(value);
    if (p.is_absolute()) return p;
    return base_dir / p;
}

std::filesystem::path RunConfig::path(const std::string& key, bool must_exist) const {
    const std::filesystem::path p = resolve(require(key));
    if (must_exist && !std::filesystem::exists(p))
        throw ConfigError("config key " + key + " points to a missing path: " + p.string());
    return p;
}

}  // namespace taupipe
