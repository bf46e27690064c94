#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace taupipe {

// --- hashing -------------------------------------------------------------

// FNV-1a, 64-bit. Used for request keys, config hashes and content
// addressing. Stable across platforms and runs, unlike std::hash.
std::uint64_t fnv1a64(std::string_view data);
std::string to_hex(std::uint64_t value);
std::string content_hash(std::string_view data);  // hex fnv1a64
std::string file_hash(const std::filesystem::path& path);

// --- strings -------------------------------------------------------------

std::string_view trim(std::string_view s);
bool is_blank(std::string_view s);

// Splits on '\n', dropping a single trailing empty segment from a final
// newline. '\r' before the break is removed.
std::vector<std::string> split_lines(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Formats a double with up to `max_decimals` digits, trailing zeros trimmed
// ("6" not "6.000000"). Used for trait values in prompts.
std::string format_number(double value, int max_decimals = 3);

// UTF-8 aware split into code points; invalid bytes pass through as
// single-byte tokens.
std::vector<std::string> utf8_codepoints(std::string_view text);

// --- deterministic randomness ---------------------------------------------
//
// std::shuffle and uniform_int_distribution are implementation-defined, so
// everything seeded goes through these helpers to keep runs reproducible
// across platforms.

std::uint64_t bounded_rand(std::mt19937_64& rng, std::uint64_t bound);

template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(bounded_rand(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt);

// --- files -----------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// --- parallelism ------------------------------------------------------------

// Runs fn(i) for i in [0, count) on up to `workers` threads. Exceptions are
// captured and the first one rethrown after all workers join. workers <= 1
// degenerates to a plain loop.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

// --- templates ---------------------------------------------------------------

// Replaces every "{name}" occurrence per `fill`; returns names of placeholders
// that remain unfilled afterwards (empty means fully rendered).
std::string fill_placeholders(std::string_view text,
                              const std::vector<std::pair<std::string, std::string>>& fill,
                              std::vector<std::string>* unfilled = nullptr);

// Number of times "{name}" occurs in text.
int count_placeholder(std::string_view text, std::string_view name);

std::string getenv_or(const std::string& name, const std::string& fallback);

}  // namespace taupipe
