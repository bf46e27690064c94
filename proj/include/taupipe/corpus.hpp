#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "taupipe/traits.hpp"

namespace taupipe {

enum class UtteranceKind { Original, TAU };

// One line of a two-party dialog. Text is single-line by contract: the
// augmentation grammar is line-oriented, so embedded newlines (and
// leading/trailing whitespace, which line trimming would silently alter)
// are rejected at load instead of being patched up later.
struct Utterance {
    std::string speaker_id;
    std::string text;
    UtteranceKind kind = UtteranceKind::Original;

    bool operator==(const Utterance&) const = default;
};

struct Dialog {
    std::string dialog_id;
    std::array<std::string, 2> participants;
    std::vector<Utterance> utterances;

    bool operator==(const Dialog&) const = default;

    bool has_participant(const std::string& speaker_id) const;
    const std::string& counterpart_of(const std::string& speaker_id) const;
    bool has_tau() const;
    // Throws ValidationError naming dialog_id on any invariant violation.
    void validate() const;
};

struct SpeakerProfile {
    std::string speaker_id;
    TraitVector traits;
    std::vector<std::pair<std::string, std::string>> extras;

    bool operator==(const SpeakerProfile&) const = default;

    void validate() const;
};

// Per-speaker train/validation/test partition of dialog ids.
struct CorpusSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;

    std::size_t total() const { return train.size() + validation.size() + test.size(); }
};

struct SplitRatios {
    int train = 8;
    int validation = 1;
    int test = 1;
};

struct Corpus {
    std::vector<Dialog> dialogs;
    std::map<std::string, SpeakerProfile> profiles;

    const Dialog* find_dialog(const std::string& dialog_id) const;
    // Speaker ids appearing as participants, sorted, with dialog counts.
    std::map<std::string, std::vector<std::string>> dialogs_by_speaker() const;
};

// A dialog augmented for one designated target speaker. The same dialog may
// appear once per target.
struct AugmentedDialog {
    Dialog dialog;
    std::string target_speaker_id;

    bool operator==(const AugmentedDialog&) const = default;
};

// --- JSON record conversion (schemas documented in the README) -------------

nlohmann::json dialog_to_json(const Dialog& dialog);
Dialog dialog_from_json(const nlohmann::json& j, const std::string& where);
nlohmann::json profile_to_json(const SpeakerProfile& profile);
SpeakerProfile profile_from_json(const nlohmann::json& j, const std::string& where);

// --- file I/O ---------------------------------------------------------------
//
// Files are newline-delimited JSON records, UTF-8. An optional first line
// {"record_type":"provenance",...} carries run provenance and is preserved
// on save, so load -> save -> load is a fixed point.

struct JsonlFile {
    std::optional<nlohmann::json> provenance;
};

std::vector<Dialog> load_dialogs(const std::filesystem::path& path, JsonlFile* meta = nullptr);
void save_dialogs(const std::vector<Dialog>& dialogs, const std::filesystem::path& path,
                  const std::optional<nlohmann::json>& provenance = std::nullopt);

std::map<std::string, SpeakerProfile> load_profiles(const std::filesystem::path& path,
                                                    JsonlFile* meta = nullptr);
void save_profiles(const std::map<std::string, SpeakerProfile>& profiles,
                   const std::filesystem::path& path,
                   const std::optional<nlohmann::json>& provenance = std::nullopt);

Corpus load_corpus(const std::filesystem::path& dialogs_path,
                   const std::filesystem::path& profiles_path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& dialogs_path,
                 const std::filesystem::path& profiles_path,
                 const std::optional<nlohmann::json>& provenance = std::nullopt);

std::vector<AugmentedDialog> load_augmented(const std::filesystem::path& path,
                                            JsonlFile* meta = nullptr);
void save_augmented(const std::vector<AugmentedDialog>& dialogs,
                    const std::filesystem::path& path,
                    const std::optional<nlohmann::json>& provenance = std::nullopt);

// --- selection and splitting -------------------------------------------------

// Uniform sample without replacement of n speakers among those participating
// in at least min_dialogs dialogs. Deterministic in (corpus, seed).
std::vector<std::string> select_speakers(const Corpus& corpus, std::size_t min_dialogs,
                                         std::size_t n, std::uint64_t seed);

// Seeded shuffle, then sizes: validation and test each get
// max(1, floor(n * part / sum)) and train takes the remainder. Requires at
// least 3 dialogs so every part is non-empty.
CorpusSplit split_per_speaker(const Corpus& corpus, const std::string& speaker_id,
                              const SplitRatios& ratios, std::uint64_t seed);

}  // namespace taupipe
