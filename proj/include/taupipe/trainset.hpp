#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "taupipe/corpus.hpp"

namespace taupipe {

enum class TrainRole { User, Assistant };

const char* train_role_name(TrainRole role);

struct TrainingMessage {
    TrainRole role;
    std::string content;
    bool train_on = false;

    bool operator==(const TrainingMessage&) const = default;
};

enum class RecordMode { OriginalOnly, TAUAugmented };

const char* record_mode_name(RecordMode mode);
RecordMode record_mode_from_name(const std::string& name);

struct ThinkingTags {
    std::string open = "<thinking>";
    std::string close = "</thinking>";
};

struct TrainingRecord {
    std::string dialog_id;
    std::string target_speaker_id;
    std::vector<TrainingMessage> messages;
    RecordMode mode = RecordMode::OriginalOnly;

    bool operator==(const TrainingRecord&) const = default;

    // Roles alternate with the speaker sequence, Assistant messages train,
    // User messages do not. Throws ValidationError.
    void validate() const;
};

// Builds one multi-turn record: target speaker becomes the assistant,
// the counterpart the user. Consecutive same-speaker utterances merge into
// one message joined by "\n" in both modes. In TAUAugmented mode each
// assistant message is "{open} {tau} {close} {utterance}".
TrainingRecord build_record(const Dialog& dialog, const std::string& target_speaker,
                            RecordMode mode, const ThinkingTags& tags = {});

// Removes the leading "{open} ... {close} " span from an assistant message.
// Returns the content unchanged if no span is present.
std::string strip_thinking_span(const std::string& content, const ThinkingTags& tags = {});

// OriginalOnly view of a TAUAugmented record; identity otherwise.
TrainingRecord strip_record(const TrainingRecord& record, const ThinkingTags& tags = {});

enum class FormatProfile { Generic, ServiceCompat };

const char* format_profile_name(FormatProfile profile);

struct ExportManifest {
    RecordMode mode = RecordMode::OriginalOnly;
    FormatProfile profile = FormatProfile::Generic;
    int record_count = 0;
    std::vector<std::string> discarded_dialog_ids;
    std::string system_template_hash;  // empty when not applicable
    std::string user_template_hash;
    bool loss_mask_degraded = false;   // profile cannot express train_on
    int lora_rank = 64;
    int lora_alpha = 64;

    nlohmann::json to_json() const;
    static ExportManifest from_json(const nlohmann::json& j);
};

// Writes one record per line plus a ".manifest.json" sidecar with the same
// basename. Generic files start with a provenance line when one is given;
// service-compat files stay plain for API compatibility. Throws
// ValidationError on an empty record list before creating any file.
void export_training_file(const std::vector<TrainingRecord>& records,
                          const std::filesystem::path& path, FormatProfile profile,
                          ExportManifest manifest,
                          const nlohmann::json* provenance = nullptr);

// Reads a Generic-profile training file back. ServiceCompat files drop the
// identifying fields and cannot round-trip.
std::vector<TrainingRecord> import_training_file(const std::filesystem::path& path);

ExportManifest load_manifest(const std::filesystem::path& training_file_path);

nlohmann::json training_record_to_json(const TrainingRecord& record);
TrainingRecord training_record_from_json(const nlohmann::json& j);

}  // namespace taupipe
