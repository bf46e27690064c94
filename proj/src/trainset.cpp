#include "taupipe/trainset.hpp"

#include "taupipe/errors.hpp"
#include "taupipe/util.hpp"

namespace taupipe {

using nlohmann::json;

const char* train_role_name(TrainRole role) {
    return role == TrainRole::User ? "user" : "assistant";
}

static TrainRole train_role_from_name(const std::string& name) {
    if (name == "user") return TrainRole::User;
    if (name == "assistant") return TrainRole::Assistant;
    throw ValidationError("unknown training role: " + name);
}

const char* record_mode_name(RecordMode mode) {
    return mode == RecordMode::OriginalOnly ? "original_only" : "tau_augmented";
}

RecordMode record_mode_from_name(const std::string& name) {
    if (name == "original_only") return RecordMode::OriginalOnly;
    if (name == "tau_augmented") return RecordMode::TAUAugmented;
    throw ValidationError("unknown record mode: " + name);
}

void TrainingRecord::validate() const {
    if (dialog_id.empty()) throw ValidationError("training record without dialog_id");
    if (target_speaker_id.empty()) throw ValidationError("training record without target speaker");
    if (messages.empty())
        throw ValidationError("training record " + dialog_id + " has no messages");
    for (std::size_t i = 0; i < messages.size(); ++i) {
        const TrainingMessage& m = messages[i];
        if (m.content.empty())
            throw ValidationError("empty message " + std::to_string(i) + " in record " +
                                  dialog_id);
        if (m.train_on != (m.role == TrainRole::Assistant))
            throw ValidationError("loss mask must select exactly the assistant messages (record " +
                                  dialog_id + ", message " + std::to_string(i) + ")");
        if (i > 0 && messages[i - 1].role == m.role)
            throw ValidationError("roles do not alternate in record " + dialog_id +
                                  " at message " + std::to_string(i));
    }
}

TrainingRecord build_record(const Dialog& dialog, const std::string& target_speaker,
                            RecordMode mode, const ThinkingTags& tags) {
    if (!dialog.has_participant(target_speaker))
        throw ValidationError("target speaker " + target_speaker + " not in dialog " +
                              dialog.dialog_id);

    // Group consecutive same-speaker Original utterances into turns; a TAU
    // attaches to the Original that follows it.
    struct Turn {
        std::string speaker_id;
        std::vector<std::string> texts;
        std::vector<std::string> taus;
    };
    std::vector<Turn> turns;
    std::optional<std::string> pending_tau;
    for (const Utterance& u : dialog.utterances) {
        if (u.kind == UtteranceKind::TAU) {
            if (pending_tau)
                throw ValidationError("two consecutive think-aloud utterances in dialog " +
                                      dialog.dialog_id);
            pending_tau = u.text;
            continue;
        }
        if (turns.empty() || turns.back().speaker_id != u.speaker_id)
            turns.push_back({u.speaker_id, {}, {}});
        turns.back().texts.push_back(u.text);
        if (pending_tau) {
            if (u.speaker_id != target_speaker)
                throw ValidationError("think-aloud utterance precedes a non-target utterance in " +
                                      dialog.dialog_id);
            turns.back().taus.push_back(std::move(*pending_tau));
            pending_tau.reset();
        } else if (mode == RecordMode::TAUAugmented && u.speaker_id == target_speaker) {
            throw ValidationError("target utterance without think-aloud utterance in dialog " +
                                  dialog.dialog_id);
        }
    }
    if (pending_tau)
        throw ValidationError("trailing think-aloud utterance in dialog " + dialog.dialog_id);

    TrainingRecord record;
    record.dialog_id = dialog.dialog_id;
    record.target_speaker_id = target_speaker;
    record.mode = mode;
    for (Turn& turn : turns) {
        TrainingMessage message;
        message.role = turn.speaker_id == target_speaker ? TrainRole::Assistant : TrainRole::User;
        message.train_on = message.role == TrainRole::Assistant;
        std::string body = join(turn.texts, "\n");
        if (mode == RecordMode::TAUAugmented && message.role == TrainRole::Assistant)
            message.content =
                tags.open + " " + join(turn.taus, "\n") + " " + tags.close + " " + body;
        else
            message.content = std::move(body);
        record.messages.push_back(std::move(message));
    }
    record.validate();
    return record;
}

std::string strip_thinking_span(const std::string& content, const ThinkingTags& tags) {
    const std::string prefix = tags.open + " ";
    if (content.rfind(prefix, 0) != 0) return content;
    const std::string separator = " " + tags.close + " ";
    auto pos = content.find(separator, prefix.size());
    if (pos == std::string::npos) return content;
    return content.substr(pos + separator.size());
}

TrainingRecord strip_record(const TrainingRecord& record, const ThinkingTags& tags) {
    TrainingRecord stripped = record;
    stripped.mode = RecordMode::OriginalOnly;
    for (TrainingMessage& m : stripped.messages)
        if (m.role == TrainRole::Assistant) m.content = strip_thinking_span(m.content, tags);
    return stripped;
}

const char* format_profile_name(FormatProfile profile) {
    return profile == FormatProfile::Generic ? "generic" : "service-compat";
}

json ExportManifest::to_json() const {
    json j;
    j["mode"] = record_mode_name(mode);
    j["format_profile"] = format_profile_name(profile);
    j["record_count"] = record_count;
    j["discarded_dialog_ids"] = discarded_dialog_ids;
    j["system_template_hash"] = system_template_hash;
    j["user_template_hash"] = user_template_hash;
    j["loss_mask_degraded"] = loss_mask_degraded;
    j["recommended_hyperparameters"] = {{"lora_rank", lora_rank}, {"lora_alpha", lora_alpha}};
    return j;
}

ExportManifest ExportManifest::from_json(const json& j) {
    ExportManifest manifest;
    manifest.mode = record_mode_from_name(j.at("mode").get<std::string>());
    manifest.profile = j.at("format_profile").get<std::string>() == "generic"
                           ? FormatProfile::Generic
                           : FormatProfile::ServiceCompat;
    manifest.record_count = j.at("record_count").get<int>();
    manifest.discarded_dialog_ids =
        j.at("discarded_dialog_ids").get<std::vector<std::string>>();
    manifest.system_template_hash = j.at("system_template_hash").get<std::string>();
    manifest.user_template_hash = j.at("user_template_hash").get<std::string>();
    manifest.loss_mask_degraded = j.at("loss_mask_degraded").get<bool>();
    const json& hp = j.at("recommended_hyperparameters");
    manifest.lora_rank = hp.at("lora_rank").get<int>();
    manifest.lora_alpha = hp.at("lora_alpha").get<int>();
    return manifest;
}

json training_record_to_json(const TrainingRecord& record) {
    json msgs = json::array();
    for (const TrainingMessage& m : record.messages)
        msgs.push_back({{"role", train_role_name(m.role)},
                        {"content", m.content},
                        {"train_on", m.train_on}});
    json j;
    j["dialog_id"] = record.dialog_id;
    j["target_speaker_id"] = record.target_speaker_id;
    j["mode"] = record_mode_name(record.mode);
    j["messages"] = std::move(msgs);
    return j;
}

TrainingRecord training_record_from_json(const json& j) {
    TrainingRecord record;
    record.dialog_id = j.at("dialog_id").get<std::string>();
    record.target_speaker_id = j.at("target_speaker_id").get<std::string>();
    record.mode = record_mode_from_name(j.at("mode").get<std::string>());
    for (const json& m : j.at("messages")) {
        TrainingMessage message;
        message.role = train_role_from_name(m.at("role").get<std::string>());
        message.content = m.at("content").get<std::string>();
        message.train_on = m.at("train_on").get<bool>();
        record.messages.push_back(std::move(message));
    }
    return record;
}

static std::filesystem::path manifest_path_for(const std::filesystem::path& training_path) {
    std::filesystem::path p = training_path;
    p.replace_extension(".manifest.json");
    return p;
}

void export_training_file(const std::vector<TrainingRecord>& records,
                          const std::filesystem::path& path, FormatProfile profile,
                          ExportManifest manifest, const nlohmann::json* provenance) {
    if (records.empty())
        throw ValidationError("refusing to export an empty training set to " + path.string());
    for (const TrainingRecord& record : records) record.validate();

    std::string out;
    if (provenance != nullptr && profile == FormatProfile::Generic) {
        json header = *provenance;
        header["record_type"] = "provenance";
        out += header.dump();
        out += '\n';
    }
    for (const TrainingRecord& record : records) {
        if (profile == FormatProfile::Generic) {
            out += training_record_to_json(record).dump();
        } else {
            json msgs = json::array();
            for (const TrainingMessage& m : record.messages)
                msgs.push_back({{"role", train_role_name(m.role)}, {"content", m.content}});
            out += json{{"messages", std::move(msgs)}}.dump();
        }
        out += '\n';
    }
    manifest.profile = profile;
    manifest.record_count = static_cast<int>(records.size());
    manifest.loss_mask_degraded = profile == FormatProfile::ServiceCompat;

    write_file(path, out);
    write_file(manifest_path_for(path), manifest.to_json().dump(2) + "\n");
}

std::vector<TrainingRecord> import_training_file(const std::filesystem::path& path) {
    std::vector<TrainingRecord> records;
    std::vector<std::string> lines = split_lines(read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (is_blank(lines[i])) continue;
        json j;
        try {
            j = json::parse(lines[i]);
        } catch (const json::exception& e) {
            throw FileParseError(path.string() + ":" + std::to_string(i + 1) +
                                 ": malformed record: " + e.what());
        }
        if (j.is_object() && j.value("record_type", "") == "provenance") continue;
        if (!j.contains("dialog_id"))
            throw FileParseError(path.string() + ":" + std::to_string(i + 1) +
                                 ": record lacks dialog_id; service-compat exports cannot be "
                                 "re-imported");
        try {
            records.push_back(training_record_from_json(j));
        } catch (const json::exception& e) {
            throw FileParseError(path.string() + ":" + std::to_string(i + 1) +
                                 ": malformed record: " + e.what());
        }
    }
    return records;
}

ExportManifest load_manifest(const std::filesystem::path& training_file_path) {
    const std::filesystem::path manifest_path = manifest_path_for(training_file_path);
    try {
        return ExportManifest::from_json(json::parse(read_file(manifest_path)));
    } catch (const json::exception& e) {
        throw FileParseError(manifest_path.string() + ": malformed manifest: " + e.what());
    }
}

}  // namespace taupipe
