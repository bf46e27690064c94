#include "taupipe/augment.hpp"

#include <algorithm>

#include "taupipe/errors.hpp"
#include "taupipe/log.hpp"
#include "taupipe/util.hpp"

namespace taupipe {

using nlohmann::json;

// --- line grammar ------------------------------------------------------------

static const char* channel_marker(Channel channel) {
    return channel == Channel::Speaking ? " (speaking):" : " (thinking):";
}

std::string format_grammar_line(const GrammarLine& line) {
    std::string out = line.speaker_id + channel_marker(line.channel);
    if (!line.payload.empty()) {
        out += ' ';
        out += line.payload;
    }
    return out;
}

std::optional<GrammarLine> parse_grammar_line(std::string_view line) {
    static constexpr std::string_view kSpeaking = " (speaking):";
    static constexpr std::string_view kThinking = " (thinking):";

    auto speaking_pos = line.find(kSpeaking);
    auto thinking_pos = line.find(kThinking);
    auto pos = std::min(speaking_pos, thinking_pos);
    if (pos == std::string_view::npos || pos == 0) return std::nullopt;

    GrammarLine parsed;
    parsed.speaker_id = std::string(line.substr(0, pos));
    parsed.channel = pos == speaking_pos ? Channel::Speaking : Channel::Thinking;

    std::string_view rest = line.substr(pos + kSpeaking.size());
    if (rest.empty()) {
        parsed.payload.clear();
    } else if (rest.front() == ' ') {
        parsed.payload = std::string(rest.substr(1));
    } else {
        return std::nullopt;  // colon not followed by a space
    }
    return parsed;
}

// --- prompt templates ---------------------------------------------------------

namespace {

constexpr const char* kPlaceholderTarget = "target_interlocutor_id";
constexpr const char* kPlaceholderPersonality = "target_interlocutor_personality_prompt";
constexpr const char* kContentPlaceholders[] = {
    "utterances_example_1", "think_aloud_utterances_example_1",
    "utterances_example_2", "think_aloud_utterances_example_2",
    "original_utterances",
};

}  // namespace

void AugmentationPromptTemplate::validate() const {
    if (system_template.empty()) throw ValidationError("empty system template");
    if (user_template.empty()) throw ValidationError("empty user template");
    for (const char* name : kContentPlaceholders) {
        int n = count_placeholder(user_template, name);
        if (n != 1)
            throw ValidationError(std::string("user template must contain {") + name +
                                  "} exactly once, found " + std::to_string(n));
    }
    if (count_placeholder(system_template, kPlaceholderTarget) +
            count_placeholder(user_template, kPlaceholderTarget) ==
        0)
        throw ValidationError(std::string("template never mentions {") + kPlaceholderTarget + "}");
    int personality = count_placeholder(system_template, kPlaceholderPersonality);
    if (mode == TemplateMode::WithBigFive) {
        if (personality != 1)
            throw ValidationError(std::string("system template must contain {") +
                                  kPlaceholderPersonality + "} exactly once, found " +
                                  std::to_string(personality));
    } else if (personality + count_placeholder(user_template, kPlaceholderPersonality) != 0) {
        throw ValidationError("plain template must not use the personality placeholder");
    }
}

AugmentationPromptTemplate AugmentationPromptTemplate::load(
    const std::filesystem::path& system_path, const std::filesystem::path& user_path,
    TemplateMode mode) {
    AugmentationPromptTemplate tmpl;
    // Files end with a newline; the prompt bodies hold bare blocks.
    tmpl.system_template = std::string(trim(read_file(system_path)));
    tmpl.user_template = std::string(trim(read_file(user_path)));
    tmpl.mode = mode;
    tmpl.validate();
    return tmpl;
}

void FewShotExamples::validate() const {
    if (is_blank(history_1) || is_blank(output_1) || is_blank(history_2) || is_blank(output_2))
        throw ValidationError("few-shot example files must be non-empty");
}

FewShotExamples FewShotExamples::load(const std::filesystem::path& history_1,
                                      const std::filesystem::path& output_1,
                                      const std::filesystem::path& history_2,
                                      const std::filesystem::path& output_2) {
    FewShotExamples examples;
    // Files end with a newline; the prompt slots hold bare blocks.
    auto load_block = [](const std::filesystem::path& path) {
        return std::string(trim(read_file(path)));
    };
    examples.history_1 = load_block(history_1);
    examples.output_1 = load_block(output_1);
    examples.history_2 = load_block(history_2);
    examples.output_2 = load_block(output_2);
    examples.validate();
    return examples;
}

std::string serialize_dialog_history(const Dialog& dialog, const std::string& target_speaker) {
    std::vector<std::string> lines;
    for (const Utterance& u : dialog.utterances) {
        if (u.kind != UtteranceKind::Original)
            throw ValidationError("dialog " + dialog.dialog_id +
                                  " already contains think-aloud utterances");
        if (u.speaker_id == target_speaker)
            lines.push_back(format_grammar_line({target_speaker, Channel::Thinking, ""}));
        lines.push_back(format_grammar_line({u.speaker_id, Channel::Speaking, u.text}));
    }
    return join(lines, "\n");
}

std::string serialize_personality(const TraitVector& traits) {
    std::vector<std::string> parts;
    for (Trait t : kAllTraits)
        parts.push_back(std::string(trait_name(t)) + ": " + format_number(traits[t]));
    return join(parts, ", ");
}

ChatRequest render_augmentation_prompt(const AugmentationPromptTemplate& tmpl,
                                       const Dialog& dialog, const std::string& target_speaker,
                                       const FewShotExamples& examples,
                                       const SpeakerProfile* profile) {
    tmpl.validate();
    examples.validate();
    if (!dialog.has_participant(target_speaker))
        throw ValidationError("target speaker " + target_speaker + " not in dialog " +
                              dialog.dialog_id);
    if (tmpl.mode == TemplateMode::WithBigFive && profile == nullptr)
        throw ValidationError("personality-aware template requires a speaker profile");

    std::vector<std::pair<std::string, std::string>> fill = {
        {kPlaceholderTarget, target_speaker},
        {"utterances_example_1", examples.history_1},
        {"think_aloud_utterances_example_1", examples.output_1},
        {"utterances_example_2", examples.history_2},
        {"think_aloud_utterances_example_2", examples.output_2},
        {"original_utterances", serialize_dialog_history(dialog, target_speaker)},
    };
    if (profile != nullptr)
        fill.emplace_back(kPlaceholderPersonality, serialize_personality(profile->traits));

    std::string system_text = fill_placeholders(tmpl.system_template, fill);
    std::string user_text = fill_placeholders(tmpl.user_template, fill);

    // Placeholder syntax overlaps plain braces in dialog text, so only the
    // known names are checked after filling.
    std::vector<std::string> names = {kPlaceholderTarget, kPlaceholderPersonality};
    for (const char* name : kContentPlaceholders) names.emplace_back(name);
    for (const std::string& name : names)
        if (count_placeholder(system_text, name) + count_placeholder(user_text, name) != 0)
            throw ValidationError("placeholder {" + name + "} left unfilled");

    ChatRequest request;
    request.messages.push_back({Role::System, std::move(system_text)});
    request.messages.push_back({Role::User, std::move(user_text)});
    request.temperature = 0.0;
    request.max_tokens = 4096;
    return request;
}

// --- output parsing -----------------------------------------------------------

namespace {

ParseResult fail(char clause, int line, std::string message) {
    ParseResult result;
    result.error = FormatError{clause, line, std::move(message)};
    return result;
}

}  // namespace

ParseResult parse_augmented_output(const std::string& raw_text, const Dialog& original_dialog,
                                   const std::string& target_speaker) {
    std::vector<std::string> raw_lines = split_lines(raw_text);

    // Pass 1: line-local clauses (e) and (a).
    std::vector<GrammarLine> lines;
    lines.reserve(raw_lines.size());
    for (std::size_t i = 0; i < raw_lines.size(); ++i) {
        const int line_no = static_cast<int>(i) + 1;
        std::string_view trimmed = trim(raw_lines[i]);
        if (trimmed.empty()) return fail('e', line_no, "blank line");
        if (trimmed == "Output:" || trimmed.rfind("Output:", 0) == 0)
            return fail('e', line_no, "output label present");
        std::optional<GrammarLine> parsed = parse_grammar_line(trimmed);
        if (!parsed)
            return fail('a', line_no, "line does not match the grammar: " + std::string(trimmed));
        if (parsed->channel == Channel::Thinking && parsed->payload.empty())
            return fail('a', line_no, "thinking line with empty payload");
        lines.push_back(std::move(*parsed));
    }
    if (lines.empty()) return fail('b', 0, "empty output");

    // Pass 2: structural clauses (b), (c), (d) in line order.
    const auto& originals = original_dialog.utterances;
    std::size_t next_original = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const int line_no = static_cast<int>(i) + 1;
        const GrammarLine& line = lines[i];
        if (line.channel == Channel::Thinking) {
            if (line.speaker_id != target_speaker)
                return fail('c', line_no, "thinking line for non-target speaker " +
                                              line.speaker_id);
            if (i + 1 >= lines.size())
                return fail('c', line_no, "thinking line at end of output");
            const GrammarLine& next = lines[i + 1];
            if (next.channel != Channel::Speaking || next.speaker_id != target_speaker)
                return fail('c', line_no,
                            "thinking line not followed by a target speaking line");
            continue;
        }
        // Speaking line: must pick up the next original utterance.
        if (next_original >= originals.size())
            return fail('b', line_no, "more speaking lines than original utterances");
        if (line.speaker_id != originals[next_original].speaker_id)
            return fail('b', line_no, "speaker order mismatch: expected " +
                                          originals[next_original].speaker_id + ", got " +
                                          line.speaker_id);
        ++next_original;
        if (line.speaker_id == target_speaker) {
            bool preceded = i > 0 && lines[i - 1].channel == Channel::Thinking;
            if (!preceded)
                return fail('d', line_no, "target speaking line without a thinking line");
        }
    }
    if (next_original != originals.size())
        return fail('b', 0, "fewer speaking lines than original utterances (" +
                                std::to_string(next_original) + " of " +
                                std::to_string(originals.size()) + ")");

    Dialog augmented;
    augmented.dialog_id = original_dialog.dialog_id;
    augmented.participants = original_dialog.participants;
    for (const GrammarLine& line : lines)
        augmented.utterances.push_back({line.speaker_id, line.payload,
                                        line.channel == Channel::Thinking
                                            ? UtteranceKind::TAU
                                            : UtteranceKind::Original});
    ParseResult result;
    result.dialog = std::move(augmented);
    return result;
}

ParseResult restore_originals(const Dialog& augmented, const Dialog& original) {
    Dialog restored = augmented;
    std::size_t next_original = 0;
    for (Utterance& u : restored.utterances) {
        if (u.kind != UtteranceKind::Original) continue;
        if (next_original >= original.utterances.size())
            return fail('b', 0, "more utterances than the source dialog");
        const Utterance& source = original.utterances[next_original];
        if (u.speaker_id != source.speaker_id)
            return fail('b', 0, "speaker order diverges from the source dialog at utterance " +
                                    std::to_string(next_original));
        u.text = source.text;
        ++next_original;
    }
    if (next_original != original.utterances.size())
        return fail('b', 0, "fewer utterances than the source dialog");
    ParseResult result;
    result.dialog = std::move(restored);
    return result;
}

// --- retry/discard policy -----------------------------------------------------

void AugmentationPolicy::validate() const {
    if (max_attempts < 1) throw ValidationError("max_attempts must be at least 1");
}

AugmentOutcome augment_dialog(ChatBackend& backend, const AugmentationPromptTemplate& tmpl,
                              const Dialog& dialog, const std::string& target_speaker,
                              const FewShotExamples& examples, const AugmentationPolicy& policy,
                              const SpeakerProfile* profile) {
    policy.validate();
    const ChatRequest request =
        render_augmentation_prompt(tmpl, dialog, target_speaker, examples, profile);

    AugmentOutcome outcome;
    for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
        outcome.attempts = attempt;
        ChatResponse response = backend.complete(request);
        ParseResult parsed = parse_augmented_output(response.text, dialog, target_speaker);
        if (parsed.ok() && policy.restore_originals)
            parsed = restore_originals(*parsed.dialog, dialog);
        if (parsed.ok()) {
            try {
                parsed.dialog->validate();
            } catch (const ValidationError& e) {
                parsed = fail('a', 0, std::string("augmented dialog invalid: ") + e.what());
            }
        }
        if (parsed.ok()) {
            outcome.status = AugmentStatus::Success;
            outcome.augmented = std::move(parsed.dialog);
            return outcome;
        }
        outcome.last_error = parsed.error;
        log::debug("dialog ", dialog.dialog_id, " attempt ", attempt, " failed clause ",
                   parsed.error->clause, ": ", parsed.error->message);
    }
    outcome.status = AugmentStatus::Discarded;
    log::warn("dialog ", dialog.dialog_id, " discarded after ", outcome.attempts, " attempts: ",
              outcome.last_error ? outcome.last_error->message : "no attempts");
    return outcome;
}

// --- corpus-level driver --------------------------------------------------------

std::vector<std::string> AugmentReport::discarded_dialog_ids() const {
    std::vector<std::string> ids;
    for (const DialogAugmentRecord& r : records)
        if (r.discarded) ids.push_back(r.dialog_id);
    return ids;
}

int AugmentReport::augmented_count() const {
    int n = 0;
    for (const DialogAugmentRecord& r : records)
        if (!r.discarded) ++n;
    return n;
}

json AugmentReport::to_json() const {
    json recs = json::array();
    for (const DialogAugmentRecord& r : records) {
        json rec;
        rec["dialog_id"] = r.dialog_id;
        rec["attempts"] = r.attempts;
        rec["discarded"] = r.discarded;
        if (r.final_clause != ' ') rec["final_clause"] = std::string(1, r.final_clause);
        if (!r.final_error.empty()) rec["final_error"] = r.final_error;
        recs.push_back(std::move(rec));
    }
    json hist = json::object();
    for (const auto& [attempts, count] : attempt_histogram)
        hist[std::to_string(attempts)] = count;
    json j;
    j["records"] = std::move(recs);
    j["attempt_histogram"] = std::move(hist);
    j["augmented_count"] = augmented_count();
    j["discarded_dialog_ids"] = discarded_dialog_ids();
    return j;
}

AugmentReport AugmentReport::from_json(const json& j) {
    AugmentReport report;
    for (const json& rec : j.at("records")) {
        DialogAugmentRecord r;
        r.dialog_id = rec.at("dialog_id").get<std::string>();
        r.attempts = rec.at("attempts").get<int>();
        r.discarded = rec.at("discarded").get<bool>();
        if (rec.contains("final_clause"))
            r.final_clause = rec.at("final_clause").get<std::string>().at(0);
        if (rec.contains("final_error")) r.final_error = rec.at("final_error").get<std::string>();
        report.records.push_back(std::move(r));
    }
    for (const auto& [key, value] : j.at("attempt_histogram").items())
        report.attempt_histogram[std::stoi(key)] = value.get<int>();
    return report;
}

AugmentCorpusResult augment_corpus(ChatBackend& backend, const AugmentationPromptTemplate& tmpl,
                                   const std::vector<Dialog>& dialogs,
                                   const std::string& target_speaker,
                                   const FewShotExamples& examples,
                                   const AugmentationPolicy& policy,
                                   const SpeakerProfile* profile, int workers) {
    std::vector<const Dialog*> ordered;
    ordered.reserve(dialogs.size());
    for (const Dialog& d : dialogs) ordered.push_back(&d);
    std::sort(ordered.begin(), ordered.end(),
              [](const Dialog* a, const Dialog* b) { return a->dialog_id < b->dialog_id; });

    std::vector<AugmentOutcome> outcomes(ordered.size());
    parallel_for(ordered.size(), workers, [&](std::size_t i) {
        outcomes[i] = augment_dialog(backend, tmpl, *ordered[i], target_speaker, examples, policy,
                                     profile);
    });

    AugmentCorpusResult result;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const AugmentOutcome& outcome = outcomes[i];
        DialogAugmentRecord record;
        record.dialog_id = ordered[i]->dialog_id;
        record.attempts = outcome.attempts;
        record.discarded = outcome.status == AugmentStatus::Discarded;
        if (outcome.last_error) {
            record.final_clause = outcome.last_error->clause;
            record.final_error = outcome.last_error->message;
        }
        result.report.attempt_histogram[outcome.attempts] += 1;
        result.report.records.push_back(std::move(record));
        if (outcome.status == AugmentStatus::Success)
            result.augmented.push_back({*outcome.augmented, target_speaker});
    }
    return result;
}

}  // namespace taupipe
