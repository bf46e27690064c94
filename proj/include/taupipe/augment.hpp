#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "taupipe/chat.hpp"
#include "taupipe/corpus.hpp"

namespace taupipe {

// --- line grammar ------------------------------------------------------------

enum class Channel { Speaking, Thinking };

struct GrammarLine {
    std::string speaker_id;
    Channel channel;
    std::string payload;

    bool operator==(const GrammarLine&) const = default;
};

// "{speaker_id} (speaking): {payload}". An empty payload drops the trailing
// space so serialized fixtures stay editor-safe.
std::string format_grammar_line(const GrammarLine& line);

// Parses one already-trimmed line. Returns nullopt if the line does not match
// the grammar.
std::optional<GrammarLine> parse_grammar_line(std::string_view line);

// --- prompt templates ---------------------------------------------------------

enum class TemplateMode { Plain, WithBigFive };

struct AugmentationPromptTemplate {
    std::string system_template;
    std::string user_template;
    TemplateMode mode = TemplateMode::Plain;

    // Dialog-content placeholders must appear exactly once; the target id may
    // repeat. Throws ValidationError.
    void validate() const;

    static AugmentationPromptTemplate load(const std::filesystem::path& system_path,
                                           const std::filesystem::path& user_path,
                                           TemplateMode mode);
};

struct FewShotExamples {
    std::string history_1;
    std::string output_1;
    std::string history_2;
    std::string output_2;

    void validate() const;

    static FewShotExamples load(const std::filesystem::path& history_1,
                                const std::filesystem::path& output_1,
                                const std::filesystem::path& history_2,
                                const std::filesystem::path& output_2);
};

// Dialog serialized as grammar lines with an empty "(thinking):" slot before
// each target-speaker line.
std::string serialize_dialog_history(const Dialog& dialog, const std::string& target_speaker);

// Trait list for the personality placeholder, e.g. "Openness: 5, ...".
std::string serialize_personality(const TraitVector& traits);

ChatRequest render_augmentation_prompt(const AugmentationPromptTemplate& tmpl,
                                       const Dialog& dialog,
                                       const std::string& target_speaker,
                                       const FewShotExamples& examples,
                                       const SpeakerProfile* profile = nullptr);

// --- output parsing -----------------------------------------------------------
//
// Accepted model output satisfies, per line in order:
//   (a) every line parses as a grammar line, thinking payloads non-empty
//   (b) speaking lines correspond 1:1 in order with the original utterances
//       (count and speaker sequence; texts are replaced during restoration)
//   (c) every thinking line belongs to the target speaker and is immediately
//       followed by a speaking line of the target speaker
//   (d) every target-speaker speaking line is preceded by exactly one
//       thinking line
//   (e) no blank lines and no "Output:" label

struct FormatError {
    char clause = '?';     // 'a'..'e'
    int line = 0;          // 1-based; 0 when the violation has no single line
    std::string message;
};

struct ParseResult {
    std::optional<Dialog> dialog;
    std::optional<FormatError> error;

    bool ok() const { return dialog.has_value(); }
};

ParseResult parse_augmented_output(const std::string& raw_text, const Dialog& original_dialog,
                                   const std::string& target_speaker);

// Overwrites each Original utterance with the byte-identical source text.
// Mismatched count or speaker sequence comes back as clause b so callers can
// treat it like any other format failure.
ParseResult restore_originals(const Dialog& augmented, const Dialog& original);

// --- retry/discard policy -----------------------------------------------------

enum class ExhaustionAction { DiscardBoth };

struct AugmentationPolicy {
    int max_attempts = 15;
    ExhaustionAction on_exhaustion = ExhaustionAction::DiscardBoth;
    bool restore_originals = true;

    void validate() const;
};

enum class AugmentStatus { Success, Discarded };

struct AugmentOutcome {
    AugmentStatus status = AugmentStatus::Discarded;
    std::optional<Dialog> augmented;  // set iff status == Success
    int attempts = 0;
    std::optional<FormatError> last_error;
};

AugmentOutcome augment_dialog(ChatBackend& backend, const AugmentationPromptTemplate& tmpl,
                              const Dialog& dialog, const std::string& target_speaker,
                              const FewShotExamples& examples, const AugmentationPolicy& policy,
                              const SpeakerProfile* profile = nullptr);

// --- corpus-level driver --------------------------------------------------------

struct DialogAugmentRecord {
    std::string dialog_id;
    int attempts = 0;
    bool discarded = false;
    char final_clause = ' ';    // clause of the last failure, ' ' if none
    std::string final_error;
};

struct AugmentReport {
    std::vector<DialogAugmentRecord> records;   // sorted by dialog_id
    std::map<int, int> attempt_histogram;       // attempts -> dialog count

    std::vector<std::string> discarded_dialog_ids() const;
    int augmented_count() const;

    nlohmann::json to_json() const;
    static AugmentReport from_json(const nlohmann::json& j);
};

struct AugmentCorpusResult {
    std::vector<AugmentedDialog> augmented;     // sorted by dialog_id
    AugmentReport report;
};

// Augments every dialog in `dialogs` for `target_speaker`. Backend hard
// failures abort; format exhaustion only discards the dialog.
AugmentCorpusResult augment_corpus(ChatBackend& backend, const AugmentationPromptTemplate& tmpl,
                                   const std::vector<Dialog>& dialogs,
                                   const std::string& target_speaker,
                                   const FewShotExamples& examples,
                                   const AugmentationPolicy& policy,
                                   const SpeakerProfile* profile = nullptr, int workers = 1);

}  // namespace taupipe
