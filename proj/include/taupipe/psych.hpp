#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "taupipe/chat.hpp"
#include "taupipe/traits.hpp"

namespace taupipe {

// --- questionnaire --------------------------------------------------------------

struct QuestionnaireItem {
    std::string item_id;
    Trait trait = Trait::Openness;
    std::string text;
    bool reverse_keyed = false;
};

struct Questionnaire {
    std::vector<QuestionnaireItem> items;

    // 60 items, 12 per trait, unique non-empty ids and texts.
    void validate() const;

    static Questionnaire load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    nlohmann::json to_json() const;
    static Questionnaire from_json(const nlohmann::json& j);
};

// --- prompt variants --------------------------------------------------------------

enum class LabelStyle { Numeric, RomanAlphabet };

struct PromptVariant {
    bool question_first = true;
    LabelStyle label_style = LabelStyle::Numeric;
    bool scale_ascending = true;

    bool operator==(const PromptVariant&) const = default;

    std::string name() const;  // e.g. "qfirst-numeric-asc"
    static PromptVariant from_name(const std::string& name);
};

// The full cross product, in a fixed order.
const std::array<PromptVariant, 8>& all_prompt_variants();

// Numeric labels name their own point value; Roman letters are positional in
// the presented order, so with a descending scale "a" names point 7.
std::string label_for_point(const PromptVariant& variant, int point);
std::optional<int> point_for_label(const PromptVariant& variant, std::string_view label);

std::string render_item_text(const QuestionnaireItem& item, const PromptVariant& variant);

// Fresh single-item conversation; persona_context becomes the system message
// when non-empty. Token scores are requested for the extraction fallback.
ChatRequest render_item_prompt(const QuestionnaireItem& item, const PromptVariant& variant,
                               const std::string& persona_context = "");

// --- answer extraction --------------------------------------------------------------

enum class ExtractionMethod { ParsedLeading, TokenScoreFallback };

const char* extraction_method_name(ExtractionMethod method);

// Leading-label parse first; otherwise the highest-probability recognized
// label among the response's first-token alternatives. nullopt when neither
// applies.
std::optional<std::pair<int, ExtractionMethod>> extract_scale_point(const ChatResponse& response,
                                                                    const PromptVariant& variant);

// --- administration --------------------------------------------------------------

struct ItemOutcome {
    std::string item_id;
    PromptVariant variant;
    int asks = 0;                 // backend calls spent on this item
    std::string raw_text;         // last response text
    std::optional<std::vector<TokenAlternative>> alternatives;
    std::optional<int> scale_point;
    std::optional<ExtractionMethod> method;

    bool missing() const { return !scale_point.has_value(); }

    nlohmann::json to_json() const;
    static ItemOutcome from_json(const nlohmann::json& j);
};

struct TraitScores {
    TraitVector scores;
    std::array<int, 5> missing_counts{};  // indexed like TraitVector

    int missing_total() const;
};

// Keyed value of a response: reverse-keyed items map v to 8 - v.
int keyed_value(const QuestionnaireItem& item, int scale_point);

// Mean keyed value per trait over usable outcomes; throws ValidationError if
// a trait has no usable response.
TraitScores score_traits(const std::vector<ItemOutcome>& outcomes,
                         const Questionnaire& questionnaire);

struct AdministerPolicy {
    int reask_budget = 3;   // identical re-asks before the token-score fallback
    int workers = 1;
};

struct VariantScores {
    PromptVariant variant;
    TraitScores scores;
};

struct AdministerResult {
    std::vector<VariantScores> per_variant;  // one per administered variant
    std::vector<ItemOutcome> transcript;     // variant-major, item order preserved
    bool partial = false;                    // backend failed mid-run
    std::string abort_error;

    nlohmann::json transcript_to_json() const;
};

AdministerResult administer(ChatBackend& backend, const Questionnaire& questionnaire,
                            const std::vector<PromptVariant>& variants,
                            const std::string& persona_context = "",
                            const AdministerPolicy& policy = {});

}  // namespace taupipe
