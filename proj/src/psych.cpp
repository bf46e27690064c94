#include "taupipe/psych.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>

#include "taupipe/errors.hpp"
#include "taupipe/log.hpp"
#include "taupipe/util.hpp"

namespace taupipe {

using nlohmann::json;

// --- questionnaire --------------------------------------------------------------

void Questionnaire::validate() const {
    if (items.size() != 60)
        throw ValidationError("questionnaire must have 60 items, found " +
                              std::to_string(items.size()));
    std::array<int, 5> per_trait{};
    std::vector<std::string> ids;
    for (const QuestionnaireItem& item : items) {
        if (item.item_id.empty()) throw ValidationError("questionnaire item without id");
        if (is_blank(item.text))
            throw ValidationError("questionnaire item " + item.item_id + " has empty text");
        per_trait[static_cast<std::size_t>(item.trait)] += 1;
        ids.push_back(item.item_id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw ValidationError("duplicate questionnaire item id: " +
                              *std::adjacent_find(ids.begin(), ids.end()));
    for (Trait t : kAllTraits)
        if (per_trait[static_cast<std::size_t>(t)] != 12)
            throw ValidationError(std::string("trait ") + trait_code(t) + " has " +
                                  std::to_string(per_trait[static_cast<std::size_t>(t)]) +
                                  " items, expected 12");
}

json Questionnaire::to_json() const {
    json arr = json::array();
    for (const QuestionnaireItem& item : items)
        arr.push_back({{"item_id", item.item_id},
                       {"trait", std::string(1, trait_code(item.trait))},
                       {"text", item.text},
                       {"reverse_keyed", item.reverse_keyed}});
    return json{{"items", std::move(arr)}};
}

Questionnaire Questionnaire::from_json(const json& j) {
    Questionnaire q;
    for (const json& rec : j.at("items")) {
        QuestionnaireItem item;
        item.item_id = rec.at("item_id").get<std::string>();
        const std::string code = rec.at("trait").get<std::string>();
        if (code.size() != 1) throw ValidationError("trait code must be one letter: " + code);
        std::optional<Trait> trait = trait_from_code(code[0]);
        if (!trait) throw ValidationError("unknown trait code: " + code);
        item.trait = *trait;
        item.text = rec.at("text").get<std::string>();
        item.reverse_keyed = rec.at("reverse_keyed").get<bool>();
        q.items.push_back(std::move(item));
    }
    return q;
}

Questionnaire Questionnaire::load(const std::filesystem::path& path) {
    Questionnaire q;
    try {
        q = from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw FileParseError(path.string() + ": malformed questionnaire: " + e.what());
    }
    q.validate();
    return q;
}

void Questionnaire::save(const std::filesystem::path& path) const {
    validate();
    write_file(path, to_json().dump(2) + "\n");
}

// --- prompt variants --------------------------------------------------------------

std::string PromptVariant::name() const {
    std::string out = question_first ? "qfirst" : "qlast";
    out += label_style == LabelStyle::Numeric ? "-numeric" : "-roman";
    out += scale_ascending ? "-asc" : "-desc";
    return out;
}

PromptVariant PromptVariant::from_name(const std::string& name) {
    for (const PromptVariant& v : all_prompt_variants())
        if (v.name() == name) return v;
    throw ValidationError("unknown prompt variant: " + name);
}

const std::array<PromptVariant, 8>& all_prompt_variants() {
    static const std::array<PromptVariant, 8> variants = [] {
        std::array<PromptVariant, 8> out{};
        std::size_t i = 0;
        for (bool question_first : {true, false})
            for (LabelStyle style : {LabelStyle::Numeric, LabelStyle::RomanAlphabet})
                for (bool ascending : {true, false})
                    out[i++] = PromptVariant{question_first, style, ascending};
        return out;
    }();
    return variants;
}

std::string label_for_point(const PromptVariant& variant, int point) {
    if (point < 1 || point > 7)
        throw ValidationError("scale point out of range: " + std::to_string(point));
    if (variant.label_style == LabelStyle::Numeric) return std::to_string(point);
    int position = variant.scale_ascending ? point : 8 - point;
    return std::string(1, static_cast<char>('a' + position - 1));
}

std::optional<int> point_for_label(const PromptVariant& variant, std::string_view label) {
    if (label.size() != 1) return std::nullopt;
    char c = label[0];
    if (variant.label_style == LabelStyle::Numeric) {
        if (c < '1' || c > '7') return std::nullopt;
        return c - '0';
    }
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (c < 'a' || c > 'g') return std::nullopt;
    int position = c - 'a' + 1;
    return variant.scale_ascending ? position : 8 - position;
}

std::string render_item_text(const QuestionnaireItem& item, const PromptVariant& variant) {
    std::vector<std::string> scale_lines;
    scale_lines.push_back("Response scale:");
    for (int i = 0; i < 7; ++i) {
        int point = variant.scale_ascending ? 1 + i : 7 - i;
        std::string line = label_for_point(variant, point) + ".";
        if (point == 1) line += " strongly disagree";
        if (point == 7) line += " strongly agree";
        scale_lines.push_back(std::move(line));
    }
    const std::string scale_block = join(scale_lines, "\n");
    const std::string question_block = "Question: " + item.text;
    const std::string instruction =
        "Begin your answer with the label of the scale point you choose.";
    if (variant.question_first)
        return question_block + "\n\n" + scale_block + "\n\n" + instruction;
    return scale_block + "\n\n" + question_block + "\n\n" + instruction;
}

ChatRequest render_item_prompt(const QuestionnaireItem& item, const PromptVariant& variant,
                               const std::string& persona_context) {
    ChatRequest request;
    if (!persona_context.empty()) request.messages.push_back({Role::System, persona_context});
    request.messages.push_back({Role::User, render_item_text(item, variant)});
    request.temperature = 0.0;
    request.max_tokens = 64;
    request.want_token_scores = true;
    return request;
}

// --- answer extraction --------------------------------------------------------------

const char* extraction_method_name(ExtractionMethod method) {
    return method == ExtractionMethod::ParsedLeading ? "parsed_leading" : "token_score_fallback";
}

namespace {

bool label_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Leading run of label characters after whitespace, if cleanly delimited.
std::optional<std::string> leading_token(std::string_view text) {
    std::size_t start = 0;
    while (start < text.size() &&
           std::isspace(static_cast<unsigned char>(text[start])) != 0)
        ++start;
    std::size_t end = start;
    while (end < text.size() && label_char(text[end])) ++end;
    if (end == start) return std::nullopt;
    return std::string(text.substr(start, end - start));
}

}  // namespace

std::optional<std::pair<int, ExtractionMethod>> extract_scale_point(
    const ChatResponse& response, const PromptVariant& variant) {
    if (auto token = leading_token(response.text)) {
        if (auto point = point_for_label(variant, *token))
            return std::make_pair(*point, ExtractionMethod::ParsedLeading);
    }
    if (response.first_token_alternatives) {
        const TokenAlternative* best = nullptr;
        for (const TokenAlternative& alt : *response.first_token_alternatives) {
            std::string_view token = trim(alt.token);
            if (!point_for_label(variant, token)) continue;
            if (best == nullptr || alt.log_probability > best->log_probability) best = &alt;
        }
        if (best != nullptr) {
            int point = *point_for_label(variant, trim(best->token));
            return std::make_pair(point, ExtractionMethod::TokenScoreFallback);
        }
    }
    return std::nullopt;
}

// --- scoring --------------------------------------------------------------

int keyed_value(const QuestionnaireItem& item, int scale_point) {
    if (scale_point < 1 || scale_point > 7)
        throw ValidationError("scale point out of range: " + std::to_string(scale_point));
    return item.reverse_keyed ? 8 - scale_point : scale_point;
}

int TraitScores::missing_total() const {
    int total = 0;
    for (int n : missing_counts) total += n;
    return total;
}

TraitScores score_traits(const std::vector<ItemOutcome>& outcomes,
                         const Questionnaire& questionnaire) {
    std::map<std::string, const QuestionnaireItem*> by_id;
    for (const QuestionnaireItem& item : questionnaire.items) by_id[item.item_id] = &item;

    std::array<double, 5> sums{};
    std::array<int, 5> counts{};
    TraitScores result;
    for (const ItemOutcome& outcome : outcomes) {
        auto it = by_id.find(outcome.item_id);
        if (it == by_id.end())
            throw ValidationError("response for unknown item " + outcome.item_id);
        const QuestionnaireItem& item = *it->second;
        const auto trait_index = static_cast<std::size_t>(item.trait);
        if (outcome.missing()) {
            result.missing_counts[trait_index] += 1;
            continue;
        }
        sums[trait_index] += keyed_value(item, *outcome.scale_point);
        counts[trait_index] += 1;
    }
    for (Trait t : kAllTraits) {
        const auto i = static_cast<std::size_t>(t);
        if (counts[i] == 0)
            throw ValidationError(std::string("no usable responses for trait ") + trait_code(t));
        result.scores[t] = sums[i] / counts[i];
    }
    return result;
}

// --- administration --------------------------------------------------------------

json ItemOutcome::to_json() const {
    json j;
    j["item_id"] = item_id;
    j["variant"] = variant.name();
    j["asks"] = asks;
    j["raw_text"] = raw_text;
    if (alternatives) {
        json alts = json::array();
        for (const TokenAlternative& a : *alternatives)
            alts.push_back({{"token", a.token}, {"log_probability", a.log_probability}});
        j["alternatives"] = std::move(alts);
    }
    if (scale_point) j["scale_point"] = *scale_point;
    j["extraction_method"] = method ? extraction_method_name(*method) : "missing";
    return j;
}

ItemOutcome ItemOutcome::from_json(const json& j) {
    ItemOutcome outcome;
    outcome.item_id = j.at("item_id").get<std::string>();
    outcome.variant = PromptVariant::from_name(j.at("variant").get<std::string>());
    outcome.asks = j.at("asks").get<int>();
    outcome.raw_text = j.at("raw_text").get<std::string>();
    if (j.contains("alternatives")) {
        std::vector<TokenAlternative> alts;
        for (const json& a : j.at("alternatives"))
            alts.push_back({a.at("token").get<std::string>(),
                            a.at("log_probability").get<double>()});
        outcome.alternatives = std::move(alts);
    }
    if (j.contains("scale_point")) outcome.scale_point = j.at("scale_point").get<int>();
    const std::string method = j.at("extraction_method").get<std::string>();
    if (method == "parsed_leading") outcome.method = ExtractionMethod::ParsedLeading;
    else if (method == "token_score_fallback") outcome.method = ExtractionMethod::TokenScoreFallback;
    return outcome;
}

json AdministerResult::transcript_to_json() const {
    json entries = json::array();
    for (const ItemOutcome& outcome : transcript) entries.push_back(outcome.to_json());
    json j;
    j["entries"] = std::move(entries);
    j["partial"] = partial;
    if (!abort_error.empty()) j["abort_error"] = abort_error;
    return j;
}

AdministerResult administer(ChatBackend& backend, const Questionnaire& questionnaire,
                            const std::vector<PromptVariant>& variants,
                            const std::string& persona_context, const AdministerPolicy& policy) {
    questionnaire.validate();
    if (variants.empty()) throw ValidationError("no prompt variants given");

    const std::size_t n_items = questionnaire.items.size();
    const std::size_t slots = variants.size() * n_items;
    std::vector<ItemOutcome> outcomes(slots);
    std::atomic_bool aborted{false};
    std::mutex abort_mutex;
    std::string abort_error;

    parallel_for(slots, policy.workers, [&](std::size_t slot) {
        const PromptVariant& variant = variants[slot / n_items];
        const QuestionnaireItem& item = questionnaire.items[slot % n_items];
        ItemOutcome& outcome = outcomes[slot];
        outcome.item_id = item.item_id;
        outcome.variant = variant;
        if (aborted.load()) return;

        const ChatRequest request = render_item_prompt(item, variant, persona_context);
        std::vector<ChatResponse> responses;
        try {
            for (int ask = 0; ask <= policy.reask_budget; ++ask) {
                responses.push_back(backend.complete(request));
                outcome.asks += 1;
                const ChatResponse& response = responses.back();
                outcome.raw_text = response.text;
                outcome.alternatives = response.first_token_alternatives;
                if (auto token = leading_token(response.text);
                    token && point_for_label(variant, *token)) {
                    outcome.scale_point = point_for_label(variant, *token);
                    outcome.method = ExtractionMethod::ParsedLeading;
                    return;
                }
            }
        } catch (const BackendError& e) {
            bool expected = false;
            if (aborted.compare_exchange_strong(expected, true)) {
                std::lock_guard<std::mutex> lock(abort_mutex);
                abort_error = e.what();
            }
        }
        // The deterministic parse never succeeded; fall back to token scores
        // from the collected responses, in ask order.
        for (const ChatResponse& response : responses) {
            if (auto extracted = extract_scale_point(response, variant);
                extracted && extracted->second == ExtractionMethod::TokenScoreFallback) {
                outcome.scale_point = extracted->first;
                outcome.method = ExtractionMethod::TokenScoreFallback;
                return;
            }
        }
        if (!aborted.load())
            log::warn("item ", item.item_id, " variant ", variant.name(),
                      " unanswerable after ", outcome.asks, " asks; marked missing");
    });

    AdministerResult result;
    result.transcript = std::move(outcomes);
    result.partial = aborted.load();
    result.abort_error = abort_error;
    if (!result.partial) {
        for (std::size_t v = 0; v < variants.size(); ++v) {
            std::vector<ItemOutcome> slice(result.transcript.begin() + v * n_items,
                                           result.transcript.begin() + (v + 1) * n_items);
            result.per_variant.push_back({variants[v], score_traits(slice, questionnaire)});
        }
    }
    return result;
}

}  // namespace taupipe
