#include "taupipe/mocks.hpp"

#include <algorithm>
#include <cmath>

#include "taupipe/errors.hpp"
#include "taupipe/util.hpp"

namespace taupipe {

namespace {

const std::string& require_user_content(const ChatRequest& request, const char* who) {
    const std::string* content = request.last_user_content();
    if (content == nullptr)
        throw BackendError(BackendError::Kind::Unscripted,
                           std::string(who) + " needs a user message");
    return *content;
}

}  // namespace

// --- EchoBackend -----------------------------------------------------------------

ChatResponse EchoBackend::complete(const ChatRequest& request) {
    request.validate();
    ++calls_;
    return ChatResponse{require_user_content(request, "echo mock"), std::nullopt};
}

// --- ScriptedBackend --------------------------------------------------------------

void ScriptedBackend::add_rule(Rule rule) {
    if (rule.responses.empty())
        throw ValidationError("scripted rule needs at least one response");
    std::lock_guard<std::mutex> lock(mutex_);
    rules_.push_back({std::move(rule), 0});
}

void ScriptedBackend::add_text_rule(const std::string& match_substring,
                                    std::vector<std::string> texts, bool cycle_last) {
    Rule rule;
    rule.match_substring = match_substring;
    for (std::string& text : texts) rule.responses.push_back({std::move(text), std::nullopt});
    rule.cycle_last = cycle_last;
    add_rule(std::move(rule));
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
    request.validate();
    ++calls_;
    const std::string& content = require_user_content(request, "scripted mock");
    std::lock_guard<std::mutex> lock(mutex_);
    for (RuleState& state : rules_) {
        if (!state.rule.match_substring.empty() &&
            content.find(state.rule.match_substring) == std::string::npos)
            continue;
        if (state.next < state.rule.responses.size()) return state.rule.responses[state.next++];
        if (state.rule.cycle_last) return state.rule.responses.back();
        throw BackendError(BackendError::Kind::Unscripted,
                           "scripted responses exhausted for rule '" + state.rule.match_substring +
                               "'");
    }
    throw BackendError(BackendError::Kind::Unscripted,
                       "no scripted rule matches request: " + content.substr(0, 120));
}

// --- MockAugmentBackend -----------------------------------------------------------

std::string MockAugmentBackend::tau_for(const std::string& speaker_id,
                                        const std::string& utterance) {
    const std::string cue = to_hex(fnv1a64(speaker_id + "|" + utterance)).substr(0, 8);
    return "I weigh my next words carefully (cue " + cue + ").";
}

bool MockAugmentBackend::paraphrase_selected(const std::string& utterance) {
    return fnv1a64(utterance) % 3 == 0;
}

std::string MockAugmentBackend::paraphrase(const std::string& utterance) {
    return utterance + "!";
}

ChatResponse MockAugmentBackend::complete(const ChatRequest& request) {
    request.validate();
    ++calls_;
    const std::string& content = require_user_content(request, "augment mock");

    // The task block sits between the exact "Dialog History:" line and the
    // trailing "Output:" line; the few-shot examples use longer headers and
    // never collide.
    std::vector<std::string> lines = split_lines(content);
    std::size_t begin = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i)
        if (trim(lines[i]) == "Dialog History:") begin = i + 1;
    if (begin >= lines.size())
        throw BackendError(BackendError::Kind::Unscripted,
                           "augment mock found no task dialog block");

    std::vector<GrammarLine> history;
    for (std::size_t i = begin; i < lines.size(); ++i) {
        std::string_view line = trim(lines[i]);
        if (line.empty() || line == "Output:") break;
        std::optional<GrammarLine> parsed = parse_grammar_line(line);
        if (!parsed)
            throw BackendError(BackendError::Kind::Unscripted,
                               "augment mock cannot parse history line: " + std::string(line));
        history.push_back(std::move(*parsed));
    }
    if (history.empty())
        throw BackendError(BackendError::Kind::Unscripted, "augment mock got an empty history");

    if (!options_.fail_marker.empty()) {
        for (const GrammarLine& line : history)
            if (line.payload.find(options_.fail_marker) != std::string::npos)
                return {"this response deliberately ignores the required line format",
                        std::nullopt};
    }

    std::vector<std::string> out;
    if (options_.emit_output_label) out.push_back("Output:");
    for (std::size_t i = 0; i < history.size(); ++i) {
        const GrammarLine& line = history[i];
        if (line.channel == Channel::Thinking) {
            if (i + 1 >= history.size())
                throw BackendError(BackendError::Kind::Unscripted,
                                   "augment mock saw a dangling thinking slot");
            out.push_back(format_grammar_line(
                {line.speaker_id, Channel::Thinking,
                 tau_for(history[i + 1].speaker_id, history[i + 1].payload)}));
            continue;
        }
        std::string text = line.payload;
        if (options_.paraphrase && paraphrase_selected(text)) text = paraphrase(text);
        out.push_back(format_grammar_line({line.speaker_id, Channel::Speaking, text}));
    }
    return {join(out, "\n"), std::nullopt};
}

// --- MockPersonaBackend -----------------------------------------------------------

namespace {

struct MatchedPrompt {
    const QuestionnaireItem* item;
    PromptVariant variant;
};

std::optional<MatchedPrompt> match_item_prompt(const Questionnaire& questionnaire,
                                               const std::string& user_text) {
    for (const QuestionnaireItem& item : questionnaire.items) {
        if (user_text.find("Question: " + item.text) == std::string::npos) continue;
        for (const PromptVariant& variant : all_prompt_variants())
            if (render_item_text(item, variant) == user_text) return MatchedPrompt{&item, variant};
    }
    return std::nullopt;
}

}  // namespace

MockPersonaBackend::MockPersonaBackend(TraitVector persona, Questionnaire questionnaire)
    : persona_(persona), questionnaire_(std::move(questionnaire)) {
    questionnaire_.validate();
    if (!persona_.in_scale_range())
        throw ValidationError("planted persona out of scale range");
}

int MockPersonaBackend::endorsement(const TraitVector& persona, const QuestionnaireItem& item) {
    double value = persona[item.trait];
    if (item.reverse_keyed) value = 8.0 - value;
    const int rounded = static_cast<int>(std::floor(value + 0.5));
    return std::clamp(rounded, 1, 7);
}

ChatResponse MockPersonaBackend::complete(const ChatRequest& request) {
    request.validate();
    ++calls_;
    const std::string& content = require_user_content(request, "persona mock");
    std::optional<MatchedPrompt> match = match_item_prompt(questionnaire_, content);
    if (!match)
        throw BackendError(BackendError::Kind::Unscripted,
                           "persona mock got a prompt that is not a questionnaire item");
    const int point = endorsement(persona_, *match->item);
    return {label_for_point(match->variant, point) + ".", std::nullopt};
}

// --- FixedAnswerBackend -----------------------------------------------------------

FixedAnswerBackend::FixedAnswerBackend(int scale_point, Questionnaire questionnaire)
    : scale_point_(scale_point), questionnaire_(std::move(questionnaire)) {
    if (scale_point_ < 1 || scale_point_ > 7)
        throw ValidationError("fixed answer must be a scale point");
    questionnaire_.validate();
}

ChatResponse FixedAnswerBackend::complete(const ChatRequest& request) {
    request.validate();
    const std::string& content = require_user_content(request, "fixed-answer mock");
    std::optional<MatchedPrompt> match = match_item_prompt(questionnaire_, content);
    if (!match)
        throw BackendError(BackendError::Kind::Unscripted,
                           "fixed-answer mock got a prompt that is not a questionnaire item");
    return {label_for_point(match->variant, scale_point_) + ".", std::nullopt};
}

// --- ReferenceEchoBackend -----------------------------------------------------------

std::string ReferenceEchoBackend::context_key(const std::vector<ChatMessage>& messages) {
    std::string flat;
    for (const ChatMessage& m : messages) {
        flat += role_name(m.role);
        flat += '\x1e';
        flat += m.content;
        flat += '\x1f';
    }
    return to_hex(fnv1a64(flat));
}

void ReferenceEchoBackend::add_dialog(const Dialog& dialog, const std::string& target_speaker,
                                      RecordMode context_mode) {
    std::lock_guard<std::mutex> lock(mutex_);
    for (const SimilarityTurn& turn : similarity_turns(dialog, target_speaker, context_mode)) {
        const std::string key = context_key(turn.context);
        auto [it, inserted] = by_context_.emplace(key, turn.reference);
        if (!inserted && it->second != turn.reference)
            throw ValidationError("two different references share a context fingerprint");
    }
}

ChatResponse ReferenceEchoBackend::complete(const ChatRequest& request) {
    request.validate();
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = by_context_.find(context_key(request.messages));
    if (it == by_context_.end())
        throw BackendError(BackendError::Kind::Unscripted,
                           "reference-echo mock has no entry for this context");
    return {it->second, std::nullopt};
}

// --- embedding mocks -----------------------------------------------------------------

std::vector<std::vector<double>> HashEmbeddingProvider::embed_tokens(
    const std::vector<std::string>& tokens) {
    std::vector<std::vector<double>> vectors;
    vectors.reserve(tokens.size());
    for (const std::string& token : tokens) {
        std::vector<double> v(static_cast<std::size_t>(dimensions_));
        std::uint64_t state = fnv1a64(token);
        double norm = 0.0;
        for (double& x : v) {
            state = mix_seed(state, "dim");
            // map to [-1, 1)
            x = static_cast<double>(state >> 11) / static_cast<double>(1ull << 53) * 2.0 - 1.0;
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
        vectors.push_back(std::move(v));
    }
    return vectors;
}

std::vector<std::vector<double>> FixedEmbeddingProvider::embed_tokens(
    const std::vector<std::string>& tokens) {
    std::vector<std::vector<double>> vectors;
    for (const std::string& token : tokens) {
        auto it = table_.find(token);
        if (it == table_.end())
            throw ValidationError("no fixed embedding for token: " + token);
        vectors.push_back(it->second);
    }
    return vectors;
}

}  // namespace taupipe
