#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "taupipe/augment.hpp"
#include "taupipe/chat.hpp"
#include "taupipe/corpus.hpp"
#include "taupipe/psych.hpp"
#include "taupipe/similarity.hpp"
#include "taupipe/traits.hpp"

namespace taupipe {

// Deterministic stand-ins for live endpoints. Every mock is thread-safe and
// free of wall-clock or RNG state so reruns produce identical artifacts.

// Returns the last user message verbatim.
class EchoBackend : public ChatBackend {
  public:
    ChatResponse complete(const ChatRequest& request) override;
    std::string describe() const override { return "mock:echo"; }

    int calls() const { return calls_; }

  private:
    std::atomic_int calls_{0};
};

// Plays back scripted responses. Rules match on a substring of the last user
// message; each rule holds a FIFO queue, and when the queue runs dry the last
// response repeats (cycle_last). Unmatched requests throw
// BackendError::Kind::Unscripted.
class ScriptedBackend : public ChatBackend {
  public:
    struct Rule {
        std::string match_substring;     // empty matches everything
        std::vector<ChatResponse> responses;
        bool cycle_last = true;
    };

    void add_rule(Rule rule);
    void add_text_rule(const std::string& match_substring, std::vector<std::string> texts,
                       bool cycle_last = true);

    ChatResponse complete(const ChatRequest& request) override;
    std::string describe() const override { return "mock:scripted"; }

    int calls() const { return calls_; }

  private:
    struct RuleState {
        Rule rule;
        std::size_t next = 0;
    };
    std::vector<RuleState> rules_;
    std::mutex mutex_;
    std::atomic_int calls_{0};
};

// Answers TAU-augmentation prompts: reads the task block of the user prompt,
// fills every empty thinking slot deterministically, and (optionally)
// paraphrases some original utterances so restoration has real work to do.
class MockAugmentBackend : public ChatBackend {
  public:
    struct Options {
        bool paraphrase = false;        // perturb ~1/3 of re-emitted originals
        std::string fail_marker;        // dialogs whose text contains this get garbage
        bool emit_output_label = false; // prepend the forbidden "Output:" line
    };

    MockAugmentBackend() = default;
    explicit MockAugmentBackend(Options options) : options_(options) {}

    ChatResponse complete(const ChatRequest& request) override;
    std::string describe() const override { return "mock:augment"; }

    int calls() const { return calls_; }

    // The deterministic TAU text for a given speaking line.
    static std::string tau_for(const std::string& speaker_id, const std::string& utterance);
    // The deterministic paraphrase applied when options_.paraphrase is set.
    static std::string paraphrase(const std::string& utterance);
    static bool paraphrase_selected(const std::string& utterance);

  private:
    Options options_;
    std::atomic_int calls_{0};
};

// Role-plays a persona with a planted trait vector: detects the questionnaire
// item and prompt variant by re-rendering candidate prompts, computes the
// endorsement the persona would give, and answers "{label}." Planted integer
// vectors are recovered exactly by the scoring pipeline.
class MockPersonaBackend : public ChatBackend {
  public:
    MockPersonaBackend(TraitVector persona, Questionnaire questionnaire);

    ChatResponse complete(const ChatRequest& request) override;
    std::string describe() const override { return "mock:persona"; }

    int calls() const { return calls_; }

    // Endorsement before labeling: reverse-keyed items invert the trait
    // value; the result rounds half-up and clamps to [1,7].
    static int endorsement(const TraitVector& persona, const QuestionnaireItem& item);

  private:
    TraitVector persona_;
    Questionnaire questionnaire_;
    std::atomic_int calls_{0};
};

// Answers a fixed scale point regardless of item, used for known-MSE runs.
class FixedAnswerBackend : public ChatBackend {
  public:
    FixedAnswerBackend(int scale_point, Questionnaire questionnaire);

    ChatResponse complete(const ChatRequest& request) override;
    std::string describe() const override { return "mock:fixed-answer"; }

  private:
    int scale_point_;
    Questionnaire questionnaire_;
};

// Keyed generation mock for similarity runs: maps a context fingerprint to
// the reference utterance, so generated text equals the reference and every
// ROUGE component is exactly 1.
class ReferenceEchoBackend : public ChatBackend {
  public:
    void add_dialog(const Dialog& dialog, const std::string& target_speaker,
                    RecordMode context_mode = RecordMode::OriginalOnly);

    ChatResponse complete(const ChatRequest& request) override;
    std::string describe() const override { return "mock:reference-echo"; }

  private:
    static std::string context_key(const std::vector<ChatMessage>& messages);

    std::map<std::string, std::string> by_context_;
    std::mutex mutex_;
};

// Deterministic per-token embeddings: identical tokens map to identical unit
// vectors, distinct tokens to hash-derived directions.
class HashEmbeddingProvider : public EmbeddingProvider {
  public:
    explicit HashEmbeddingProvider(int dimensions = 16) : dimensions_(dimensions) {}

    std::vector<std::vector<double>> embed_tokens(
        const std::vector<std::string>& tokens) override;
    std::string describe() const override { return "mock:hash-embeddings"; }

  private:
    int dimensions_;
};

// Explicit token -> vector table, for hand-computed score tests.
class FixedEmbeddingProvider : public EmbeddingProvider {
  public:
    explicit FixedEmbeddingProvider(std::map<std::string, std::vector<double>> table)
        : table_(std::move(table)) {}

    std::vector<std::vector<double>> embed_tokens(
        const std::vector<std::string>& tokens) override;
    std::string describe() const override { return "mock:fixed-embeddings"; }

  private:
    std::map<std::string, std::vector<double>> table_;
};

}  // namespace taupipe
