#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "taupipe/chat.hpp"
#include "taupipe/corpus.hpp"
#include "taupipe/trainset.hpp"

namespace taupipe {

// --- tokenization ----------------------------------------------------------------

enum class TokenizerMode { Character, Whitespace };
enum class TextNormalization { None, UnicodeNFKC };

struct TokenizerSpec {
    TokenizerMode mode = TokenizerMode::Character;
    TextNormalization normalization = TextNormalization::UnicodeNFKC;
};

// Character mode yields one token per non-whitespace codepoint; Whitespace
// mode splits on whitespace runs.
std::vector<std::string> tokenize(const std::string& text, const TokenizerSpec& spec);

std::string normalize_nfkc(const std::string& text);

// --- ROUGE -------------------------------------------------------------------------

// F1 over clipped n-gram multiset overlap. n in {1,2}; reference non-empty.
double rouge_n_f1(const std::vector<std::string>& candidate,
                  const std::vector<std::string>& reference, int n);

// F1 from the exact longest-common-subsequence length.
double rouge_l_f1(const std::vector<std::string>& candidate,
                  const std::vector<std::string>& reference);

// --- embedding-based score -----------------------------------------------------------

class EmbeddingProvider {
  public:
    virtual ~EmbeddingProvider() = default;
    // One embedding per token, dimensions consistent within a call.
    virtual std::vector<std::vector<double>> embed_tokens(
        const std::vector<std::string>& tokens) = 0;
    virtual std::string describe() const = 0;
};

// Greedy-matching F1 over token cosine similarities; per-token best matches
// clamp to [0,1] so scores stay in range without a rescaling baseline.
double bertscore_f1(const std::vector<std::string>& candidate,
                    const std::vector<std::string>& reference, EmbeddingProvider& provider);

// OpenAI-compatible /embeddings endpoint.
class HttpEmbeddingProvider : public EmbeddingProvider {
  public:
    HttpEmbeddingProvider(std::string base_url, std::string model_id,
                          std::string api_key_env = "", int timeout_ms = 30000);

    std::vector<std::vector<double>> embed_tokens(
        const std::vector<std::string>& tokens) override;
    std::string describe() const override;

  private:
    std::string base_url_;
    std::string model_id_;
    std::string api_key_env_;
    int timeout_ms_;
};

// --- per-dialog and corpus scores ------------------------------------------------------

struct SimilarityBreakdown {
    double rouge1 = 0.0;
    double rouge2 = 0.0;
    double rougeL = 0.0;
    std::optional<double> bertscore;
    double aggregate = 0.0;   // sum of the available components
    bool partial = false;     // no embedding provider configured
    int turns = 0;            // target turns scored
    int empty_generations = 0;

    void finalize();          // recomputes aggregate and partial

    nlohmann::json to_json() const;
    static SimilarityBreakdown from_json(const nlohmann::json& j);
};

struct SimilarityOptions {
    TokenizerSpec tokenizer;
    // Context rendering mode; thinking spans stay out of the context by
    // default even for augmented dialogs.
    RecordMode context_mode = RecordMode::OriginalOnly;
    int max_tokens = 512;
};

// For each target turn: feed the preceding turns, generate, and score the
// generation against the reference turn. Turns without preceding context are
// skipped. Component scores are means over the scored turns.
SimilarityBreakdown dialog_similarity(ChatBackend& backend, const Dialog& dialog,
                                      const std::string& target_speaker,
                                      const SimilarityOptions& options = {},
                                      EmbeddingProvider* embed_provider = nullptr);

// Unweighted mean per component across dialogs; aggregate is the sum of the
// component means.
SimilarityBreakdown corpus_similarity(const std::vector<SimilarityBreakdown>& breakdowns);

// The (context, reference) pairs dialog_similarity would score, in order.
// Mocks and transcripts are built from the same walk.
struct SimilarityTurn {
    std::vector<ChatMessage> context;
    std::string reference;
};
std::vector<SimilarityTurn> similarity_turns(const Dialog& dialog,
                                             const std::string& target_speaker,
                                             RecordMode context_mode = RecordMode::OriginalOnly);

}  // namespace taupipe
