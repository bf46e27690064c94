#include "taupipe/similarity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <httplib.h>

#include "taupipe/errors.hpp"
#include "taupipe/util.hpp"

namespace taupipe {

using nlohmann::json;

// --- tokenization ----------------------------------------------------------------

std::string normalize_nfkc(const std::string& text) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* normalizer = icu::Normalizer2::getNFKCInstance(status);
    if (U_FAILURE(status))
        throw DependencyError("ICU NFKC normalizer unavailable: " + std::string(u_errorName(status)));
    icu::UnicodeString input = icu::UnicodeString::fromUTF8(text);
    icu::UnicodeString normalized = normalizer->normalize(input, status);
    if (U_FAILURE(status))
        throw ValidationError("NFKC normalization failed: " + std::string(u_errorName(status)));
    std::string out;
    normalized.toUTF8String(out);
    return out;
}

static bool codepoint_is_space(const std::string& cp) {
    if (cp.size() == 1) return std::isspace(static_cast<unsigned char>(cp[0])) != 0;
    return cp == "　";  // ideographic space
}

std::vector<std::string> tokenize(const std::string& text, const TokenizerSpec& spec) {
    const std::string prepared =
        spec.normalization == TextNormalization::UnicodeNFKC ? normalize_nfkc(text) : text;
    std::vector<std::string> tokens;
    if (spec.mode == TokenizerMode::Character) {
        for (std::string& cp : utf8_codepoints(prepared))
            if (!codepoint_is_space(cp)) tokens.push_back(std::move(cp));
        return tokens;
    }
    std::string current;
    for (char c : prepared) {
        if (std::isspace(static_cast<unsigned char>(c)) != 0) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current += c;
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

// --- ROUGE -------------------------------------------------------------------------

static double f1(double precision, double recall) {
    const double denom = precision + recall;
    if (denom <= 0.0) return 0.0;
    return 2.0 * precision * recall / denom;
}

double rouge_n_f1(const std::vector<std::string>& candidate,
                  const std::vector<std::string>& reference, int n) {
    if (n != 1 && n != 2) throw ValidationError("rouge_n supports n in {1,2}");
    if (reference.empty()) throw ValidationError("rouge_n needs a non-empty reference");

    auto ngram_counts = [n](const std::vector<std::string>& tokens) {
        std::map<std::string, int> counts;
        if (tokens.size() < static_cast<std::size_t>(n)) return counts;
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            std::string key = tokens[i];
            for (int k = 1; k < n; ++k) {
                key += '\x1f';  // unit separator keeps adjacent tokens from merging
                key += tokens[i + k];
            }
            counts[key] += 1;
        }
        return counts;
    };

    const auto cand_counts = ngram_counts(candidate);
    const auto ref_counts = ngram_counts(reference);
    std::size_t cand_total = candidate.size() >= static_cast<std::size_t>(n)
                                 ? candidate.size() - n + 1
                                 : 0;
    std::size_t ref_total =
        reference.size() >= static_cast<std::size_t>(n) ? reference.size() - n + 1 : 0;
    if (cand_total == 0 || ref_total == 0) return 0.0;

    int matched = 0;
    for (const auto& [key, count] : cand_counts) {
        auto it = ref_counts.find(key);
        if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    const double precision = static_cast<double>(matched) / static_cast<double>(cand_total);
    const double recall = static_cast<double>(matched) / static_cast<double>(ref_total);
    return f1(precision, recall);
}

double rouge_l_f1(const std::vector<std::string>& candidate,
                  const std::vector<std::string>& reference) {
    if (reference.empty()) throw ValidationError("rouge_l needs a non-empty reference");
    if (candidate.empty()) return 0.0;

    // Rolling two-row LCS table.
    const std::size_t m = candidate.size();
    const std::size_t k = reference.size();
    std::vector<std::size_t> prev(k + 1, 0), curr(k + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= k; ++j) {
            if (candidate[i - 1] == reference[j - 1])
                curr[j] = prev[j - 1] + 1;
            else
                curr[j] = std::max(prev[j], curr[j - 1]);
        }
        std::swap(prev, curr);
    }
    const double lcs = static_cast<double>(prev[k]);
    return f1(lcs / static_cast<double>(m), lcs / static_cast<double>(k));
}

// --- embedding-based score -----------------------------------------------------------

double bertscore_f1(const std::vector<std::string>& candidate,
                    const std::vector<std::string>& reference, EmbeddingProvider& provider) {
    if (reference.empty()) throw ValidationError("bertscore needs a non-empty reference");
    if (candidate.empty()) return 0.0;

    const auto cand_vectors = provider.embed_tokens(candidate);
    const auto ref_vectors = provider.embed_tokens(reference);
    if (cand_vectors.size() != candidate.size() || ref_vectors.size() != reference.size())
        throw ValidationError("embedding provider returned a mismatched vector count");

    auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
        if (a.size() != b.size())
            throw ValidationError("embedding dimensions differ within one call");
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        if (na == 0.0 || nb == 0.0) return 0.0;
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };
    auto best_match_mean = [&](const std::vector<std::vector<double>>& from,
                               const std::vector<std::vector<double>>& to) {
        double sum = 0.0;
        for (const auto& f : from) {
            double best = 0.0;
            for (const auto& t : to) best = std::max(best, cosine(f, t));
            sum += std::clamp(best, 0.0, 1.0);
        }
        return sum / static_cast<double>(from.size());
    };
    return f1(best_match_mean(cand_vectors, ref_vectors),
              best_match_mean(ref_vectors, cand_vectors));
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string base_url, std::string model_id,
                                             std::string api_key_env, int timeout_ms)
    : base_url_(std::move(base_url)),
      model_id_(std::move(model_id)),
      api_key_env_(std::move(api_key_env)),
      timeout_ms_(timeout_ms) {}

std::string HttpEmbeddingProvider::describe() const {
    return "http-embeddings:" + base_url_ + " model=" + model_id_;
}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed_tokens(
    const std::vector<std::string>& tokens) {
    auto scheme_end = base_url_.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("embedding base_url missing scheme: " + base_url_);
    auto path_start = base_url_.find('/', scheme_end + 3);
    std::string host = path_start == std::string::npos ? base_url_
                                                       : base_url_.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : base_url_.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    json body;
    body["model"] = model_id_;
    body["input"] = tokens;

    httplib::Headers headers;
    if (!api_key_env_.empty()) {
        std::string key = getenv_or(api_key_env_, "");
        if (key.empty())
            throw BackendError(BackendError::Kind::Auth,
                               "environment variable " + api_key_env_ + " is not set");
        headers.emplace("Authorization", "Bearer " + key);
    }
    httplib::Client client(host);
    client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
    auto result = client.Post(prefix + "/embeddings", headers, body.dump(), "application/json");
    if (!result)
        throw BackendError(BackendError::Kind::Transport,
                           "embedding endpoint unreachable: " + httplib::to_string(result.error()));
    if (result->status != 200)
        throw BackendError(BackendError::Kind::Protocol,
                           "embedding endpoint returned HTTP " + std::to_string(result->status));
    try {
        const json reply = json::parse(result->body);
        std::vector<std::vector<double>> vectors;
        for (const json& item : reply.at("data"))
            vectors.push_back(item.at("embedding").get<std::vector<double>>());
        return vectors;
    } catch (const json::exception& e) {
        throw BackendError(BackendError::Kind::Protocol,
                           std::string("malformed embedding response: ") + e.what());
    }
}

// --- per-dialog and corpus scores ------------------------------------------------------

void SimilarityBreakdown::finalize() {
    partial = !bertscore.has_value();
    aggregate = rouge1 + rouge2 + rougeL + (bertscore ? *bertscore : 0.0);
}

json SimilarityBreakdown::to_json() const {
    json j;
    j["rouge1"] = rouge1;
    j["rouge2"] = rouge2;
    j["rougeL"] = rougeL;
    if (bertscore) j["bertscore"] = *bertscore;
    j["aggregate"] = aggregate;
    j["partial"] = partial;
    j["turns"] = turns;
    j["empty_generations"] = empty_generations;
    return j;
}

SimilarityBreakdown SimilarityBreakdown::from_json(const json& j) {
    SimilarityBreakdown b;
    b.rouge1 = j.at("rouge1").get<double>();
    b.rouge2 = j.at("rouge2").get<double>();
    b.rougeL = j.at("rougeL").get<double>();
    if (j.contains("bertscore")) b.bertscore = j.at("bertscore").get<double>();
    b.aggregate = j.at("aggregate").get<double>();
    b.partial = j.at("partial").get<bool>();
    b.turns = j.at("turns").get<int>();
    b.empty_generations = j.at("empty_generations").get<int>();
    return b;
}

std::vector<SimilarityTurn> similarity_turns(const Dialog& dialog,
                                             const std::string& target_speaker,
                                             RecordMode context_mode) {
    const TrainingRecord record = build_record(dialog, target_speaker, context_mode);
    std::vector<SimilarityTurn> turns;
    for (std::size_t i = 0; i < record.messages.size(); ++i) {
        const TrainingMessage& message = record.messages[i];
        if (message.role != TrainRole::Assistant) continue;
        if (i == 0) continue;  // nothing to condition on
        SimilarityTurn turn;
        for (std::size_t k = 0; k < i; ++k)
            turn.context.push_back({record.messages[k].role == TrainRole::Assistant
                                        ? Role::Assistant
                                        : Role::User,
                                    record.messages[k].content});
        turn.reference = context_mode == RecordMode::TAUAugmented
                             ? strip_thinking_span(message.content)
                             : message.content;
        turns.push_back(std::move(turn));
    }
    return turns;
}

SimilarityBreakdown dialog_similarity(ChatBackend& backend, const Dialog& dialog,
                                      const std::string& target_speaker,
                                      const SimilarityOptions& options,
                                      EmbeddingProvider* embed_provider) {
    const std::vector<SimilarityTurn> turns =
        similarity_turns(dialog, target_speaker, options.context_mode);
    if (turns.empty())
        throw ValidationError("dialog " + dialog.dialog_id + " has no scorable turn for " +
                              target_speaker);

    SimilarityBreakdown breakdown;
    double bert_sum = 0.0;
    for (const SimilarityTurn& turn : turns) {
        ChatRequest request;
        request.messages = turn.context;
        request.temperature = 0.0;
        request.max_tokens = options.max_tokens;
        const ChatResponse response = backend.complete(request);

        const std::vector<std::string> reference = tokenize(turn.reference, options.tokenizer);
        const std::vector<std::string> candidate = tokenize(response.text, options.tokenizer);
        if (candidate.empty()) breakdown.empty_generations += 1;
        breakdown.rouge1 += rouge_n_f1(candidate, reference, 1);
        breakdown.rouge2 += rouge_n_f1(candidate, reference, 2);
        breakdown.rougeL += rouge_l_f1(candidate, reference);
        if (embed_provider != nullptr)
            bert_sum += bertscore_f1(candidate, reference, *embed_provider);
        breakdown.turns += 1;
    }
    const double n = breakdown.turns;
    breakdown.rouge1 /= n;
    breakdown.rouge2 /= n;
    breakdown.rougeL /= n;
    if (embed_provider != nullptr) breakdown.bertscore = bert_sum / n;
    breakdown.finalize();
    return breakdown;
}

SimilarityBreakdown corpus_similarity(const std::vector<SimilarityBreakdown>& breakdowns) {
    if (breakdowns.empty()) throw ValidationError("no dialog breakdowns to aggregate");
    SimilarityBreakdown corpus;
    const bool with_bert =
        std::all_of(breakdowns.begin(), breakdowns.end(),
                    [](const SimilarityBreakdown& b) { return b.bertscore.has_value(); });
    const bool any_bert =
        std::any_of(breakdowns.begin(), breakdowns.end(),
                    [](const SimilarityBreakdown& b) { return b.bertscore.has_value(); });
    if (any_bert && !with_bert)
        throw ValidationError("embedding scores present for only part of the corpus");
    double bert_sum = 0.0;
    for (const SimilarityBreakdown& b : breakdowns) {
        corpus.rouge1 += b.rouge1;
        corpus.rouge2 += b.rouge2;
        corpus.rougeL += b.rougeL;
        corpus.turns += b.turns;
        corpus.empty_generations += b.empty_generations;
        if (with_bert) bert_sum += *b.bertscore;
    }
    const double n = static_cast<double>(breakdowns.size());
    corpus.rouge1 /= n;
    corpus.rouge2 /= n;
    corpus.rougeL /= n;
    if (with_bert) corpus.bertscore = bert_sum / n;
    corpus.finalize();
    return corpus;
}

}  // namespace taupipe
