#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "taupipe/corpus.hpp"
#include "taupipe/psych.hpp"
#include "taupipe/traits.hpp"

namespace taupipe {

// One questionnaire administration of one model for one speaker.
struct EvaluationRun {
    std::string run_id;
    std::string model_label;   // e.g. "base", "with-tau"
    std::string speaker_id;
    std::vector<VariantScores> per_variant;
    TraitVector ground_truth;

    void validate() const;

    nlohmann::json to_json() const;
    static EvaluationRun from_json(const nlohmann::json& j);
};

struct ModelReport {
    std::string model_label;
    TraitVector mse;
    bool partial = false;      // fewer than 8 variants contributed
    std::vector<std::string> speaker_ids;  // sorted

    double mean_mse() const { return mse.mean(); }
};

// Per variant, mean over speakers of (estimate - truth)^2; then averaged over
// variants. All runs must carry the same variant set.
ModelReport mse_per_trait(const std::string& model_label,
                          const std::vector<EvaluationRun>& runs);

// Per-speaker MSE for one run: mean over its variants per trait.
TraitVector speaker_mse(const EvaluationRun& run);

// finetuned - base per trait; negative means improvement. Speaker sets must
// match.
TraitVector gains(const ModelReport& finetuned, const ModelReport& base);

// --- correlation ----------------------------------------------------------------

struct PearsonResult {
    double r = 0.0;
    double p = 1.0;
    int n = 0;
};

// Sample Pearson correlation with a two-tailed p-value from the t-statistic
// with n - 2 degrees of freedom. Requires n >= 3 and nonzero variance.
PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y);

// I_x(a, b), evaluated by continued fraction to ~1e-8.
double regularized_incomplete_beta(double a, double b, double x);

double student_t_two_tailed_p(double t, int degrees_of_freedom);

// --- report rendering -------------------------------------------------------------

// Plain-text table: one row per report, trait columns then Mean, 3 decimals,
// per-column minimum marked with '*'.
std::string render_mse_table(const std::vector<ModelReport>& reports);

struct CorrelationEntry {
    std::string label;
    PearsonResult result;
};

nlohmann::json render_report_json(const std::vector<ModelReport>& reports,
                                  const std::vector<CorrelationEntry>& correlations = {});

}  // namespace taupipe
