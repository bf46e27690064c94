#include "taupipe/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

#include "taupipe/errors.hpp"
#include "taupipe/util.hpp"

namespace taupipe {

using nlohmann::json;

namespace {

json trait_vector_to_json(const TraitVector& v) {
    json j;
    for (Trait t : kAllTraits) j[std::string(1, trait_code(t))] = v[t];
    return j;
}

TraitVector trait_vector_from_json(const json& j) {
    TraitVector v;
    for (Trait t : kAllTraits) v[t] = j.at(std::string(1, trait_code(t))).get<double>();
    return v;
}

}  // namespace

void EvaluationRun::validate() const {
    if (run_id.empty()) throw ValidationError("evaluation run without id");
    if (speaker_id.empty()) throw ValidationError("evaluation run " + run_id + " without speaker");
    if (per_variant.empty())
        throw ValidationError("evaluation run " + run_id + " has no variant scores");
    if (!ground_truth.in_scale_range())
        throw ValidationError("ground truth out of scale range in run " + run_id);
    std::set<std::string> names;
    for (const VariantScores& vs : per_variant) {
        if (!names.insert(vs.variant.name()).second)
            throw ValidationError("duplicate variant " + vs.variant.name() + " in run " + run_id);
        if (!vs.scores.scores.in_scale_range())
            throw ValidationError("estimated scores out of scale range in run " + run_id);
    }
}

json EvaluationRun::to_json() const {
    json variants = json::array();
    for (const VariantScores& vs : per_variant) {
        json entry;
        entry["variant"] = vs.variant.name();
        entry["scores"] = trait_vector_to_json(vs.scores.scores);
        json missing;
        for (Trait t : kAllTraits)
            missing[std::string(1, trait_code(t))] =
                vs.scores.missing_counts[static_cast<std::size_t>(t)];
        entry["missing_counts"] = std::move(missing);
        variants.push_back(std::move(entry));
    }
    json j;
    j["run_id"] = run_id;
    j["model_label"] = model_label;
    j["speaker_id"] = speaker_id;
    j["ground_truth"] = trait_vector_to_json(ground_truth);
    j["per_variant"] = std::move(variants);
    return j;
}

EvaluationRun EvaluationRun::from_json(const json& j) {
    EvaluationRun run;
    run.run_id = j.at("run_id").get<std::string>();
    run.model_label = j.at("model_label").get<std::string>();
    run.speaker_id = j.at("speaker_id").get<std::string>();
    run.ground_truth = trait_vector_from_json(j.at("ground_truth"));
    for (const json& entry : j.at("per_variant")) {
        VariantScores vs;
        vs.variant = PromptVariant::from_name(entry.at("variant").get<std::string>());
        vs.scores.scores = trait_vector_from_json(entry.at("scores"));
        for (Trait t : kAllTraits)
            vs.scores.missing_counts[static_cast<std::size_t>(t)] =
                entry.at("missing_counts").at(std::string(1, trait_code(t))).get<int>();
        run.per_variant.push_back(std::move(vs));
    }
    run.validate();
    return run;
}

ModelReport mse_per_trait(const std::string& model_label,
                          const std::vector<EvaluationRun>& runs) {
    if (runs.empty()) throw ValidationError("no evaluation runs for model " + model_label);
    std::vector<std::string> variant_names;
    for (const VariantScores& vs : runs.front().per_variant)
        variant_names.push_back(vs.variant.name());
    std::sort(variant_names.begin(), variant_names.end());

    ModelReport report;
    report.model_label = model_label;
    report.partial = variant_names.size() < all_prompt_variants().size();

    // speaker -> (variant name -> scores), with the variant set checked to be
    // identical across runs so every variant average covers every speaker.
    for (const EvaluationRun& run : runs) {
        run.validate();
        std::vector<std::string> names;
        for (const VariantScores& vs : run.per_variant) names.push_back(vs.variant.name());
        std::sort(names.begin(), names.end());
        if (names != variant_names)
            throw ValidationError("run " + run.run_id + " has a different variant set");
        report.speaker_ids.push_back(run.speaker_id);
    }
    std::sort(report.speaker_ids.begin(), report.speaker_ids.end());
    if (std::adjacent_find(report.speaker_ids.begin(), report.speaker_ids.end()) !=
        report.speaker_ids.end())
        throw ValidationError("duplicate speaker in runs for model " + model_label);

    for (Trait t : kAllTraits) {
        double variant_sum = 0.0;
        for (const std::string& name : variant_names) {
            double speaker_sum = 0.0;
            for (const EvaluationRun& run : runs) {
                const VariantScores* found = nullptr;
                for (const VariantScores& vs : run.per_variant)
                    if (vs.variant.name() == name) found = &vs;
                const double err = found->scores.scores[t] - run.ground_truth[t];
                speaker_sum += err * err;
            }
            variant_sum += speaker_sum / static_cast<double>(runs.size());
        }
        report.mse[t] = variant_sum / static_cast<double>(variant_names.size());
    }
    return report;
}

TraitVector speaker_mse(const EvaluationRun& run) {
    run.validate();
    TraitVector mse;
    for (Trait t : kAllTraits) {
        double sum = 0.0;
        for (const VariantScores& vs : run.per_variant) {
            const double err = vs.scores.scores[t] - run.ground_truth[t];
            sum += err * err;
        }
        mse[t] = sum / static_cast<double>(run.per_variant.size());
    }
    return mse;
}

TraitVector gains(const ModelReport& finetuned, const ModelReport& base) {
    if (finetuned.speaker_ids != base.speaker_ids)
        throw ValidationError("speaker sets differ between " + finetuned.model_label + " and " +
                              base.model_label);
    TraitVector g;
    for (Trait t : kAllTraits) g[t] = finetuned.mse[t] - base.mse[t];
    return g;
}

// --- correlation ----------------------------------------------------------------

namespace {

// Continued-fraction core of the incomplete beta function (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 300;
    constexpr double kEpsilon = 1e-12;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEpsilon) return h;
    }
    throw ValidationError("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw ValidationError("beta parameters must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    // The continued fraction converges fast only below the split point; use
    // the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) on the other side.
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed_p(double t, int degrees_of_freedom) {
    if (degrees_of_freedom < 1) throw ValidationError("degrees of freedom must be positive");
    const double nu = degrees_of_freedom;
    const double x = nu / (nu + t * t);
    double p = regularized_incomplete_beta(nu / 2.0, 0.5, x);
    if (p > 1.0) p = 1.0;
    if (p <= 0.0) p = std::numeric_limits<double>::denorm_min();
    return p;
}

PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ValidationError("correlation inputs differ in length");
    const int n = static_cast<int>(x.size());
    if (n < 3) throw ValidationError("correlation needs at least 3 points");

    double mean_x = 0.0, mean_y = 0.0;
    for (int i = 0; i < n; ++i) {
        mean_x += x[i];
        mean_y += y[i];
    }
    mean_x /= n;
    mean_y /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dx = x[i] - mean_x;
        const double dy = y[i] - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw ValidationError("correlation input has zero variance");

    PearsonResult result;
    result.n = n;
    result.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double r2 = result.r * result.r;
    if (r2 >= 1.0) {
        result.p = std::numeric_limits<double>::denorm_min();
        return result;
    }
    const double t = result.r * std::sqrt((n - 2) / (1.0 - r2));
    result.p = student_t_two_tailed_p(t, n - 2);
    return result;
}

// --- report rendering -------------------------------------------------------------

namespace {

std::string fixed_3(double v) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.3f", v);
    return buffer;
}

double round_3(double v) { return std::round(v * 1000.0) / 1000.0; }

}  // namespace

std::string render_mse_table(const std::vector<ModelReport>& reports) {
    if (reports.empty()) throw ValidationError("no reports to render");

    std::size_t label_width = 5;  // "Model"
    for (const ModelReport& r : reports) label_width = std::max(label_width, r.model_label.size());

    // Column minima compare the rounded values shown in the table.
    std::array<double, 6> minima;
    minima.fill(std::numeric_limits<double>::infinity());
    for (const ModelReport& r : reports) {
        for (std::size_t i = 0; i < 5; ++i)
            minima[i] = std::min(minima[i], round_3(r.mse.values[i]));
        minima[5] = std::min(minima[5], round_3(r.mean_mse()));
    }

    auto pad = [](std::string s, std::size_t width) {
        while (s.size() < width) s += ' ';
        return s;
    };
    constexpr std::size_t kColumnWidth = 9;

    std::string out = pad("Model", label_width + 2);
    for (Trait t : kAllTraits) out += pad(std::string(1, trait_code(t)), kColumnWidth);
    out += "Mean\n";
    for (const ModelReport& r : reports) {
        out += pad(r.model_label, label_width + 2);
        for (std::size_t i = 0; i < 5; ++i) {
            std::string cell = fixed_3(r.mse.values[i]);
            if (round_3(r.mse.values[i]) == minima[i]) cell += '*';
            out += pad(std::move(cell), kColumnWidth);
        }
        std::string mean_cell = fixed_3(r.mean_mse());
        if (round_3(r.mean_mse()) == minima[5]) mean_cell += '*';
        out += mean_cell;
        if (r.partial) out += "  [partial]";
        out += '\n';
    }
    return out;
}

json render_report_json(const std::vector<ModelReport>& reports,
                        const std::vector<CorrelationEntry>& correlations) {
    json models = json::array();
    for (const ModelReport& r : reports) {
        json entry;
        entry["model_label"] = r.model_label;
        entry["mse"] = trait_vector_to_json(r.mse);
        entry["mean_mse"] = r.mean_mse();
        entry["partial"] = r.partial;
        entry["speaker_ids"] = r.speaker_ids;
        models.push_back(std::move(entry));
    }
    json j;
    j["models"] = std::move(models);
    if (!correlations.empty()) {
        json entries = json::array();
        for (const CorrelationEntry& c : correlations)
            entries.push_back({{"label", c.label},
                               {"r", c.result.r},
                               {"p", c.result.p},
                               {"n", c.result.n}});
        j["correlations"] = std::move(entries);
    }
    return j;
}

}  // namespace taupipe
