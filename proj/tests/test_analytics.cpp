#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "taupipe/analytics.hpp"
#include "taupipe/errors.hpp"
#include "taupipe/util.hpp"
#include "testutil.hpp"

using namespace taupipe;

namespace {

TraitVector make_tv(double o, double c, double e, double a, double n) {
    TraitVector v;
    v[Trait::Openness] = o;
    v[Trait::Conscientiousness] = c;
    v[Trait::Extraversion] = e;
    v[Trait::Agreeableness] = a;
    v[Trait::Neuroticism] = n;
    return v;
}

EvaluationRun make_run(const std::string& id, const std::string& model,
                       const std::string& speaker,
                       const std::vector<std::pair<PromptVariant, TraitVector>>& estimates,
                       const TraitVector& truth) {
    EvaluationRun run;
    run.run_id = id;
    run.model_label = model;
    run.speaker_id = speaker;
    run.ground_truth = truth;
    for (const auto& [variant, scores] : estimates) {
        VariantScores vs;
        vs.variant = variant;
        vs.scores.scores = scores;
        run.per_variant.push_back(std::move(vs));
    }
    return run;
}

// Textbook single-pass restatement of the correlation coefficient, used as
// the oracle for pearson().
double direct_r(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) /
           std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

double binomial(int n, int k) {
    double result = 1.0;
    for (int i = 1; i <= k; ++i) result = result * (n - k + i) / i;
    return result;
}

// For integer shape parameters the regularized incomplete beta reduces to a
// binomial tail sum — an independent oracle for the continued fraction.
double beta_binomial_tail(int a, int b, double x) {
    const int n = a + b - 1;
    double sum = 0.0;
    for (int j = a; j <= n; ++j)
        sum += binomial(n, j) * std::pow(x, j) * std::pow(1.0 - x, n - j);
    return sum;
}

}  // namespace

TEST_CASE("per-speaker mse averages squared errors over variants") {
    PromptVariant v1 = all_prompt_variants()[0];
    PromptVariant v2 = all_prompt_variants()[1];
    EvaluationRun run = make_run("r1", "base", "spk_a",
                                 {{v1, make_tv(4, 3, 3, 3, 3)}, {v2, make_tv(6.5, 3, 3, 3, 3)}},
                                 make_tv(5, 3, 3, 3, 3));
    TraitVector mse = speaker_mse(run);
    CHECK(mse[Trait::Openness] == doctest::Approx((1.0 + 2.25) / 2));
    CHECK(mse[Trait::Conscientiousness] == 0.0);
}

TEST_CASE("model mse averages speakers within each variant, then variants") {
    PromptVariant v1 = all_prompt_variants()[0];
    PromptVariant v2 = all_prompt_variants()[1];
    std::vector<EvaluationRun> runs = {
        make_run("r1", "base", "spk_b",
                 {{v1, make_tv(4, 4, 4, 4, 4)}, {v2, make_tv(7, 4, 4, 4, 4)}},
                 make_tv(5, 4, 4, 4, 4)),
        make_run("r2", "base", "spk_a",
                 {{v1, make_tv(3, 4, 4, 4, 4)}, {v2, make_tv(4, 4, 4, 4, 4)}},
                 make_tv(3, 4, 4, 4, 4)),
    };
    ModelReport report = mse_per_trait("base", runs);
    // v1: (1 + 0)/2 = 0.5; v2: (4 + 1)/2 = 2.5; mean over variants: 1.5
    CHECK(report.mse[Trait::Openness] == doctest::Approx(1.5));
    CHECK(report.mse[Trait::Neuroticism] == 0.0);
    CHECK(report.model_label == "base");
    CHECK(report.partial);  // two variants administered, not eight
    CHECK(report.speaker_ids == std::vector<std::string>{"spk_a", "spk_b"});  // sorted
}

TEST_CASE("a full eight-variant report is not partial") {
    std::vector<std::pair<PromptVariant, TraitVector>> estimates;
    for (const PromptVariant& v : all_prompt_variants())
        estimates.push_back({v, make_tv(4, 4, 4, 4, 4)});
    ModelReport report =
        mse_per_trait("base", {make_run("r1", "base", "spk_a", estimates, make_tv(5, 4, 4, 4, 4))});
    CHECK_FALSE(report.partial);
    CHECK(report.mse[Trait::Openness] == doctest::Approx(1.0));
}

TEST_CASE("model aggregation rejects inconsistent run sets") {
    PromptVariant v1 = all_prompt_variants()[0];
    PromptVariant v2 = all_prompt_variants()[1];
    EvaluationRun a = make_run("r1", "base", "spk_a", {{v1, make_tv(4, 4, 4, 4, 4)}},
                               make_tv(4, 4, 4, 4, 4));

    SUBCASE("no runs") {
        CHECK_THROWS_AS(mse_per_trait("base", {}), ValidationError);
    }
    SUBCASE("mismatched variant sets") {
        EvaluationRun b = make_run("r2", "base", "spk_b", {{v2, make_tv(4, 4, 4, 4, 4)}},
                                   make_tv(4, 4, 4, 4, 4));
        CHECK_THROWS_AS(mse_per_trait("base", {a, b}), ValidationError);
    }
    SUBCASE("duplicate speaker") {
        EvaluationRun b = make_run("r2", "base", "spk_a", {{v1, make_tv(4, 4, 4, 4, 4)}},
                                   make_tv(4, 4, 4, 4, 4));
        CHECK_THROWS_AS(mse_per_trait("base", {a, b}), ValidationError);
    }
}

TEST_CASE("evaluation runs validate their scale ranges and variants") {
    PromptVariant v1 = all_prompt_variants()[0];
    EvaluationRun good = make_run("r1", "base", "spk_a", {{v1, make_tv(4, 4, 4, 4, 4)}},
                                  make_tv(4, 4, 4, 4, 4));
    CHECK_NOTHROW(good.validate());

    SUBCASE("missing id") {
        good.run_id.clear();
        CHECK_THROWS_AS(good.validate(), ValidationError);
    }
    SUBCASE("no variants") {
        good.per_variant.clear();
        CHECK_THROWS_AS(good.validate(), ValidationError);
    }
    SUBCASE("duplicate variant") {
        good.per_variant.push_back(good.per_variant[0]);
        CHECK_THROWS_AS(good.validate(), ValidationError);
    }
    SUBCASE("truth outside the scale") {
        good.ground_truth[Trait::Openness] = 0.5;
        CHECK_THROWS_AS(good.validate(), ValidationError);
    }
    SUBCASE("estimate outside the scale") {
        good.per_variant[0].scores.scores[Trait::Neuroticism] = 7.5;
        CHECK_THROWS_AS(good.validate(), ValidationError);
    }
}

TEST_CASE("evaluation runs round-trip through json") {
    PromptVariant v1 = all_prompt_variants()[2];
    PromptVariant v2 = all_prompt_variants()[6];
    EvaluationRun run = make_run("run-7", "with-tau", "spk_c",
                                 {{v1, make_tv(3.5, 4, 4.25, 4, 4)},
                                  {v2, make_tv(4, 2, 4, 6.75, 4)}},
                                 make_tv(4, 3, 5, 6, 2));
    run.per_variant[1].scores.missing_counts[2] = 3;

    EvaluationRun back = EvaluationRun::from_json(run.to_json());
    CHECK(back.run_id == run.run_id);
    CHECK(back.model_label == run.model_label);
    CHECK(back.speaker_id == run.speaker_id);
    REQUIRE(back.per_variant.size() == 2);
    CHECK(back.per_variant[0].variant == v1);
    CHECK(back.per_variant[1].scores.scores[Trait::Agreeableness] == 6.75);
    CHECK(back.per_variant[1].scores.missing_counts[2] == 3);
    CHECK(back.ground_truth[Trait::Neuroticism] == 2.0);
}

TEST_CASE("gains subtract the base mse and flip sign when swapped") {
    ModelReport base;
    base.model_label = "base";
    base.mse = make_tv(1.557, 1.262, 1.771, 0.658, 1.763);
    base.speaker_ids = {"s1", "s2"};
    ModelReport tau;
    tau.model_label = "with-tau";
    tau.mse = make_tv(1.088, 1.107, 1.583, 0.630, 1.571);
    tau.speaker_ids = {"s1", "s2"};

    TraitVector g = gains(tau, base);
    CHECK(g[Trait::Neuroticism] == doctest::Approx(-0.192).epsilon(1e-9));
    CHECK(g[Trait::Agreeableness] == doctest::Approx(-0.028).epsilon(1e-9));
    CHECK(g[Trait::Openness] == doctest::Approx(-0.469).epsilon(1e-9));

    TraitVector reversed = gains(base, tau);
    for (Trait t : kAllTraits) CHECK(reversed[t] == doctest::Approx(-g[t]));

    SUBCASE("speaker sets must match") {
        tau.speaker_ids = {"s1", "s3"};
        CHECK_THROWS_AS(gains(tau, base), ValidationError);
    }
    SUBCASE("a worsening shows up as a positive gain") {
        ModelReport worse = base;
        worse.model_label = "worse";
        worse.mse[Trait::Conscientiousness] = base.mse[Trait::Conscientiousness] + 0.301;
        CHECK(gains(worse, base)[Trait::Conscientiousness] ==
              doctest::Approx(0.301).epsilon(1e-9));
    }
}

TEST_CASE("reference mse rows are self-consistent to rounding") {
    struct Row {
        const char* label;
        double o, c, e, a, n, mean;
    };
    // Trait columns and the printed row mean of twelve reference runs; the
    // mean column must equal the average of the five traits to within the
    // 3-decimal rounding the runs were reported at.
    const Row rows[] = {
        {"m1-base", 1.557, 1.262, 1.771, 0.658, 1.763, 1.402},
        {"m1-ft", 0.975, 1.048, 1.505, 0.670, 1.662, 1.172},
        {"m1-tau", 1.088, 1.107, 1.583, 0.630, 1.571, 1.196},
        {"m2-base", 0.729, 1.070, 1.567, 0.861, 1.971, 1.240},
        {"m2-ft", 0.919, 1.061, 1.635, 1.309, 1.937, 1.372},
        {"m2-tau", 0.882, 1.178, 1.705, 1.267, 1.855, 1.377},
        {"m3-base", 0.996, 1.227, 1.471, 0.525, 1.823, 1.208},
        {"m3-ft", 1.045, 1.351, 1.453, 0.740, 2.377, 1.393},
        {"m3-tau", 1.124, 1.336, 1.562, 0.643, 1.936, 1.320},
        {"m4-base", 1.091, 0.925, 1.988, 1.023, 1.977, 1.401},
        {"m4-ft", 0.964, 0.935, 1.810, 0.891, 1.800, 1.280},
        {"m4-tau", 0.874, 0.989, 1.702, 0.749, 1.745, 1.212},
    };
    for (const Row& row : rows) {
        CAPTURE(row.label);
        ModelReport report;
        report.model_label = row.label;
        report.mse = make_tv(row.o, row.c, row.e, row.a, row.n);
        CHECK(std::fabs(report.mean_mse() - row.mean) < 5e-4);
    }
}

TEST_CASE("pearson matches the direct formula on random vectors") {
    std::mt19937 rng(20260821);
    std::uniform_real_distribution<double> value(-5.0, 5.0);
    std::uniform_int_distribution<int> length(3, 20);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = length(rng);
        std::vector<double> x(n), y(n);
        for (int i = 0; i < n; ++i) {
            x[i] = value(rng);
            y[i] = value(rng);
        }
        PearsonResult result = pearson(x, y);
        CAPTURE(trial);
        CHECK(result.n == n);
        CHECK(result.r == doctest::Approx(direct_r(x, y)).epsilon(1e-12));
        // the p-value is the two-tailed t probability of exactly this r
        const double t = result.r * std::sqrt((n - 2) / (1.0 - result.r * result.r));
        CHECK(result.p == doctest::Approx(student_t_two_tailed_p(t, n - 2)).epsilon(1e-12));
        CHECK(result.p > 0.0);
        CHECK(result.p <= 1.0);
    }
}

TEST_CASE("correlation significance lands in the reference band") {
    // r = -0.614 over 20 speakers was reported as p = 0.004
    double t = -0.614 * std::sqrt(18.0 / (1.0 - 0.614 * 0.614));
    double p = student_t_two_tailed_p(t, 18);
    CHECK(p >= 0.0035);
    CHECK(p <= 0.0045);

    // r = -0.693 over 20 speakers was reported as p = 0.001
    t = -0.693 * std::sqrt(18.0 / (1.0 - 0.693 * 0.693));
    p = student_t_two_tailed_p(t, 18);
    CHECK(p >= 0.0005);
    CHECK(p <= 0.0015);
}

TEST_CASE("degenerate correlations are pinned") {
    std::vector<double> x = {1, 2, 3, 4};

    SUBCASE("perfect positive") {
        PearsonResult r = pearson(x, {2, 4, 6, 8});
        CHECK(r.r == 1.0);
        CHECK(r.p == std::numeric_limits<double>::denorm_min());
    }
    SUBCASE("perfect negative") {
        PearsonResult r = pearson(x, {8, 6, 4, 2});
        CHECK(r.r == -1.0);
        CHECK(r.p == std::numeric_limits<double>::denorm_min());
    }
    SUBCASE("sign flips under negation") {
        std::vector<double> y = {2, 1, 4, 3};
        std::vector<double> neg = {-2, -1, -4, -3};
        CHECK(pearson(x, y).r == doctest::Approx(-pearson(x, neg).r));
    }
    SUBCASE("length mismatch") {
        CHECK_THROWS_AS(pearson(x, {1, 2}), ValidationError);
    }
    SUBCASE("too few points") {
        CHECK_THROWS_AS(pearson({1, 2}, {3, 4}), ValidationError);
    }
    SUBCASE("zero variance") {
        CHECK_THROWS_AS(pearson({5, 5, 5, 5}, x), ValidationError);
    }
}

TEST_CASE("the incomplete beta matches its binomial closed form") {
    for (int a = 1; a <= 5; ++a) {
        for (int b = 1; b <= 5; ++b) {
            for (double x = 0.05; x < 1.0; x += 0.09) {
                CAPTURE(a);
                CAPTURE(b);
                CAPTURE(x);
                CHECK(regularized_incomplete_beta(a, b, x) ==
                      doctest::Approx(beta_binomial_tail(a, b, x)).epsilon(1e-8));
            }
        }
    }
}

TEST_CASE("the incomplete beta respects its symmetry and bounds") {
    CHECK(regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
    CHECK(regularized_incomplete_beta(2.0, 2.0, 0.5) == doctest::Approx(0.5).epsilon(1e-10));
    for (double x : {0.1, 0.3, 0.7, 0.9}) {
        CHECK(regularized_incomplete_beta(9.0, 0.5, x) +
                  regularized_incomplete_beta(0.5, 9.0, 1.0 - x) ==
              doctest::Approx(1.0).epsilon(1e-10));
    }
    CHECK_THROWS_AS(regularized_incomplete_beta(0.0, 1.0, 0.5), ValidationError);
    CHECK_THROWS_AS(regularized_incomplete_beta(1.0, -2.0, 0.5), ValidationError);
}

TEST_CASE("the t distribution behaves at its anchors") {
    CHECK(student_t_two_tailed_p(0.0, 18) == doctest::Approx(1.0));
    // one degree of freedom is a Cauchy distribution with a closed form
    CHECK(student_t_two_tailed_p(1.0, 1) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(student_t_two_tailed_p(std::sqrt(3.0), 1) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-10));

    CHECK(student_t_two_tailed_p(2.5, 18) == doctest::Approx(student_t_two_tailed_p(-2.5, 18)));
    CHECK(student_t_two_tailed_p(3.0, 18) < student_t_two_tailed_p(2.0, 18));
    CHECK(student_t_two_tailed_p(std::numeric_limits<double>::infinity(), 18) ==
          std::numeric_limits<double>::denorm_min());
    CHECK_THROWS_AS(student_t_two_tailed_p(1.0, 0), ValidationError);
}

TEST_CASE("the text table marks per-column minima and partial rows") {
    ModelReport base;
    base.model_label = "base";
    base.mse = make_tv(1.5, 1.0, 2.0, 1.0, 2.5);
    ModelReport tau;
    tau.model_label = "with-tau";
    tau.mse = make_tv(1.0, 1.2, 1.8, 0.8, 2.6);
    tau.partial = true;

    std::string table = render_mse_table({base, tau});
    std::vector<std::string> lines = split_lines(table);
    REQUIRE(lines.size() == 3);

    CHECK(lines[0].rfind("Model", 0) == 0);
    for (const char* column : {"O", "C", "E", "A", "N", "Mean"})
        CHECK(lines[0].find(column) != std::string::npos);

    CHECK(lines[1].rfind("base", 0) == 0);
    CHECK(lines[1].find("1.500 ") != std::string::npos);   // not the O minimum
    CHECK(lines[1].find("1.000*") != std::string::npos);   // C minimum
    CHECK(lines[1].find("2.500*") != std::string::npos);   // N minimum
    CHECK(lines[1].find("[partial]") == std::string::npos);

    CHECK(lines[2].rfind("with-tau", 0) == 0);
    CHECK(lines[2].find("1.000*") != std::string::npos);   // O minimum
    CHECK(lines[2].find("0.800*") != std::string::npos);   // A minimum
    CHECK(lines[2].find("1.480*") != std::string::npos);   // mean minimum (1.48 < 1.6)
    CHECK(lines[2].find("  [partial]") != std::string::npos);

    SUBCASE("ties mark both rows") {
        tau.mse[Trait::Conscientiousness] = 1.0;
        std::string tied = render_mse_table({base, tau});
        std::vector<std::string> tied_lines = split_lines(tied);
        std::size_t first = tied_lines[1].find("1.000*");
        CHECK(first != std::string::npos);
        CHECK(tied_lines[2].find("1.000*") != std::string::npos);
        CHECK(tied_lines[2].find("1.000*", tied_lines[2].find("1.000*") + 1) !=
              std::string::npos);  // O and C both minimal in the tau row
    }
    SUBCASE("empty input is refused") {
        CHECK_THROWS_AS(render_mse_table({}), ValidationError);
    }
}

TEST_CASE("the json report carries models and optional correlations") {
    ModelReport base;
    base.model_label = "base";
    base.mse = make_tv(1, 1, 1, 1, 1);
    base.speaker_ids = {"s1"};

    nlohmann::json bare = render_report_json({base});
    REQUIRE(bare.at("models").size() == 1);
    CHECK(bare.at("models")[0].at("model_label") == "base");
    CHECK(bare.at("models")[0].at("mean_mse") == doctest::Approx(1.0));
    CHECK_FALSE(bare.contains("correlations"));

    CorrelationEntry entry{"base-mse-vs-gain:O", {-0.614, 0.004, 20}};
    nlohmann::json with = render_report_json({base}, {entry});
    REQUIRE(with.at("correlations").size() == 1);
    CHECK(with.at("correlations")[0].at("label") == "base-mse-vs-gain:O");
    CHECK(with.at("correlations")[0].at("n") == 20);
}
