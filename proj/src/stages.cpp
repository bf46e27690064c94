#include "taupipe/stages.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <set>

#include <json.hpp>

#include "taupipe/analytics.hpp"
#include "taupipe/augment.hpp"
#include "taupipe/chat.hpp"
#include "taupipe/corpus.hpp"
#include "taupipe/errors.hpp"
#include "taupipe/log.hpp"
#include "taupipe/mocks.hpp"
#include "taupipe/psych.hpp"
#include "taupipe/similarity.hpp"
#include "taupipe/trainset.hpp"
#include "taupipe/util.hpp"

namespace taupipe {

using nlohmann::json;

namespace {

// --- artifact layout -----------------------------------------------------------

namespace paths {

using std::filesystem::path;

path dialogs(const StageContext& ctx) { return ctx.out_dir / "corpus" / "dialogs.jsonl"; }
path profiles(const StageContext& ctx) { return ctx.out_dir / "corpus" / "profiles.jsonl"; }
path speakers(const StageContext& ctx) { return ctx.out_dir / "corpus" / "speakers.json"; }
path augmented(const StageContext& ctx, const std::string& s) {
    return ctx.out_dir / "augment" / s / "augmented.jsonl";
}
path augment_report(const StageContext& ctx, const std::string& s) {
    return ctx.out_dir / "augment" / s / "report.json";
}
path train_original(const StageContext& ctx, const std::string& s) {
    return ctx.out_dir / "trainset" / s / "original.jsonl";
}
path train_augmented(const StageContext& ctx, const std::string& s) {
    return ctx.out_dir / "trainset" / s / "augmented.jsonl";
}
path transcript(const StageContext& ctx, const std::string& s, const std::string& label) {
    return ctx.out_dir / "scores" / s / (label + ".transcript.json");
}
path scores(const StageContext& ctx, const std::string& s, const std::string& label) {
    return ctx.out_dir / "scores" / s / (label + ".scores.json");
}
path report_json(const StageContext& ctx) { return ctx.out_dir / "analysis" / "report.json"; }
path report_txt(const StageContext& ctx) { return ctx.out_dir / "analysis" / "report.txt"; }
path similarity_speaker(const StageContext& ctx, const std::string& s) {
    return ctx.out_dir / "similarity" / (s + ".json");
}
path similarity_corpus(const StageContext& ctx) {
    return ctx.out_dir / "similarity" / "corpus.json";
}
path stamp(const StageContext& ctx, const std::string& stage) {
    return ctx.out_dir / ".stamps" / (stage + ".json");
}

}  // namespace paths

const std::vector<std::string>& model_labels() {
    static const std::vector<std::string> labels = {"base", "persona"};
    return labels;
}

json make_provenance(const StageContext& ctx, const std::string& stage) {
    json j;
    j["stage"] = stage;
    j["config_hash"] = ctx.config.hash;
    j["seed"] = ctx.seed;
    j["mock"] = ctx.mock;
    return j;
}

void write_json_artifact(const std::filesystem::path& path, json payload, json provenance) {
    payload["provenance"] = std::move(provenance);
    write_file(path, payload.dump(2) + "\n");
}

json read_json_artifact(const std::filesystem::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw FileParseError(path.string() + ": malformed artifact: " + e.what());
    }
}

void require_artifact(const std::filesystem::path& path, const std::string& producing_stage) {
    if (!std::filesystem::exists(path))
        throw DependencyError("missing artifact " + path.string() + "; run the '" +
                              producing_stage + "' stage first");
}

// --- selected speakers and splits ------------------------------------------------

struct SpeakerPlan {
    std::vector<std::string> selected;                 // sorted
    std::map<std::string, CorpusSplit> splits;
};

SpeakerPlan load_speaker_plan(const StageContext& ctx) {
    require_artifact(paths::speakers(ctx), "split");
    const json j = read_json_artifact(paths::speakers(ctx));
    SpeakerPlan plan;
    plan.selected = j.at("selected").get<std::vector<std::string>>();
    for (const std::string& speaker : plan.selected) {
        const json& split = j.at("splits").at(speaker);
        CorpusSplit parts;
        parts.train = split.at("train").get<std::vector<std::string>>();
        parts.validation = split.at("validation").get<std::vector<std::string>>();
        parts.test = split.at("test").get<std::vector<std::string>>();
        plan.splits[speaker] = std::move(parts);
    }
    return plan;
}

Corpus load_normalized_corpus(const StageContext& ctx) {
    require_artifact(paths::dialogs(ctx), "ingest");
    require_artifact(paths::profiles(ctx), "ingest");
    return load_corpus(paths::dialogs(ctx), paths::profiles(ctx));
}

std::vector<Dialog> dialogs_for_ids(const Corpus& corpus, const std::vector<std::string>& ids) {
    std::vector<Dialog> out;
    for (const std::string& id : ids) {
        const Dialog* dialog = corpus.find_dialog(id);
        if (dialog == nullptr)
            throw ValidationError("speaker plan references unknown dialog " + id);
        out.push_back(*dialog);
    }
    return out;
}

const SpeakerProfile& require_profile(const Corpus& corpus, const std::string& speaker) {
    auto it = corpus.profiles.find(speaker);
    if (it == corpus.profiles.end())
        throw ValidationError("no profile for speaker " + speaker);
    return it->second;
}

// --- backend construction ----------------------------------------------------------

HttpBackendConfig http_config_from(const RunConfig& config, const std::string& prefix) {
    HttpBackendConfig http;
    http.base_url = config.require(prefix + ".base_url");
    http.model_id = config.get(prefix + ".model_id", "");
    http.api_key_env = config.get(prefix + ".api_key_env", "");
    http.timeout_ms = config.get_int(prefix + ".timeout_ms", 30000);
    http.max_retries = config.get_int(prefix + ".max_retries", 3);
    http.backoff_ms = config.get_int(prefix + ".backoff_ms", 200);
    return http;
}

std::shared_ptr<ChatBackend> make_http_backend(const StageContext& ctx, const std::string& prefix,
                                               const std::string& model_id_override = "") {
    HttpBackendConfig http = http_config_from(ctx.config, prefix);
    if (!model_id_override.empty()) http.model_id = model_id_override;
    std::shared_ptr<ChatBackend> backend = std::make_shared<HttpChatBackend>(http);
    if (ctx.config.has(prefix + ".cache_dir"))
        backend = std::make_shared<ReplayCacheBackend>(
            backend, ctx.config.resolve(ctx.config.require(prefix + ".cache_dir")));
    return backend;
}

std::string persona_model_id(const StageContext& ctx, const std::string& speaker) {
    const std::string pattern = ctx.config.get("backend.eval_persona.model_id", "");
    return fill_placeholders(pattern, {{"speaker_id", speaker}});
}

// --- templates ----------------------------------------------------------------------

struct AugmentAssets {
    AugmentationPromptTemplate tmpl;
    FewShotExamples examples;
    std::string system_hash;
    std::string user_hash;
};

AugmentAssets load_augment_assets(const StageContext& ctx) {
    const std::string mode_name = ctx.config.get("augment.mode", "bigfive");
    TemplateMode mode;
    std::string key;
    if (mode_name == "plain") {
        mode = TemplateMode::Plain;
        key = "templates.plain";
    } else if (mode_name == "bigfive") {
        mode = TemplateMode::WithBigFive;
        key = "templates.bigfive";
    } else {
        throw ConfigError("augment.mode must be plain or bigfive, got " + mode_name);
    }
    AugmentAssets assets;
    const auto system_path = ctx.config.path(key + ".system");
    const auto user_path = ctx.config.path(key + ".user");
    assets.tmpl = AugmentationPromptTemplate::load(system_path, user_path, mode);
    assets.examples = FewShotExamples::load(ctx.config.path("templates.fewshot.history1"),
                                            ctx.config.path("templates.fewshot.output1"),
                                            ctx.config.path("templates.fewshot.history2"),
                                            ctx.config.path("templates.fewshot.output2"));
    assets.system_hash = content_hash(assets.tmpl.system_template);
    assets.user_hash = content_hash(assets.tmpl.user_template);
    return assets;
}

// --- stages ---------------------------------------------------------------------------

void run_ingest(StageContext& ctx) {
    const Corpus corpus =
        load_corpus(ctx.config.path("corpus.dialogs"), ctx.config.path("corpus.profiles"));
    json provenance = make_provenance(ctx, "ingest");
    provenance["record_type"] = "provenance";
    save_corpus(corpus, paths::dialogs(ctx), paths::profiles(ctx), provenance);
    log::info("ingest: ", corpus.dialogs.size(), " dialogs, ", corpus.profiles.size(),
              " profiles");
}

void run_split(StageContext& ctx) {
    const Corpus corpus = load_normalized_corpus(ctx);
    const auto min_dialogs =
        static_cast<std::size_t>(ctx.config.get_int("select.min_dialogs", 1));
    const int n_speakers = ctx.config.get_int("select.n_speakers", 0);

    std::vector<std::string> selected;
    if (n_speakers > 0) {
        selected = select_speakers(corpus, min_dialogs, static_cast<std::size_t>(n_speakers),
                                   ctx.seed);
    } else {
        for (const auto& [speaker, ids] : corpus.dialogs_by_speaker())
            if (ids.size() >= min_dialogs) selected.push_back(speaker);
        if (selected.empty()) throw ValidationError("no speaker meets select.min_dialogs");
    }

    SplitRatios ratios;
    ratios.train = ctx.config.get_int("split.train", 8);
    ratios.validation = ctx.config.get_int("split.validation", 1);
    ratios.test = ctx.config.get_int("split.test", 1);

    json splits = json::object();
    for (const std::string& speaker : selected) {
        const CorpusSplit parts = split_per_speaker(corpus, speaker, ratios, ctx.seed);
        splits[speaker] = {{"train", parts.train},
                           {"validation", parts.validation},
                           {"test", parts.test}};
        log::info("split: ", speaker, " train=", parts.train.size(),
                  " validation=", parts.validation.size(), " test=", parts.test.size());
    }
    write_json_artifact(paths::speakers(ctx), {{"selected", selected}, {"splits", splits}},
                        make_provenance(ctx, "split"));
}

void run_augment(StageContext& ctx) {
    const Corpus corpus = load_normalized_corpus(ctx);
    const SpeakerPlan plan = load_speaker_plan(ctx);
    const AugmentAssets assets = load_augment_assets(ctx);

    AugmentationPolicy policy;
    policy.max_attempts = ctx.config.get_int("policy.max_attempts", 15);
    const int workers = ctx.config.get_int("policy.augment_workers", 1);

    std::shared_ptr<ChatBackend> backend;
    if (ctx.mock) {
        MockAugmentBackend::Options options;
        options.paraphrase = ctx.config.get_bool("mock.paraphrase", true);
        options.fail_marker = ctx.config.get("mock.fail_marker", "");
        backend = std::make_shared<MockAugmentBackend>(options);
    } else {
        backend = make_http_backend(ctx, "backend.augment");
    }

    int total_discarded = 0;
    for (const std::string& speaker : plan.selected) {
        const std::vector<Dialog> train = dialogs_for_ids(corpus, plan.splits.at(speaker).train);
        const SpeakerProfile* profile = nullptr;
        if (assets.tmpl.mode == TemplateMode::WithBigFive)
            profile = &require_profile(corpus, speaker);

        const AugmentCorpusResult result = augment_corpus(*backend, assets.tmpl, train, speaker,
                                                          assets.examples, policy, profile,
                                                          workers);
        json provenance = make_provenance(ctx, "augment");
        provenance["backend"] = backend->describe();
        provenance["template_hashes"] = {{"system", assets.system_hash},
                                         {"user", assets.user_hash}};
        provenance["target_speaker_id"] = speaker;
        json jsonl_provenance = provenance;
        jsonl_provenance["record_type"] = "provenance";
        save_augmented(result.augmented, paths::augmented(ctx, speaker), jsonl_provenance);
        write_json_artifact(paths::augment_report(ctx, speaker),
                            {{"report", result.report.to_json()}}, provenance);

        const int discarded = static_cast<int>(result.report.discarded_dialog_ids().size());
        total_discarded += discarded;
        log::info("augment: ", speaker, " augmented=", result.report.augmented_count(),
                  " discarded=", discarded);
    }
    if (total_discarded > 0)
        log::warn("augment: ", total_discarded, " dialogs discarded after retry exhaustion");
}

void run_build_trainset(StageContext& ctx) {
    const Corpus corpus = load_normalized_corpus(ctx);
    const SpeakerPlan plan = load_speaker_plan(ctx);
    const std::string profile_name = ctx.config.get("trainset.profile", "generic");
    const FormatProfile profile = profile_name == "service-compat" ? FormatProfile::ServiceCompat
                                                                   : FormatProfile::Generic;

    for (const std::string& speaker : plan.selected) {
        require_artifact(paths::augmented(ctx, speaker), "augment");
        require_artifact(paths::augment_report(ctx, speaker), "augment");

        JsonlFile meta;
        const std::vector<AugmentedDialog> augmented =
            load_augmented(paths::augmented(ctx, speaker), &meta);
        const AugmentReport report = AugmentReport::from_json(
            read_json_artifact(paths::augment_report(ctx, speaker)).at("report"));
        const std::vector<std::string> discards = report.discarded_dialog_ids();
        const std::set<std::string> discard_set(discards.begin(), discards.end());

        // Dual discard: a dialog dropped by the augmentor leaves BOTH files.
        std::vector<std::string> train_ids = plan.splits.at(speaker).train;
        std::sort(train_ids.begin(), train_ids.end());
        std::vector<TrainingRecord> original_records;
        for (const std::string& id : train_ids) {
            if (discard_set.count(id) != 0) continue;
            original_records.push_back(
                build_record(*corpus.find_dialog(id), speaker, RecordMode::OriginalOnly));
        }
        std::vector<TrainingRecord> augmented_records;
        for (const AugmentedDialog& ad : augmented)
            augmented_records.push_back(
                build_record(ad.dialog, ad.target_speaker_id, RecordMode::TAUAugmented));

        ExportManifest manifest;
        manifest.discarded_dialog_ids = discards;
        if (meta.provenance && meta.provenance->contains("template_hashes")) {
            manifest.system_template_hash =
                meta.provenance->at("template_hashes").value("system", "");
            manifest.user_template_hash =
                meta.provenance->at("template_hashes").value("user", "");
        }
        json provenance = make_provenance(ctx, "build-trainset");
        provenance["target_speaker_id"] = speaker;

        manifest.mode = RecordMode::OriginalOnly;
        export_training_file(original_records, paths::train_original(ctx, speaker), profile,
                             manifest, &provenance);
        manifest.mode = RecordMode::TAUAugmented;
        export_training_file(augmented_records, paths::train_augmented(ctx, speaker), profile,
                             manifest, &provenance);
        log::info("trainset: ", speaker, " original=", original_records.size(),
                  " augmented=", augmented_records.size(), " excluded=", discards.size());
    }
}

std::shared_ptr<ChatBackend> make_eval_backend(const StageContext& ctx, const Corpus& corpus,
                                               const Questionnaire& questionnaire,
                                               const std::string& speaker,
                                               const std::string& label) {
    if (ctx.mock) {
        if (label == "base")
            return std::make_shared<FixedAnswerBackend>(ctx.config.get_int("mock.base_answer", 4),
                                                        questionnaire);
        return std::make_shared<MockPersonaBackend>(require_profile(corpus, speaker).traits,
                                                    questionnaire);
    }
    if (label == "base") return make_http_backend(ctx, "backend.eval_base");
    return make_http_backend(ctx, "backend.eval_persona", persona_model_id(ctx, speaker));
}

void run_administer(StageContext& ctx) {
    const Corpus corpus = load_normalized_corpus(ctx);
    const SpeakerPlan plan = load_speaker_plan(ctx);
    const Questionnaire questionnaire = Questionnaire::load(ctx.config.path("questionnaire.path"));

    AdministerPolicy policy;
    policy.reask_budget = ctx.config.get_int("psych.reask_budget", 3);
    policy.workers = ctx.config.get_int("psych.workers", 1);
    const std::string persona_context = ctx.config.get("administer.persona_context", "");
    const std::vector<PromptVariant> variants(all_prompt_variants().begin(),
                                              all_prompt_variants().end());

    for (const std::string& speaker : plan.selected) {
        for (const std::string& label : model_labels()) {
            const auto backend = make_eval_backend(ctx, corpus, questionnaire, speaker, label);
            const AdministerResult result =
                administer(*backend, questionnaire, variants, persona_context, policy);

            json provenance = make_provenance(ctx, "administer");
            provenance["backend"] = backend->describe();
            provenance["speaker_id"] = speaker;
            provenance["model_label"] = label;
            write_json_artifact(paths::transcript(ctx, speaker, label),
                                result.transcript_to_json(), provenance);
            if (result.partial)
                throw BackendError(BackendError::Kind::RetryExhausted,
                                   "administration aborted for " + speaker + "/" + label + ": " +
                                       result.abort_error + " (partial transcript saved)");
            log::info("administer: ", speaker, "/", label, " items=", result.transcript.size());
        }
    }
}

void run_score(StageContext& ctx) {
    const Corpus corpus = load_normalized_corpus(ctx);
    const SpeakerPlan plan = load_speaker_plan(ctx);
    const Questionnaire questionnaire = Questionnaire::load(ctx.config.path("questionnaire.path"));

    for (const std::string& speaker : plan.selected) {
        for (const std::string& label : model_labels()) {
            require_artifact(paths::transcript(ctx, speaker, label), "administer");
            const json transcript = read_json_artifact(paths::transcript(ctx, speaker, label));
            if (transcript.value("partial", false))
                throw DependencyError("transcript for " + speaker + "/" + label +
                                      " is partial; re-run administer");

            std::map<std::string, std::vector<ItemOutcome>> by_variant;
            std::vector<std::string> variant_order;
            for (const json& entry : transcript.at("entries")) {
                ItemOutcome outcome = ItemOutcome::from_json(entry);
                const std::string name = outcome.variant.name();
                if (by_variant.find(name) == by_variant.end()) variant_order.push_back(name);
                by_variant[name].push_back(std::move(outcome));
            }

            EvaluationRun run;
            run.run_id = speaker + ":" + label;
            run.model_label = label;
            run.speaker_id = speaker;
            run.ground_truth = require_profile(corpus, speaker).traits;
            for (const std::string& name : variant_order)
                run.per_variant.push_back({PromptVariant::from_name(name),
                                           score_traits(by_variant.at(name), questionnaire)});
            run.validate();

            json provenance = make_provenance(ctx, "score");
            provenance["speaker_id"] = speaker;
            provenance["model_label"] = label;
            write_json_artifact(paths::scores(ctx, speaker, label), {{"run", run.to_json()}},
                                provenance);
        }
        log::info("score: ", speaker, " done");
    }
}

void run_analyze(StageContext& ctx) {
    const SpeakerPlan plan = load_speaker_plan(ctx);

    std::map<std::string, std::vector<EvaluationRun>> runs_by_label;
    for (const std::string& speaker : plan.selected) {
        for (const std::string& label : model_labels()) {
            require_artifact(paths::scores(ctx, speaker, label), "score");
            runs_by_label[label].push_back(EvaluationRun::from_json(
                read_json_artifact(paths::scores(ctx, speaker, label)).at("run")));
        }
    }

    std::vector<ModelReport> reports;
    for (const std::string& label : model_labels())
        reports.push_back(mse_per_trait(label, runs_by_label.at(label)));
    const ModelReport& base = reports[0];
    const ModelReport& persona = reports[1];
    const TraitVector gain = gains(persona, base);

    // Per-trait correlation between base-model MSE and gain across speakers,
    // when the speaker count and variance allow it.
    std::vector<CorrelationEntry> correlations;
    {
        auto sorted_runs = [&](const std::string& label) {
            std::vector<EvaluationRun> runs = runs_by_label.at(label);
            std::sort(runs.begin(), runs.end(),
                      [](const EvaluationRun& a, const EvaluationRun& b) {
                          return a.speaker_id < b.speaker_id;
                      });
            return runs;
        };
        const std::vector<EvaluationRun> base_runs = sorted_runs("base");
        const std::vector<EvaluationRun> persona_runs = sorted_runs("persona");
        for (Trait t : kAllTraits) {
            std::vector<double> x, y;
            for (std::size_t i = 0; i < base_runs.size(); ++i) {
                const double b = speaker_mse(base_runs[i])[t];
                x.push_back(b);
                y.push_back(speaker_mse(persona_runs[i])[t] - b);
            }
            try {
                correlations.push_back(
                    {std::string("base-mse-vs-gain:") + trait_code(t), pearson(x, y)});
            } catch (const ValidationError& e) {
                log::warn("analyze: skipping correlation for trait ", trait_code(t), ": ",
                          e.what());
            }
        }
    }

    json report = render_report_json(reports, correlations);
    json gain_json;
    for (Trait t : kAllTraits) gain_json[std::string(1, trait_code(t))] = gain[t];
    gain_json["Mean"] = gain.mean();
    report["gains"] = std::move(gain_json);
    write_json_artifact(paths::report_json(ctx), std::move(report),
                        make_provenance(ctx, "analyze"));

    ModelReport gain_row;
    gain_row.model_label = "persona-base";
    gain_row.mse = gain;
    gain_row.speaker_ids = base.speaker_ids;
    std::string text = "# config=" + ctx.config.hash + " seed=" + std::to_string(ctx.seed) + "\n";
    text += "\nTrait recovery MSE (lower is better)\n\n";
    text += render_mse_table(reports);
    text += "\nGains (persona minus base; negative improves)\n\n";
    text += render_mse_table({gain_row});
    if (!correlations.empty()) {
        text += "\nCorrelation of base MSE vs gain per speaker\n\n";
        for (const CorrelationEntry& c : correlations)
            text += c.label + ": r=" + format_number(c.result.r) + " p=" +
                    format_number(c.result.p) + " n=" + std::to_string(c.result.n) + "\n";
    }
    write_file(paths::report_txt(ctx), text);
    log::info("analyze: base mean=", format_number(base.mean_mse()),
              " persona mean=", format_number(persona.mean_mse()));
}

void run_similarity(StageContext& ctx) {
    const Corpus corpus = load_normalized_corpus(ctx);
    const SpeakerPlan plan = load_speaker_plan(ctx);

    SimilarityOptions options;
    const std::string tokenizer = ctx.config.get("similarity.tokenizer", "character");
    if (tokenizer == "character") options.tokenizer.mode = TokenizerMode::Character;
    else if (tokenizer == "whitespace") options.tokenizer.mode = TokenizerMode::Whitespace;
    else throw ConfigError("similarity.tokenizer must be character or whitespace");
    const std::string normalization = ctx.config.get("similarity.normalization", "nfkc");
    if (normalization == "nfkc") options.tokenizer.normalization = TextNormalization::UnicodeNFKC;
    else if (normalization == "none") options.tokenizer.normalization = TextNormalization::None;
    else throw ConfigError("similarity.normalization must be nfkc or none");

    std::unique_ptr<EmbeddingProvider> embeddings;
    const std::string embed_kind = ctx.config.get("similarity.embeddings", "none");
    if (embed_kind == "hash") {
        embeddings = std::make_unique<HashEmbeddingProvider>();
    } else if (embed_kind == "http") {
        embeddings = std::make_unique<HttpEmbeddingProvider>(
            ctx.config.require("embeddings.base_url"),
            ctx.config.get("embeddings.model_id", ""),
            ctx.config.get("embeddings.api_key_env", ""));
    } else if (embed_kind != "none") {
        throw ConfigError("similarity.embeddings must be none, hash, or http");
    }

    std::vector<SimilarityBreakdown> all_dialogs;
    for (const std::string& speaker : plan.selected) {
        const std::vector<Dialog> validation =
            dialogs_for_ids(corpus, plan.splits.at(speaker).validation);

        std::shared_ptr<ChatBackend> backend;
        if (ctx.mock) {
            auto echo = std::make_shared<ReferenceEchoBackend>();
            for (const Dialog& dialog : validation)
                if (!similarity_turns(dialog, speaker, options.context_mode).empty())
                    echo->add_dialog(dialog, speaker, options.context_mode);
            backend = echo;
        } else {
            backend = make_http_backend(ctx, "backend.eval_persona",
                                        persona_model_id(ctx, speaker));
        }

        json per_dialog = json::object();
        std::vector<SimilarityBreakdown> speaker_breakdowns;
        for (const Dialog& dialog : validation) {
            if (similarity_turns(dialog, speaker, options.context_mode).empty()) {
                log::warn("similarity: dialog ", dialog.dialog_id, " has no scorable turn for ",
                          speaker);
                continue;
            }
            SimilarityBreakdown breakdown =
                dialog_similarity(*backend, dialog, speaker, options, embeddings.get());
            per_dialog[dialog.dialog_id] = breakdown.to_json();
            speaker_breakdowns.push_back(std::move(breakdown));
        }
        if (speaker_breakdowns.empty())
            throw ValidationError("no scorable validation dialog for speaker " + speaker);

        const SimilarityBreakdown speaker_corpus = corpus_similarity(speaker_breakdowns);
        json provenance = make_provenance(ctx, "similarity");
        provenance["backend"] = backend->describe();
        provenance["speaker_id"] = speaker;
        write_json_artifact(paths::similarity_speaker(ctx, speaker),
                            {{"per_dialog", std::move(per_dialog)},
                             {"corpus", speaker_corpus.to_json()}},
                            provenance);
        log::info("similarity: ", speaker, " aggregate=", format_number(speaker_corpus.aggregate));
        for (SimilarityBreakdown& b : speaker_breakdowns) all_dialogs.push_back(std::move(b));
    }
    write_json_artifact(paths::similarity_corpus(ctx),
                        {{"corpus", corpus_similarity(all_dialogs).to_json()}},
                        make_provenance(ctx, "similarity"));
}

// --- stamps and dispatch ---------------------------------------------------------------

json fingerprint_inputs(const std::vector<std::filesystem::path>& inputs) {
    json j = json::object();
    for (const std::filesystem::path& p : inputs)
        j[p.string()] = std::filesystem::exists(p) ? file_hash(p) : "missing";
    return j;
}

std::vector<std::filesystem::path> stage_inputs(const StageContext& ctx,
                                                const std::string& stage) {
    std::vector<std::filesystem::path> inputs;
    auto add_config_path = [&](const std::string& key) {
        if (ctx.config.has(key)) inputs.push_back(ctx.config.resolve(ctx.config.values.at(key)));
    };
    auto add_per_speaker = [&](auto path_fn) {
        if (!std::filesystem::exists(paths::speakers(ctx))) return;
        for (const std::string& speaker : load_speaker_plan(ctx).selected)
            inputs.push_back(path_fn(speaker));
    };

    if (stage == "ingest") {
        add_config_path("corpus.dialogs");
        add_config_path("corpus.profiles");
    } else if (stage == "split") {
        inputs = {paths::dialogs(ctx), paths::profiles(ctx)};
    } else if (stage == "augment") {
        inputs = {paths::dialogs(ctx), paths::profiles(ctx), paths::speakers(ctx)};
        for (const char* key : {"templates.plain.system", "templates.plain.user",
                                "templates.bigfive.system", "templates.bigfive.user",
                                "templates.fewshot.history1", "templates.fewshot.output1",
                                "templates.fewshot.history2", "templates.fewshot.output2"})
            add_config_path(key);
    } else if (stage == "build-trainset") {
        inputs = {paths::dialogs(ctx), paths::speakers(ctx)};
        add_per_speaker([&](const std::string& s) { return paths::augmented(ctx, s); });
        add_per_speaker([&](const std::string& s) { return paths::augment_report(ctx, s); });
    } else if (stage == "administer") {
        inputs = {paths::dialogs(ctx), paths::profiles(ctx), paths::speakers(ctx)};
        add_config_path("questionnaire.path");
    } else if (stage == "score") {
        inputs = {paths::profiles(ctx), paths::speakers(ctx)};
        add_config_path("questionnaire.path");
        for (const std::string& label : model_labels())
            add_per_speaker(
                [&, label](const std::string& s) { return paths::transcript(ctx, s, label); });
    } else if (stage == "analyze") {
        inputs = {paths::speakers(ctx)};
        for (const std::string& label : model_labels())
            add_per_speaker(
                [&, label](const std::string& s) { return paths::scores(ctx, s, label); });
    } else if (stage == "similarity") {
        inputs = {paths::dialogs(ctx), paths::speakers(ctx)};
    } else {
        throw ConfigError("unknown stage: " + stage);
    }
    return inputs;
}

bool stage_current(const StageContext& ctx, const std::string& stage, const json& inputs) {
    const std::filesystem::path stamp_path = paths::stamp(ctx, stage);
    if (!std::filesystem::exists(stamp_path)) return false;
    json stamp;
    try {
        stamp = json::parse(read_file(stamp_path));
    } catch (const json::exception&) {
        return false;
    }
    return stamp.value("config_hash", "") == ctx.config.hash &&
           stamp.value("seed", std::uint64_t{0}) == ctx.seed &&
           stamp.value("mock", !ctx.mock) == ctx.mock && stamp.value("inputs", json()) == inputs;
}

void write_stamp(const StageContext& ctx, const std::string& stage, const json& inputs) {
    json stamp;
    stamp["stage"] = stage;
    stamp["config_hash"] = ctx.config.hash;
    stamp["seed"] = ctx.seed;
    stamp["mock"] = ctx.mock;
    stamp["inputs"] = inputs;
    write_file(paths::stamp(ctx, stage), stamp.dump(2) + "\n");
}

using StageFn = std::function<void(StageContext&)>;

const std::map<std::string, StageFn>& stage_table() {
    static const std::map<std::string, StageFn> table = {
        {"ingest", run_ingest},
        {"split", run_split},
        {"augment", run_augment},
        {"build-trainset", run_build_trainset},
        {"administer", run_administer},
        {"score", run_score},
        {"analyze", run_analyze},
        {"similarity", run_similarity},
    };
    return table;
}

}  // namespace

const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> order = {
        "ingest",     "split", "augment", "build-trainset",
        "administer", "score", "analyze", "similarity",
    };
    return order;
}

void run_stage(StageContext& ctx, const std::string& stage_name) {
    auto it = stage_table().find(stage_name);
    if (it == stage_table().end()) throw ConfigError("unknown stage: " + stage_name);
    it->second(ctx);
    write_stamp(ctx, stage_name, fingerprint_inputs(stage_inputs(ctx, stage_name)));
}

void run_pipeline(StageContext& ctx) {
    for (const std::string& stage : stage_order()) {
        const json inputs = fingerprint_inputs(stage_inputs(ctx, stage));
        if (!ctx.force && stage_current(ctx, stage, inputs)) {
            log::info("pipeline: stage ", stage, " is up to date");
            continue;
        }
        stage_table().at(stage)(ctx);
        write_stamp(ctx, stage, fingerprint_inputs(stage_inputs(ctx, stage)));
    }
}

}  // namespace taupipe
