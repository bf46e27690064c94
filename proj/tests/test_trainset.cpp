#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "taupipe/augment.hpp"
#include "taupipe/corpus.hpp"
#include "taupipe/errors.hpp"
#include "taupipe/mocks.hpp"
#include "taupipe/trainset.hpp"
#include "taupipe/util.hpp"
#include "testutil.hpp"

using namespace taupipe;

namespace {

// The greeting dialog with its four TAUs inserted, produced through the
// parser so the fixture matches what augmentation actually emits.
Dialog augmented_greeting() {
    ParseResult parsed = parse_augmented_output(
        testutil::render_output(testutil::greeting_dialog(), "B", testutil::greeting_taus()),
        testutil::greeting_dialog(), "B");
    REQUIRE(parsed.ok());
    return *parsed.dialog;
}

}  // namespace

TEST_CASE("an augmented assistant turn carries the thinking span verbatim") {
    TrainingRecord record = build_record(augmented_greeting(), "B", RecordMode::TAUAugmented);
    REQUIRE(record.messages.size() == 8);

    CHECK(record.messages[0].role == TrainRole::User);
    CHECK(record.messages[0].content == "Nice to meet you.");
    CHECK_FALSE(record.messages[0].train_on);

    CHECK(record.messages[1].role == TrainRole::Assistant);
    CHECK(record.messages[1].train_on);
    CHECK(record.messages[1].content ==
          "<thinking> First, I need to respond with a polite greeting. </thinking> "
          "Nice to meet you.");

    CHECK(record.messages[3].content ==
          "<thinking> Five years from now, huh… I’ve thought about it before, but picturing my "
          "current self is really difficult. </thinking> "
          "I'd want to ask, “Are you working properly?”");

    CHECK(record.dialog_id == "greeting");
    CHECK(record.target_speaker_id == "B");
    CHECK(record.mode == RecordMode::TAUAugmented);
    CHECK_NOTHROW(record.validate());
}

TEST_CASE("the original-only mode reproduces the plain dialog") {
    Dialog dialog = testutil::greeting_dialog();
    TrainingRecord record = build_record(dialog, "B", RecordMode::OriginalOnly);
    REQUIRE(record.messages.size() == 8);
    for (std::size_t i = 0; i < record.messages.size(); ++i) {
        CHECK(record.messages[i].content == dialog.utterances[i].text);
        const bool assistant = dialog.utterances[i].speaker_id == "B";
        CHECK(record.messages[i].role ==
              (assistant ? TrainRole::Assistant : TrainRole::User));
        CHECK(record.messages[i].train_on == assistant);
    }
}

TEST_CASE("consecutive same-speaker utterances merge into one message") {
    Dialog d = testutil::make_dialog("doubles", "A", "B",
                                     {{"A", "one"},
                                      {"A", "two"},
                                      {"B", "reply"},
                                      {"A", "three"},
                                      {"B", "closing"},
                                      {"B", "afterthought"}});

    SUBCASE("user side merges in original-only mode") {
        TrainingRecord record = build_record(d, "B", RecordMode::OriginalOnly);
        REQUIRE(record.messages.size() == 4);
        CHECK(record.messages[0].content == "one\ntwo");
        CHECK(record.messages[1].content == "reply");
        CHECK(record.messages[2].content == "three");
        CHECK(record.messages[3].content == "closing\nafterthought");
    }

    SUBCASE("a merged assistant turn keeps one span holding all its TAUs") {
        Dialog augmented = d;
        augmented.utterances.insert(augmented.utterances.begin() + 5,
                                    {"B", "tau-c", UtteranceKind::TAU});
        augmented.utterances.insert(augmented.utterances.begin() + 4,
                                    {"B", "tau-b", UtteranceKind::TAU});
        augmented.utterances.insert(augmented.utterances.begin() + 2,
                                    {"B", "tau-a", UtteranceKind::TAU});
        TrainingRecord record = build_record(augmented, "B", RecordMode::TAUAugmented);
        REQUIRE(record.messages.size() == 4);
        CHECK(record.messages[1].content == "<thinking> tau-a </thinking> reply");
        CHECK(record.messages[3].content ==
              "<thinking> tau-b\ntau-c </thinking> closing\nafterthought");
    }
}

TEST_CASE("a dialog opened by the target starts with an assistant message") {
    Dialog d = testutil::make_dialog("opener", "A", "B",
                                     {{"B", "shall we begin?"}, {"A", "yes"}});
    TrainingRecord record = build_record(d, "B", RecordMode::OriginalOnly);
    REQUIRE(record.messages.size() == 2);
    CHECK(record.messages[0].role == TrainRole::Assistant);
    CHECK(record.messages[0].train_on);
    CHECK_NOTHROW(record.validate());
}

TEST_CASE("build_record rejects malformed inputs") {
    Dialog d = testutil::greeting_head();
    CHECK_THROWS_AS(build_record(d, "Z", RecordMode::OriginalOnly), ValidationError);
    CHECK_THROWS_AS(build_record(d, "B", RecordMode::TAUAugmented), ValidationError);

    Dialog trailing = d;
    trailing.utterances.push_back({"B", "unattached", UtteranceKind::TAU});
    CHECK_THROWS_AS(build_record(trailing, "B", RecordMode::OriginalOnly), ValidationError);

    Dialog misplaced = d;
    misplaced.utterances.insert(misplaced.utterances.begin(),
                                {"B", "before A speaks", UtteranceKind::TAU});
    CHECK_THROWS_AS(build_record(misplaced, "B", RecordMode::OriginalOnly), ValidationError);
}

TEST_CASE("record validation enforces the loss-mask and alternation invariants") {
    TrainingRecord record = build_record(augmented_greeting(), "B", RecordMode::TAUAugmented);

    SUBCASE("assistant message excluded from the mask") {
        record.messages[1].train_on = false;
        CHECK_THROWS_AS(record.validate(), ValidationError);
    }
    SUBCASE("user message included in the mask") {
        record.messages[0].train_on = true;
        CHECK_THROWS_AS(record.validate(), ValidationError);
    }
    SUBCASE("roles must alternate") {
        record.messages[2].role = TrainRole::Assistant;
        record.messages[2].train_on = true;
        CHECK_THROWS_AS(record.validate(), ValidationError);
    }
    SUBCASE("empty content") {
        record.messages[4].content.clear();
        CHECK_THROWS_AS(record.validate(), ValidationError);
    }
    SUBCASE("no messages") {
        record.messages.clear();
        CHECK_THROWS_AS(record.validate(), ValidationError);
    }
}

TEST_CASE("stripping the spans recovers the original-only record") {
    Dialog augmented = augmented_greeting();
    TrainingRecord with_taus = build_record(augmented, "B", RecordMode::TAUAugmented);
    TrainingRecord stripped = strip_record(with_taus);
    TrainingRecord plain = build_record(testutil::greeting_dialog(), "B",
                                        RecordMode::OriginalOnly);
    CHECK(stripped == plain);
}

TEST_CASE("span stripping agrees with the naive oracle on realistic contents") {
    std::vector<std::string> taus = {
        "short",
        "two words",
        "unicode …—“quoted”",
        "mentions </thinking> inside",   // a close token inside the TAU truncates early;
                                         // both formulations share that convention
        "first line\nsecond line",
    };
    std::vector<std::string> bodies = {
        "plain reply",
        "reply\nsecond utterance",
        "<thinking> fake span </thinking> adversarial body",
        "ends with </thinking>",
    };
    ThinkingTags tags;
    for (const std::string& tau : taus) {
        for (const std::string& body : bodies) {
            std::string content = tags.open + " " + tau + " " + tags.close + " " + body;
            CHECK(strip_thinking_span(content) == testutil::naive_strip(content));
        }
    }
}

TEST_CASE("contents without a leading span pass through unchanged") {
    CHECK(strip_thinking_span("no span here") == "no span here");
    CHECK(strip_thinking_span("") == "");
    CHECK(strip_thinking_span("<thinking> unterminated") == "<thinking> unterminated");
    CHECK(strip_thinking_span("x <thinking> not leading </thinking> y") ==
          "x <thinking> not leading </thinking> y");
    // custom tags take effect
    ThinkingTags tags{"<мысль>", "</мысль>"};
    CHECK(strip_thinking_span("<мысль> думаю </мысль> говорю", tags) == "говорю");
}

TEST_CASE("every mock-augmented dialog yields consistent record pairs") {
    Corpus corpus = load_corpus(testutil::data_dir() / "synthetic_corpus.jsonl",
                                testutil::data_dir() / "synthetic_profiles.jsonl");
    MockAugmentBackend mock;
    AugmentationPromptTemplate tmpl = AugmentationPromptTemplate::load(
        testutil::data_dir() / "templates" / "augment_plain.system.txt",
        testutil::data_dir() / "templates" / "augment_plain.user.txt", TemplateMode::Plain);
    auto t = testutil::data_dir() / "templates";
    FewShotExamples examples = FewShotExamples::load(t / "fewshot1_history.txt",
                                                     t / "fewshot1_output.txt",
                                                     t / "fewshot2_history.txt",
                                                     t / "fewshot2_output.txt");

    for (const Dialog& dialog : corpus.dialogs) {
        const std::string target = dialog.participants[0];
        AugmentOutcome outcome = augment_dialog(mock, tmpl, dialog, target, examples,
                                                AugmentationPolicy{});
        REQUIRE(outcome.status == AugmentStatus::Success);

        TrainingRecord with_taus = build_record(*outcome.augmented, target,
                                                RecordMode::TAUAugmented);
        TrainingRecord plain = build_record(dialog, target, RecordMode::OriginalOnly);
        CHECK(strip_record(with_taus) == plain);
        for (const TrainingMessage& m : with_taus.messages) {
            CHECK(m.train_on == (m.role == TrainRole::Assistant));
            if (m.role != TrainRole::Assistant) continue;
            CHECK(m.content.rfind("<thinking> ", 0) == 0);
            CHECK(m.content.find(" </thinking> ") != std::string::npos);
        }
    }
}

TEST_CASE("generic exports round-trip through the jsonl file") {
    std::filesystem::path dir = testutil::fresh_temp_dir("trainset-roundtrip");
    std::vector<TrainingRecord> records = {
        build_record(augmented_greeting(), "B", RecordMode::TAUAugmented),
    };
    Dialog second = testutil::make_dialog("second", "A", "B",
                                          {{"A", "question?"}, {"B", "answer."}});
    second.utterances.insert(second.utterances.begin() + 1,
                             {"B", "how to answer…", UtteranceKind::TAU});
    records.push_back(build_record(second, "B", RecordMode::TAUAugmented));

    ExportManifest manifest;
    manifest.mode = RecordMode::TAUAugmented;
    manifest.discarded_dialog_ids = {"dlg_090"};
    manifest.system_template_hash = "abc123";
    manifest.user_template_hash = "def456";

    nlohmann::json provenance = {{"tool", "taupipe"}, {"seed", 1234}};
    std::filesystem::path file = dir / "train_tau.jsonl";
    export_training_file(records, file, FormatProfile::Generic, manifest, &provenance);

    SUBCASE("records import byte-identically") {
        std::vector<TrainingRecord> back = import_training_file(file);
        CHECK(back == records);
    }
    SUBCASE("the provenance line leads the file and is skipped on import") {
        std::vector<std::string> lines = split_lines(read_file(file));
        REQUIRE(lines.size() == 3);
        nlohmann::json header = nlohmann::json::parse(lines[0]);
        CHECK(header.at("record_type") == "provenance");
        CHECK(header.at("seed") == 1234);
    }
    SUBCASE("the manifest sidecar sits next to the training file") {
        CHECK(std::filesystem::exists(dir / "train_tau.manifest.json"));
        ExportManifest loaded = load_manifest(file);
        CHECK(loaded.mode == RecordMode::TAUAugmented);
        CHECK(loaded.profile == FormatProfile::Generic);
        CHECK(loaded.record_count == 2);
        CHECK(loaded.discarded_dialog_ids == std::vector<std::string>{"dlg_090"});
        CHECK(loaded.system_template_hash == "abc123");
        CHECK_FALSE(loaded.loss_mask_degraded);
        CHECK(loaded.lora_rank == 64);
        CHECK(loaded.lora_alpha == 64);
    }
}

TEST_CASE("service-compat exports shed the loss mask and say so") {
    std::filesystem::path dir = testutil::fresh_temp_dir("trainset-compat");
    std::vector<TrainingRecord> records = {
        build_record(augmented_greeting(), "B", RecordMode::TAUAugmented)};
    nlohmann::json provenance = {{"tool", "taupipe"}};
    std::filesystem::path file = dir / "train_compat.jsonl";
    export_training_file(records, file, FormatProfile::ServiceCompat, ExportManifest{},
                         &provenance);

    std::vector<std::string> lines = split_lines(read_file(file));
    REQUIRE(lines.size() == 1);  // no provenance line in this profile
    nlohmann::json j = nlohmann::json::parse(lines[0]);
    CHECK(j.contains("messages"));
    CHECK_FALSE(j.contains("dialog_id"));
    CHECK_FALSE(j.at("messages")[0].contains("train_on"));
    CHECK(j.at("messages")[1].at("content").get<std::string>().rfind("<thinking> ", 0) == 0);

    ExportManifest manifest = load_manifest(file);
    CHECK(manifest.loss_mask_degraded);
    CHECK(manifest.profile == FormatProfile::ServiceCompat);

    CHECK_THROWS_AS(import_training_file(file), FileParseError);
}

TEST_CASE("exporting nothing fails before any file is created") {
    std::filesystem::path dir = testutil::fresh_temp_dir("trainset-empty");
    std::filesystem::path file = dir / "empty.jsonl";
    CHECK_THROWS_AS(export_training_file({}, file, FormatProfile::Generic, ExportManifest{}),
                    ValidationError);
    CHECK_FALSE(std::filesystem::exists(file));
    CHECK_FALSE(std::filesystem::exists(dir / "empty.manifest.json"));
}

TEST_CASE("invalid records are rejected at export time") {
    std::filesystem::path dir = testutil::fresh_temp_dir("trainset-invalid");
    TrainingRecord bad = build_record(augmented_greeting(), "B", RecordMode::TAUAugmented);
    bad.messages[1].train_on = false;
    CHECK_THROWS_AS(export_training_file({bad}, dir / "bad.jsonl", FormatProfile::Generic,
                                         ExportManifest{}),
                    ValidationError);
}

TEST_CASE("malformed training files fail with a position") {
    std::filesystem::path dir = testutil::fresh_temp_dir("trainset-malformed");
    std::filesystem::path file = dir / "broken.jsonl";
    write_file(file, "{\"dialog_id\": \"x\", \"target_speaker_id\"\n");
    CHECK_THROWS_AS(import_training_file(file), FileParseError);
    write_file(file, "{\"dialog_id\": \"x\"}\n");
    CHECK_THROWS_AS(import_training_file(file), FileParseError);
}
