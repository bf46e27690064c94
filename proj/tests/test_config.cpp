#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "taupipe/config.hpp"
#include "taupipe/errors.hpp"
#include "testutil.hpp"

using namespace taupipe;

TEST_CASE("key=value lines parse with trimming and whole-line comments") {
    RunConfig c = RunConfig::from_text(
        "# leading comment\n"
        "\n"
        "  alpha = one  \n"
        "beta=two\n"
        "   # indented comment\n"
        "url = http://host/path?x=1&y=2\n"
        "empty =\n"
        "alpha = final\n");

    CHECK(c.values.size() == 4);
    CHECK(c.get("alpha", "") == "final");  // later assignment wins
    CHECK(c.get("beta", "") == "two");
    // only the first '=' separates key from value
    CHECK(c.get("url", "") == "http://host/path?x=1&y=2");
    CHECK(c.has("empty"));
    CHECK(c.get("empty", "fallback").empty());
    CHECK_FALSE(c.has("missing"));
    CHECK(c.get("missing", "fallback") == "fallback");
}

TEST_CASE("malformed lines are reported with their line number") {
    CHECK_THROWS_AS(RunConfig::from_text("just words\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("= value\n"), ConfigError);
    try {
        RunConfig::from_text("ok = 1\n\nbroken line\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("3") != std::string::npos);
    }
}

TEST_CASE("values interpolate environment variables") {
    setenv("TAUPIPE_TEST_HOME", "/srv/taupipe", 1);
    setenv("TAUPIPE_TEST_USER", "ada", 1);

    RunConfig c = RunConfig::from_text(
        "root = ${TAUPIPE_TEST_HOME}/runs\n"
        "greeting = hi ${TAUPIPE_TEST_USER}, welcome to ${TAUPIPE_TEST_HOME}\n"
        "plain_dollar = cost is $5\n");
    CHECK(c.get("root", "") == "/srv/taupipe/runs");
    CHECK(c.get("greeting", "") == "hi ada, welcome to /srv/taupipe");
    CHECK(c.get("plain_dollar", "") == "cost is $5");  // no braces, no interpolation

    unsetenv("TAUPIPE_TEST_UNSET");
    CHECK_THROWS_AS(RunConfig::from_text("x = ${TAUPIPE_TEST_UNSET}\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("x = ${TAUPIPE_TEST_HOME\n"), ConfigError);
}

TEST_CASE("typed getters parse strictly") {
    RunConfig c = RunConfig::from_text(
        "workers = 4\n"
        "rate = 2.5\n"
        "tiny = 1e-3\n"
        "yes1 = true\nyes2 = 1\nyes3 = yes\n"
        "no1 = false\nno2 = 0\nno3 = no\n"
        "bad_int = 5x\n"
        "frac = 5.5\n"
        "bad_bool = maybe\n");

    CHECK(c.get_int("workers", 0) == 4);
    CHECK(c.get_int("absent", 7) == 7);
    CHECK(c.get_double("rate", 0.0) == doctest::Approx(2.5));
    CHECK(c.get_double("tiny", 0.0) == doctest::Approx(1e-3));
    CHECK(c.get_double("absent", 0.25) == doctest::Approx(0.25));
    CHECK(c.get_bool("yes1", false));
    CHECK(c.get_bool("yes2", false));
    CHECK(c.get_bool("yes3", false));
    CHECK_FALSE(c.get_bool("no1", true));
    CHECK_FALSE(c.get_bool("no2", true));
    CHECK_FALSE(c.get_bool("no3", true));
    CHECK(c.get_bool("absent", true));

    CHECK_THROWS_AS(c.get_int("bad_int", 0), ConfigError);
    CHECK_THROWS_AS(c.get_int("frac", 0), ConfigError);
    CHECK_THROWS_AS(c.get_double("bad_int", 0.0), ConfigError);
    CHECK_THROWS_AS(c.get_bool("bad_bool", false), ConfigError);

    CHECK(c.require("workers") == "4");
    CHECK_THROWS_AS(c.require("absent"), ConfigError);
}

TEST_CASE("relative paths resolve against the config directory") {
    const std::filesystem::path dir = testutil::fresh_temp_dir("config");
    {
        std::ofstream(dir / "present.txt") << "x";
        std::ofstream(dir / "run.conf") << "data = present.txt\n"
                                           "gone = nope.txt\n"
                                           "abs = /etc/hostname\n";
    }

    RunConfig c = RunConfig::load(dir / "run.conf");
    CHECK(c.base_dir == std::filesystem::absolute(dir));
    CHECK(c.resolve("sub/file.bin") == std::filesystem::absolute(dir) / "sub/file.bin");
    CHECK(c.resolve("/var/log") == std::filesystem::path("/var/log"));

    CHECK(c.path("data") == std::filesystem::absolute(dir) / "present.txt");
    CHECK(c.path("gone", /*must_exist=*/false).filename() == "nope.txt");
    CHECK_THROWS_AS(c.path("gone"), ConfigError);
    CHECK_THROWS_AS(c.path("unknown_key", false), ConfigError);

    std::filesystem::remove_all(dir);
}

TEST_CASE("loading a missing file is a config error") {
    CHECK_THROWS_AS(RunConfig::load("/nonexistent/dir/run.conf"), ConfigError);
}

TEST_CASE("the content hash tracks the raw text") {
    RunConfig a1 = RunConfig::from_text("a = 1\n");
    RunConfig a2 = RunConfig::from_text("a = 1\n");
    RunConfig b = RunConfig::from_text("a = 2\n");
    CHECK_FALSE(a1.hash.empty());
    CHECK(a1.hash == a2.hash);
    CHECK(a1.hash != b.hash);
}

TEST_CASE("the bundled example configuration loads") {
    RunConfig c = RunConfig::load(testutil::data_dir() / "example.conf");
    CHECK(c.get("augment.mode", "") == "bigfive");
    CHECK(c.get_int("seed", 0) == 1234);
    CHECK(c.get_int("policy.max_attempts", 0) == 15);
    CHECK(c.get_bool("mock.paraphrase", false));
    CHECK(c.has("mock.fail_marker"));
    CHECK(c.get("mock.fail_marker", "x").empty());
    // bundled relative paths point at real files
    CHECK(std::filesystem::exists(c.path("corpus.dialogs")));
    CHECK(std::filesystem::exists(c.path("questionnaire.path")));
    CHECK(std::filesystem::exists(c.path("templates.bigfive.system")));
    CHECK(std::filesystem::exists(c.path("templates.fewshot.output2")));
}
