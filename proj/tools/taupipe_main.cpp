// Command-line front end: one subcommand per pipeline stage plus `pipeline`
// to run them all with stamp-based resume.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "taupipe/config.hpp"
#include "taupipe/errors.hpp"
#include "taupipe/log.hpp"
#include "taupipe/stages.hpp"

namespace {

// 0 ok, 1 unexpected, 2 config/validation, 3 backend, 4 file format,
// 5 missing stage dependency.
constexpr int kExitGeneric = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitFormat = 4;
constexpr int kExitDependency = 5;

int run(const std::string& command, const std::string& config_path,
        const std::optional<std::string>& out_override,
        const std::optional<std::uint64_t>& seed_override, bool mock) {
    taupipe::StageContext ctx;
    ctx.config = taupipe::RunConfig::load(config_path);
    ctx.out_dir = out_override ? std::filesystem::path(*out_override)
                               : ctx.config.resolve(ctx.config.get("out", "out"));
    ctx.seed = seed_override ? *seed_override
                             : static_cast<std::uint64_t>(ctx.config.get_int("seed", 1234));
    ctx.mock = mock || ctx.config.get_bool("mock", false);

    if (command == "pipeline") {
        taupipe::run_pipeline(ctx);
    } else {
        ctx.force = true;
        taupipe::run_stage(ctx, command);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dialog TAU augmentation, fine-tuning export, and trait-recovery evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> out_override;
    std::optional<std::uint64_t> seed_override;
    bool mock = false;
    std::string stage_for_pipeline;
    std::string log_level = "info";

    app.add_option("--config", config_path, "Run configuration file")->required();
    app.add_option("--out", out_override, "Output directory (overrides the config)");
    app.add_option("--seed", seed_override, "Random seed (overrides the config)");
    app.add_flag("--mock", mock, "Replace every backend with its deterministic mock");
    app.add_option("--log-level", log_level, "debug, info, warn, or error");

    std::vector<std::string> commands = taupipe::stage_order();
    commands.push_back("pipeline");
    for (const std::string& name : commands) {
        CLI::App* sub =
            app.add_subcommand(name, name == "pipeline" ? "Run all stages in order with resume"
                                                        : "Run the " + name + " stage");
        sub->fallthrough();  // accept --config etc. after the subcommand name
    }
    // `pipeline --stage X` runs a single stage through the pipeline driver.
    app.get_subcommand("pipeline")
        ->add_option("--stage", stage_for_pipeline, "Run only this stage, unconditionally");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;  // bad usage is a config error
    }

    if (log_level == "debug") taupipe::log::set_level(taupipe::log::Level::Debug);
    else if (log_level == "info") taupipe::log::set_level(taupipe::log::Level::Info);
    else if (log_level == "warn") taupipe::log::set_level(taupipe::log::Level::Warn);
    else if (log_level == "error") taupipe::log::set_level(taupipe::log::Level::Error);
    else {
        std::cerr << "unknown log level: " << log_level << "\n";
        return kExitConfig;
    }

    std::string command = app.get_subcommands().front()->get_name();
    if (command == "pipeline" && !stage_for_pipeline.empty()) command = stage_for_pipeline;

    try {
        return run(command, config_path, out_override, seed_override, mock);
    } catch (const taupipe::DependencyError& e) {
        std::cerr << "dependency error: " << e.what() << "\n";
        return kExitDependency;
    } catch (const taupipe::FileParseError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const taupipe::BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const taupipe::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const taupipe::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitGeneric;
    }
}
