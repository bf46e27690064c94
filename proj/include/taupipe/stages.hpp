#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "taupipe/config.hpp"

namespace taupipe {

struct StageContext {
    RunConfig config;
    std::filesystem::path out_dir;
    std::uint64_t seed = 0;
    bool mock = false;
    bool force = false;  // re-run even when the stage stamp is current
};

// Stage names in pipeline order.
const std::vector<std::string>& stage_order();

// Runs one stage unconditionally and stamps it. Unknown names throw
// ConfigError; missing upstream artifacts throw DependencyError.
void run_stage(StageContext& ctx, const std::string& stage_name);

// Runs every stage in order, skipping stages whose stamp still matches the
// config, seed, and input fingerprints.
void run_pipeline(StageContext& ctx);

}  // namespace taupipe
