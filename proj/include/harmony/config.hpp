#pragma once

#include "harmony/data.hpp"
#include "harmony/monte_carlo.hpp"
#include "harmony/resampling.hpp"
#include "harmony/scenario.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace harmony {

using nlohmann::json;

enum class Command { Estimate, Simulate, Resample };
std::string_view to_string(Command command) noexcept;

/// RCT and EC files plus their column mapping.
struct DataSource {
    std::filesystem::path rct_csv;
    std::filesystem::path ec_csv;
    CsvSchema schema;
};

/// Fully resolved run description. Unknown keys anywhere are ConfigErrors.
struct RunConfig {
    Command command = Command::Simulate;
    std::optional<std::string> preset;
    std::string description;
    std::optional<ScenarioSpec> scenario;
    MonteCarloOptions simulation;        // estimate and simulate
    ResamplingOptions resampling;        // resample
    std::optional<DataSource> data;      // estimate; resample from files
    std::optional<std::uint64_t> synthetic_pool_seed;  // resample from gbm_like_pools
    std::filesystem::path out_dir = "out";
    bool keep_replicates = true;
};

/// Names of the shipped presets.
std::vector<std::string> preset_names();
/// Raw preset document; ConfigError when unknown.
json preset_json(const std::string& name);

/// Builds a config from a document: the named preset (if any) is applied first and the
/// document's own keys are merged over it.
RunConfig parse_run_config(Command command, const json& doc);

/// Resolved config, defaults included, in the same schema parse_run_config reads.
json to_json(const RunConfig& config);

ScenarioSpec scenario_from_json(const json& j);
json to_json(const ScenarioSpec& spec);

json lambda_to_json(const Lambda& lambda);
Lambda lambda_from_json(const json& j);
SigmaMode sigma_mode_from_string(const std::string& s);

}  // namespace harmony
