#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tiered/sim_engine.hpp"

namespace tiered {

inline constexpr int kConfigVersion = 1;

/// Everything `simulate` needs: the simulation itself plus run-level options.
struct RunConfig {
    SimConfig sim;
    std::vector<std::size_t> sweep_sizes;  // non-empty: cache-size sweep instead of one run
    bool write_timeseries = false;
    bool compare_analytic = false;
};

std::string_view to_string(Timing timing);
Timing timing_from_string(std::string_view name);
std::string_view to_string(Tier2Mode mode);
Tier2Mode tier2_mode_from_string(std::string_view name);

/// Parses YAML (JSON is accepted too). `overrides` are `dotted.key=value`
/// assignments applied before validation; values are read as YAML, so lists
/// like `sweep.sizes=[8,16]` work. Unknown keys and a missing or wrong
/// `version` throw ConfigError naming the key.
RunConfig parse_run_config(std::string_view text, std::span<const std::string> overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});

/// Fully resolved configuration in the file schema; feeding it back through
/// parse_run_config reproduces the same RunConfig.
nlohmann::json to_json(const RunConfig& config);

}  // namespace tiered
