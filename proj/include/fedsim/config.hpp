#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/aggregation.hpp"
#include "fedsim/data.hpp"
#include "fedsim/federation.hpp"

namespace fedsim {

enum class TargetMode {
  kRelative,  // fractions of the centralized baseline's final metric
  kAbsolute,
};

struct RunManifest {
  ExperimentConfig config;
  std::vector<StrategyId> strategies = all_strategies();
  std::vector<PartitionMode> modes{PartitionMode::kIid, PartitionMode::kDirichletPreference};
  std::filesystem::path output_dir = "results";
  bool emit_csv = true;
  bool emit_json = true;
  TargetMode target_mode = TargetMode::kRelative;
  /// As configured; interpreted according to target_mode.
  std::vector<double> targets{0.75, 0.85, 0.95};
  bool run_central = true;

  /// Throws ValidationError naming the offending key.
  void validate() const;
};

/// Command-line values that take precedence over the config file.
struct FlagOverrides {
  std::optional<std::string> strategy;  // comma separated
  std::optional<std::string> mode;      // iid | noniid | both
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> targets;   // comma separated
  std::optional<std::size_t> threads;
};

std::vector<StrategyId> parse_strategy_list(const std::string& text);
std::vector<PartitionMode> parse_mode_list(const std::string& text);
std::vector<double> parse_target_list(const std::string& text);

/// Builds a manifest from a JSON document whose keys mirror ExperimentConfig;
/// absent keys keep their defaults. Unknown keys are rejected.
RunManifest parse_config(const nlohmann::json& doc, const FlagOverrides& flags = {});

/// Reads the file (if given) and applies the flags on top.
RunManifest load_config(const std::optional<std::filesystem::path>& file,
                        const FlagOverrides& flags = {});

/// Fully resolved manifest, suitable for manifest.json.
nlohmann::json to_json(const RunManifest& manifest);

}  // namespace fedsim
