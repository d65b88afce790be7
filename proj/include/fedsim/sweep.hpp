#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/config.hpp"
#include "fedsim/federation.hpp"

namespace fedsim {

struct ComparisonRow {
  PartitionMode mode = PartitionMode::kIid;
  StrategyId strategy = StrategyId::kFedAvg;
  bool failed = false;
  std::string error;
  double final_metric = 0.0;
  /// Aligned with the table's targets.
  std::vector<std::optional<std::size_t>> rounds_to_target;
  std::vector<std::optional<double>> speedup;
};

struct ModeTargets {
  PartitionMode mode = PartitionMode::kIid;
  std::optional<double> central_final_metric;
  /// Absolute metric levels actually used for this mode.
  std::vector<double> absolute;
};

struct ComparisonTable {
  /// Target levels as configured (fractions or absolute values).
  std::vector<double> target_labels;
  std::vector<ModeTargets> mode_targets;
  std::vector<ComparisonRow> rows;
};

/// One executed cell of the sweep.
struct SweepRun {
  PartitionMode mode = PartitionMode::kIid;
  /// nullopt for the centralized baseline.
  std::optional<StrategyId> strategy;
  std::optional<RunResult> result;
  std::string error;

  std::string run_id() const;
};

struct SweepResult {
  ComparisonTable table;
  std::vector<SweepRun> runs;
  bool any_failed = false;
};

/// speedup = baseline rounds / strategy rounds, where the baseline is fedavg
/// or, if fedavg never reaches the target, fedprox. nullopt when either side
/// is missing.
void fill_speedups(std::span<ComparisonRow> rows_of_one_mode);

/// Runs every (mode, strategy) cell with shared folds per mode. When
/// `write_outputs` is set the artifacts land in manifest.output_dir.
SweepResult run_sweep(const RunManifest& manifest, bool write_outputs = true);

void write_rounds_csv(std::ostream& out, std::span<const SweepRun> runs);
void write_table_csv(std::ostream& out, const ComparisonTable& table);
nlohmann::json table_to_json(const ComparisonTable& table);

/// client_id,class_0_count,...; one row per client.
std::string emit_partition_report(std::span<const ClientPartition> partitions);

}  // namespace fedsim
