#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/aggregation.hpp"
#include "fedsim/data.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

enum class EvalMetric { kAccuracy, kMacroF1 };

std::string to_string(EvalMetric m);
EvalMetric parse_eval_metric(const std::string& text);

struct ExperimentConfig {
  std::size_t num_clients = 10;
  double selection_fraction = 0.5;
  std::size_t global_epochs = 50;
  std::size_t local_epochs = 10;
  double mu = 0.01;
  StrategyId strategy = StrategyId::kFedAvg;
  /// Master seed. Data, folds, partitions, initial models, client selection
  /// and local shuffling all derive their streams from it.
  std::uint64_t seed = 42;
  MlpArchitecture arch;
  SyntheticDatasetSpec data;
  /// num_clients and seed in here are overwritten from the fields above.
  PartitionSpec partition;
  std::size_t kfold = 5;
  TrainConfig train;
  EvalMetric eval_metric = EvalMetric::kAccuracy;
  /// Absolute metric levels for rounds_to_target.
  std::vector<double> target_metric_levels;
  double init_stddev = 0.1;
  /// Worker threads for client training within a round; results do not
  /// depend on it.
  std::size_t threads = 1;

  void validate() const;
  /// max(1, round(C * N))
  std::size_t clients_per_round() const;
  /// mu actually used for local training under `strategy`.
  double effective_mu() const;
  PartitionSpec resolved_partition() const;
  SyntheticDatasetSpec resolved_data() const;
};

struct RoundRecord {
  std::size_t round_index = 0;  // 1-based
  /// Fold this record belongs to; nullopt for a fold-averaged record.
  std::optional<std::size_t> fold;
  std::vector<std::size_t> selected_clients;
  AggregationWeights weights;
  double eval_metric = 0.0;
  double train_loss_mean = 0.0;
  std::chrono::duration<double> wall_time{0.0};
};

struct RunResult {
  /// Fold-averaged curve, one record per global epoch.
  std::vector<RoundRecord> records;
  std::vector<std::vector<RoundRecord>> fold_records;
  double final_metric = 0.0;
  /// (target, first round reaching it) in the order of target_metric_levels.
  std::vector<std::pair<double, std::optional<std::size_t>>> rounds_to_target;

  std::vector<std::pair<std::size_t, double>> curve() const;
};

/// Everything a fold needs that does not depend on the strategy, so paired
/// runs see identical partitions and initial models.
struct FoldData {
  std::size_t fold = 0;
  std::vector<LabeledSample> test;
  std::vector<ClientPartition> partitions;
  ParameterVector initial;
  std::uint64_t stream_seed = 0;
};

std::vector<FoldData> prepare_folds(const ExperimentConfig& config);

using RoundObserver = std::function<void(const RoundRecord&)>;

/// Uniform draw without replacement of clients_per_round() ids, returned in
/// ascending order. Depends only on (stream_seed, round_index).
std::vector<std::size_t> select_clients(std::size_t round_index, const ExperimentConfig& config,
                                        std::uint64_t stream_seed);

double evaluate(const ParameterVector& params, const MlpArchitecture& arch,
                std::span<const LabeledSample> data, EvalMetric metric);

struct RoundOutcome {
  ParameterVector global;
  RoundRecord record;
};

/// Select, train locally, weight, aggregate, evaluate. A client failure
/// aborts the round with the round and client named in the error.
RoundOutcome run_round(const ParameterVector& global_params,
                       std::span<const ClientPartition> partitions, const ExperimentConfig& config,
                       std::size_t round_index, std::uint64_t stream_seed,
                       std::span<const LabeledSample> eval_set);

RunResult run_experiment(const ExperimentConfig& config, const RoundObserver& observer = {});
RunResult run_experiment(const ExperimentConfig& config, std::span<const FoldData> folds,
                         const RoundObserver& observer = {});

/// One model trained on the union of the client datasets for E_g * E_l
/// epochs, evaluated every E_l epochs.
RunResult run_centralized_baseline(const ExperimentConfig& config, const RoundObserver& observer = {});
RunResult run_centralized_baseline(const ExperimentConfig& config, std::span<const FoldData> folds,
                                   const RoundObserver& observer = {});

/// Averages per-fold curves and fills final_metric and rounds_to_target.
RunResult summarize(std::vector<std::vector<RoundRecord>> fold_records,
                    std::span<const double> targets);

}  // namespace fedsim
