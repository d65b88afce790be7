#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

enum class StrategyId { kFedAvg, kFedAvgL, kFedLA, kFedProx, kFedProxLA };

std::string to_string(StrategyId s);
StrategyId parse_strategy(const std::string& text);
const std::vector<StrategyId>& all_strategies();

/// fedprox and fedprox_la train with the proximal term; the rest use mu = 0.
bool uses_proximal_term(StrategyId s) noexcept;

/// What a client sends back after local training.
struct ClientUpdate {
  std::size_t client_id = 0;
  ParameterVector params;
  LabelHistogram histogram;
  std::size_t sample_count = 0;
};

/// Builds an update whose sample_count is the histogram total.
ClientUpdate make_update(std::size_t client_id, ParameterVector params, LabelHistogram histogram);

/// Per-client weights, aligned with the order of the updates they came from.
struct AggregationWeights {
  std::vector<std::size_t> client_ids;
  std::vector<double> weights;

  std::size_t size() const noexcept { return weights.size(); }
  std::optional<double> weight_of(std::size_t client_id) const;
  double sum() const noexcept;
};

/// weight(c_i) = S(c_i) / sum_x S(c_x)
AggregationWeights compute_fedavg_weights(std::span<const ClientUpdate> updates);

/// weight(c_i) = L(c_i) / sum_x L(c_x) with L the total label count of c_i.
AggregationWeights compute_fedavgl_weights(std::span<const ClientUpdate> updates);

/// Label-aware weights: each label present in the round hands out a unit of
/// weight in proportion to the clients' holdings of that label; the per-client
/// sums are then normalised. Labels no participant holds are skipped.
AggregationWeights compute_fedla_weights(std::span<const ClientUpdate> updates);

AggregationWeights weights_for(StrategyId strategy, std::span<const ClientUpdate> updates);

/// Convex combination sum_i weight(c_i) * params(c_i).
ParameterVector aggregate(std::span<const ClientUpdate> updates, const AggregationWeights& weights);

}  // namespace fedsim
