#include "fedsim/aggregation.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>

#include "fedsim/errors.hpp"

namespace fedsim {

std::string to_string(StrategyId s) {
  switch (s) {
    case StrategyId::kFedAvg: return "fedavg";
    case StrategyId::kFedAvgL: return "fedavgl";
    case StrategyId::kFedLA: return "fedla";
    case StrategyId::kFedProx: return "fedprox";
    case StrategyId::kFedProxLA: return "fedprox_la";
  }
  return "unknown";
}

StrategyId parse_strategy(const std::string& text) {
  for (StrategyId s : all_strategies()) {
    if (to_string(s) == text) return s;
  }
  if (text == "fedproxla" || text == "fedprox+la") return StrategyId::kFedProxLA;
  throw ConfigError("unknown strategy '" + text + "'");
}

const std::vector<StrategyId>& all_strategies() {
  static const std::vector<StrategyId> all{StrategyId::kFedAvg, StrategyId::kFedProx,
                                           StrategyId::kFedAvgL, StrategyId::kFedLA,
                                           StrategyId::kFedProxLA};
  return all;
}

bool uses_proximal_term(StrategyId s) noexcept {
  return s == StrategyId::kFedProx || s == StrategyId::kFedProxLA;
}

ClientUpdate make_update(std::size_t client_id, ParameterVector params, LabelHistogram histogram) {
  const std::size_t n = histogram.total();
  return ClientUpdate{client_id, std::move(params), std::move(histogram), n};
}

std::optional<double> AggregationWeights::weight_of(std::size_t client_id) const {
  for (std::size_t i = 0; i < client_ids.size(); ++i) {
    if (client_ids[i] == client_id) return weights[i];
  }
  return std::nullopt;
}

double AggregationWeights::sum() const noexcept {
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

namespace {

__extension__ typedef unsigned __int128 u128;
constexpr std::uint64_t kExactDoubleLimit = std::uint64_t{1} << 53;

void check_updates(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw InvalidInputError("aggregation needs at least one client update");
  std::set<std::size_t> seen;
  const std::size_t n_labels = updates.front().histogram.num_classes();
  for (const auto& u : updates) {
    if (!seen.insert(u.client_id).second) {
      throw ProtocolError("client " + std::to_string(u.client_id) + " appears twice in a round");
    }
    if (u.histogram.num_classes() != n_labels) {
      throw ProtocolError("client " + std::to_string(u.client_id) +
                          " reports a histogram of different length");
    }
    if (u.sample_count != u.histogram.total()) {
      throw ProtocolError("client " + std::to_string(u.client_id) +
                          " sample_count disagrees with its label histogram");
    }
  }
}

std::vector<std::size_t> ids_of(std::span<const ClientUpdate> updates) {
  std::vector<std::size_t> ids;
  ids.reserve(updates.size());
  for (const auto& u : updates) ids.push_back(u.client_id);
  return ids;
}

// numerator / denominator for integers below 2^53 is a single correctly
// rounded division, so equal ratios always give bit-equal weights.
double exact_ratio(std::uint64_t numerator, std::uint64_t denominator) {
  return static_cast<double>(numerator) / static_cast<double>(denominator);
}

AggregationWeights proportional(std::span<const ClientUpdate> updates,
                                const std::vector<std::uint64_t>& score, const char* what) {
  u128 total = 0;
  for (std::uint64_t s : score) total += s;
  if (total == 0) throw DegenerateInputError(std::string("all ") + what + " are zero");
  AggregationWeights w{ids_of(updates), {}};
  w.weights.reserve(score.size());
  for (std::size_t i = 0; i < score.size(); ++i) {
    if (score[i] == 0) {
      spdlog::warn("aggregation: client {} has no {}; it gets weight 0", updates[i].client_id,
                   what);
    }
    if (total < kExactDoubleLimit) {
      w.weights.push_back(exact_ratio(score[i], static_cast<std::uint64_t>(total)));
    } else {
      w.weights.push_back(static_cast<double>(score[i]) / static_cast<double>(total));
    }
  }
  return w;
}

}  // namespace

AggregationWeights compute_fedavg_weights(std::span<const ClientUpdate> updates) {
  check_updates(updates);
  std::vector<std::uint64_t> score;
  for (const auto& u : updates) score.push_back(u.sample_count);
  return proportional(updates, score, "sample counts");
}

AggregationWeights compute_fedavgl_weights(std::span<const ClientUpdate> updates) {
  check_updates(updates);
  std::vector<std::uint64_t> score;
  for (const auto& u : updates) score.push_back(u.histogram.total());
  return proportional(updates, score, "label counts");
}

AggregationWeights compute_fedla_weights(std::span<const ClientUpdate> updates) {
  check_updates(updates);
  const std::size_t n_labels = updates.front().histogram.num_classes();

  std::vector<std::uint64_t> label_total(n_labels, 0);
  for (const auto& u : updates) {
    for (std::size_t j = 0; j < n_labels; ++j) label_total[j] += u.histogram.counts[j];
  }
  std::vector<std::size_t> present;
  for (std::size_t j = 0; j < n_labels; ++j) {
    if (label_total[j] > 0) present.push_back(j);
  }
  if (present.empty()) throw DegenerateInputError("fedla: every label histogram is empty");

  AggregationWeights w{ids_of(updates), std::vector<double>(updates.size(), 0.0)};
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (updates[i].histogram.total() == 0) {
      spdlog::warn("aggregation: client {} has an empty label histogram; it gets weight 0",
                   updates[i].client_id);
    }
  }

  // Each present label contributes exactly 1 to sum_i W(c_i), so the
  // normaliser is |present|. Over the common denominator D = lcm of the label
  // totals every W(c_i) is an integer N_i / D, and the weight is
  // N_i / (|present| * D) rounded once.
  u128 lcm = 1;
  bool exact = true;
  for (std::size_t j : present) {
    const u128 t = label_total[j];
    u128 a = lcm, b = t;
    while (b != 0) {
      const u128 r = a % b;
      a = b;
      b = r;
    }
    lcm = lcm / a * t;
    if (lcm * present.size() >= kExactDoubleLimit) {
      exact = false;
      break;
    }
  }
  if (exact) {
    const auto denom = static_cast<std::uint64_t>(lcm * present.size());
    for (std::size_t i = 0; i < updates.size(); ++i) {
      u128 num = 0;
      for (std::size_t j : present) {
        num += static_cast<u128>(updates[i].histogram.counts[j]) * (lcm / label_total[j]);
      }
      w.weights[i] = exact_ratio(static_cast<std::uint64_t>(num), denom);
    }
    return w;
  }

  std::vector<double> per_client(updates.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    for (std::size_t j : present) {
      per_client[i] += static_cast<double>(updates[i].histogram.counts[j]) /
                       static_cast<double>(label_total[j]);
    }
    sum += per_client[i];
  }
  for (std::size_t i = 0; i < updates.size(); ++i) w.weights[i] = per_client[i] / sum;
  return w;
}

AggregationWeights weights_for(StrategyId strategy, std::span<const ClientUpdate> updates) {
  switch (strategy) {
    case StrategyId::kFedAvg:
    case StrategyId::kFedProx: return compute_fedavg_weights(updates);
    case StrategyId::kFedAvgL: return compute_fedavgl_weights(updates);
    case StrategyId::kFedLA:
    case StrategyId::kFedProxLA: return compute_fedla_weights(updates);
  }
  throw ConfigError("unhandled strategy");
}

ParameterVector aggregate(std::span<const ClientUpdate> updates, const AggregationWeights& weights) {
  if (updates.empty()) throw InvalidInputError("aggregate: no updates");
  if (weights.client_ids.size() != weights.weights.size()) {
    throw ProtocolError("aggregate: malformed weight table");
  }
  if (weights.size() != updates.size()) {
    throw ProtocolError("aggregate: " + std::to_string(weights.size()) + " weights for " +
                        std::to_string(updates.size()) + " updates");
  }
  std::vector<double> w(updates.size());
  for (std::size_t i = 0; i < updates.size(); ++i) {
    const auto found = weights.weight_of(updates[i].client_id);
    if (!found) {
      throw ProtocolError("aggregate: no weight for client " +
                          std::to_string(updates[i].client_id));
    }
    w[i] = *found;
  }

  // Accumulate offsets from the first update so that identical inputs
  // reproduce themselves exactly.
  const ParameterVector& ref = updates.front().params;
  for (const auto& u : updates) {
    if (u.params.size() != ref.size()) {
      throw ProtocolError("aggregate: client " + std::to_string(u.client_id) +
                          " sent parameters of a different length");
    }
  }
  ParameterVector out = ref;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    double delta = 0.0;
    for (std::size_t i = 1; i < updates.size(); ++i) {
      delta += w[i] * (updates[i].params[k] - ref[k]);
    }
    out[k] = ref[k] + delta;
  }
  if (!out.all_finite()) throw NumericalError("aggregate: non-finite aggregated parameters");
  return out;
}

}  // namespace fedsim
