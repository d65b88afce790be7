#include "fedsim/data.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "fedsim/errors.hpp"
#include "fedsim/seeding.hpp"

namespace fedsim {

LabelHistogram LabelHistogram::of(std::span<const LabeledSample> samples,
                                  std::size_t num_classes) {
  LabelHistogram h(std::vector<std::size_t>(num_classes, 0));
  for (const auto& s : samples) {
    if (s.label >= num_classes) {
      throw InvalidInputError("label " + std::to_string(s.label) + " outside histogram range");
    }
    ++h.counts[s.label];
  }
  return h;
}

std::size_t LabelHistogram::total() const noexcept {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

void SyntheticDatasetSpec::validate() const {
  if (num_classes < 2) throw ConfigError("data.num_classes must be at least 2");
  if (samples_per_class == 0) throw ConfigError("data.samples_per_class must be positive");
  if (input_dim == 0) throw ConfigError("data.input_dim must be positive");
  if (num_classes > input_dim) {
    throw ConfigError("data.num_classes may not exceed data.input_dim (one anchor axis per class)");
  }
  if (!(class_separation > 0.0)) throw ConfigError("data.class_separation must be positive");
  if (!(noise_std > 0.0)) throw ConfigError("data.noise_std must be positive");
}

std::string to_string(PartitionMode mode) {
  return mode == PartitionMode::kIid ? "iid" : "noniid";
}

PartitionMode parse_partition_mode(const std::string& text) {
  if (text == "iid") return PartitionMode::kIid;
  if (text == "noniid" || text == "dirichlet_preference" || text == "non-iid") {
    return PartitionMode::kDirichletPreference;
  }
  throw ConfigError("unknown partition mode '" + text + "'");
}

void PartitionSpec::validate() const {
  if (num_clients == 0) throw ConfigError("partition.num_clients must be positive");
  if (samples_per_client == 0) throw ConfigError("partition.samples_per_client must be positive");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("partition.alpha must be positive");
  if (!(preference_boost > 0.0)) throw ConfigError("partition.preference_boost must be positive");
}

std::vector<std::size_t> KFoldSplit::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t f : fold_of) ++sizes[f];
  return sizes;
}

std::vector<std::size_t> KFoldSplit::test_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> KFoldSplit::train_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) out.push_back(i);
  }
  return out;
}

std::vector<double> class_anchor(const SyntheticDatasetSpec& spec, std::size_t label) {
  std::vector<double> anchor(spec.input_dim, 0.0);
  anchor.at(label) = spec.class_separation / std::sqrt(2.0);
  return anchor;
}

std::vector<LabeledSample> generate_synthetic(const SyntheticDatasetSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, {tag(StreamTag::kData)}));
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  std::vector<LabeledSample> out;
  out.reserve(spec.num_classes * spec.samples_per_class);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const auto anchor = class_anchor(spec, c);
    for (std::size_t n = 0; n < spec.samples_per_class; ++n) {
      LabeledSample s{anchor, c};
      for (double& v : s.features) v += noise(rng);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::size_t count_classes(std::span<const LabeledSample> dataset) {
  std::size_t n = 0;
  for (const auto& s : dataset) n = std::max(n, s.label + 1);
  return n;
}

std::vector<std::size_t> largest_remainder(std::span<const double> proportions, std::size_t total) {
  const double sum = std::accumulate(proportions.begin(), proportions.end(), 0.0);
  if (proportions.empty() || !(sum > 0.0)) {
    throw InvalidInputError("largest_remainder: proportions must have a positive sum");
  }
  std::vector<std::size_t> out(proportions.size());
  std::vector<double> frac(proportions.size());
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < proportions.size(); ++j) {
    const double quota = proportions[j] / sum * static_cast<double>(total);
    out[j] = static_cast<std::size_t>(std::floor(quota));
    frac[j] = quota - std::floor(quota);
    assigned += out[j];
  }
  // Floating error can push the floor sum one over when quotas are integral.
  while (assigned > total) {
    auto it = std::max_element(out.begin(), out.end());
    --*it;
    --assigned;
  }
  std::vector<std::size_t> order(proportions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t r = 0; assigned < total; r = (r + 1) % order.size()) {
    ++out[order[r]];
    ++assigned;
  }
  return out;
}

namespace {

using ClassPools = std::vector<std::vector<std::size_t>>;

ClassPools shuffled_pools(std::span<const LabeledSample> dataset, std::size_t num_classes,
                          std::mt19937_64& rng) {
  ClassPools pools(num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].label >= num_classes) {
      throw ConfigError("dataset label " + std::to_string(dataset[i].label) +
                        " exceeds num_classes");
    }
    pools[dataset[i].label].push_back(i);
  }
  for (auto& p : pools) std::shuffle(p.begin(), p.end(), rng);
  return pools;
}

void check_capacity(std::span<const LabeledSample> dataset, const PartitionSpec& spec) {
  spec.validate();
  if (spec.num_clients * spec.samples_per_client > dataset.size()) {
    throw ConfigError("partition needs " + std::to_string(spec.num_clients) + " x " +
                      std::to_string(spec.samples_per_client) + " samples but dataset has " +
                      std::to_string(dataset.size()));
  }
}

ClientPartition make_client(std::size_t id, std::span<const LabeledSample> dataset,
                            std::span<const std::size_t> indices, std::size_t num_classes) {
  ClientPartition cp;
  cp.client_id = id;
  cp.samples.reserve(indices.size());
  for (std::size_t i : indices) cp.samples.push_back(dataset[i]);
  cp.histogram = LabelHistogram::of(cp.samples, num_classes);
  return cp;
}

}  // namespace

std::vector<ClientPartition> partition_iid(std::span<const LabeledSample> dataset,
                                           const PartitionSpec& spec, std::size_t num_classes) {
  check_capacity(dataset, spec);
  if (spec.samples_per_client < num_classes) {
    throw ConfigError("iid partition infeasible: samples_per_client (" +
                      std::to_string(spec.samples_per_client) + ") < num_classes (" +
                      std::to_string(num_classes) + ")");
  }
  std::mt19937_64 rng(derive_seed(spec.seed, {tag(StreamTag::kPartition), 0}));
  auto pools = shuffled_pools(dataset, num_classes, rng);
  const std::size_t n = spec.num_clients;
  const std::size_t wanted = n * spec.samples_per_client;

  std::vector<double> share(num_classes);
  for (std::size_t j = 0; j < num_classes; ++j) {
    if (pools[j].size() < n) {
      throw ConfigError("iid partition infeasible: class " + std::to_string(j) + " has " +
                        std::to_string(pools[j].size()) + " samples for " + std::to_string(n) +
                        " clients");
    }
    share[j] = static_cast<double>(pools[j].size());
  }
  // Per-class totals to hand out, lifted so that every class reaches every client.
  auto class_total = largest_remainder(share, wanted);
  for (std::size_t j = 0; j < num_classes; ++j) {
    while (class_total[j] < n) {
      auto donor = std::max_element(class_total.begin(), class_total.end());
      --*donor;
      ++class_total[j];
    }
  }

  // Slots are laid out class by class and dealt round-robin, so a class
  // block of length >= n touches every client.
  std::vector<std::vector<std::size_t>> picks(n);
  std::size_t slot = 0;
  for (std::size_t j = 0; j < num_classes; ++j) {
    for (std::size_t t = 0; t < class_total[j]; ++t, ++slot) {
      picks[slot % n].push_back(pools[j][t]);
    }
  }

  std::vector<ClientPartition> out;
  out.reserve(n);
  for (std::size_t c = 0; c < n; ++c) out.push_back(make_client(c, dataset, picks[c], num_classes));
  return out;
}

std::vector<ClientPartition> partition_dirichlet_preference(std::span<const LabeledSample> dataset,
                                                            const PartitionSpec& spec,
                                                            std::size_t num_classes) {
  check_capacity(dataset, spec);
  if (num_classes < 2) throw ConfigError("dirichlet partition needs at least two classes");
  std::mt19937_64 pool_rng(derive_seed(spec.seed, {tag(StreamTag::kPartition), 0}));
  auto pools = shuffled_pools(dataset, num_classes, pool_rng);
  std::vector<std::size_t> next(num_classes, 0);
  auto remaining = [&](std::size_t j) { return pools[j].size() - next[j]; };

  std::mt19937_64 rng(derive_seed(spec.seed, {tag(StreamTag::kPartition), 1}));
  std::vector<ClientPartition> out;
  out.reserve(spec.num_clients);
  for (std::size_t c = 0; c < spec.num_clients; ++c) {
    const std::size_t pref = c % num_classes;
    std::vector<double> props(num_classes);
    double sum = 0.0;
    for (std::size_t j = 0; j < num_classes; ++j) {
      const double conc = spec.alpha * (j == pref ? spec.preference_boost : 1.0);
      std::gamma_distribution<double> gamma(conc, 1.0);
      props[j] = gamma(rng);
      sum += props[j];
    }
    if (!(sum > 0.0)) {
      // Every gamma draw underflowed (tiny alpha); the preferred class takes all.
      std::fill(props.begin(), props.end(), 0.0);
      props[pref] = 1.0;
    }
    auto target = largest_remainder(props, spec.samples_per_client);

    std::vector<std::size_t> picks;
    picks.reserve(spec.samples_per_client);
    for (std::size_t j = 0; j < num_classes; ++j) {
      const std::size_t take = std::min(target[j], remaining(j));
      for (std::size_t t = 0; t < take; ++t) picks.push_back(pools[j][next[j]++]);
    }
    const std::size_t deficit = spec.samples_per_client - picks.size();
    if (deficit > 0) {
      spdlog::warn("partition: client {} short {} samples of its target mix; filling from the "
                   "most available classes",
                   c, deficit);
    }
    while (picks.size() < spec.samples_per_client) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < num_classes; ++j) {
        if (remaining(j) > remaining(best)) best = j;
      }
      picks.push_back(pools[best][next[best]++]);
    }
    out.push_back(make_client(c, dataset, picks, num_classes));
  }
  return out;
}

std::vector<ClientPartition> partition(std::span<const LabeledSample> dataset,
                                       const PartitionSpec& spec, std::size_t num_classes) {
  return spec.mode == PartitionMode::kIid
             ? partition_iid(dataset, spec, num_classes)
             : partition_dirichlet_preference(dataset, spec, num_classes);
}

KFoldSplit kfold_split(std::span<const LabeledSample> dataset, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be at least 2");
  if (k > dataset.size()) {
    throw ConfigError("kfold: k = " + std::to_string(k) + " exceeds dataset size " +
                      std::to_string(dataset.size()));
  }
  std::mt19937_64 rng(derive_seed(seed, {tag(StreamTag::kKFold)}));
  auto pools = shuffled_pools(dataset, count_classes(dataset), rng);
  KFoldSplit split{k, std::vector<std::size_t>(dataset.size(), 0)};
  std::size_t counter = 0;
  for (const auto& pool : pools) {
    for (std::size_t idx : pool) split.fold_of[idx] = counter++ % k;
  }
  return split;
}

void write_partition_csv(std::ostream& out, std::span<const ClientPartition> partitions) {
  const std::size_t n_classes = partitions.empty() ? 0 : partitions.front().histogram.num_classes();
  out << "client_id";
  for (std::size_t j = 0; j < n_classes; ++j) out << ",class_" << j << "_count";
  out << '\n';
  for (const auto& p : partitions) {
    out << p.client_id;
    for (std::size_t count : p.histogram.counts) out << ',' << count;
    out << '\n';
  }
}

}  // namespace fedsim
