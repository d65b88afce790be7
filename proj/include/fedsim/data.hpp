#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedsim/model.hpp"

namespace fedsim {

/// Per-class sample counts S(c_i, l_j) for one client.
struct LabelHistogram {
  std::vector<std::size_t> counts;

  LabelHistogram() = default;
  explicit LabelHistogram(std::vector<std::size_t> c) : counts(std::move(c)) {}

  static LabelHistogram of(std::span<const LabeledSample> samples, std::size_t num_classes);

  std::size_t num_classes() const noexcept { return counts.size(); }
  std::size_t total() const noexcept;

  friend bool operator==(const LabelHistogram&, const LabelHistogram&) = default;
};

/// Gaussian blobs, one per class.
struct SyntheticDatasetSpec {
  std::size_t num_classes = 2;
  std::size_t samples_per_class = 1500;
  std::size_t input_dim = 16;
  double class_separation = 2.0;
  double noise_std = 1.0;
  std::uint64_t seed = 42;

  void validate() const;
};

enum class PartitionMode { kIid, kDirichletPreference };

std::string to_string(PartitionMode mode);
/// Accepts "iid", "noniid" and "dirichlet_preference".
PartitionMode parse_partition_mode(const std::string& text);

struct PartitionSpec {
  std::size_t num_clients = 10;
  PartitionMode mode = PartitionMode::kIid;
  double alpha = 0.5;
  /// Multiplier on the preferred class's share of the Dirichlet base measure.
  double preference_boost = 4.0;
  std::size_t samples_per_client = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ClientPartition {
  std::size_t client_id = 0;
  std::vector<LabeledSample> samples;
  LabelHistogram histogram;
};

struct KFoldSplit {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;  // fold index per sample

  std::vector<std::size_t> fold_sizes() const;
  /// Indices of samples in `fold` (test) or outside it (train), ascending.
  std::vector<std::size_t> test_indices(std::size_t fold) const;
  std::vector<std::size_t> train_indices(std::size_t fold) const;
};

/// Anchor of class c is (class_separation / sqrt 2) * e_c, so every pair of
/// anchors is exactly class_separation apart. Needs num_classes <= input_dim.
std::vector<double> class_anchor(const SyntheticDatasetSpec& spec, std::size_t label);

/// Samples are grouped by class, class 0 first.
std::vector<LabeledSample> generate_synthetic(const SyntheticDatasetSpec& spec);

std::size_t count_classes(std::span<const LabeledSample> dataset);

/// Stratified allocation: every client receives at least one sample of every
/// class present in the dataset, and exactly samples_per_client in total.
std::vector<ClientPartition> partition_iid(std::span<const LabeledSample> dataset,
                                           const PartitionSpec& spec, std::size_t num_classes);

/// Client i prefers class i mod n_l. Its target proportions are drawn from a
/// Dirichlet whose concentration is alpha * base, base_j = 1 except the
/// preferred class at preference_boost.
std::vector<ClientPartition> partition_dirichlet_preference(std::span<const LabeledSample> dataset,
                                                            const PartitionSpec& spec,
                                                            std::size_t num_classes);

/// Dispatches on spec.mode.
std::vector<ClientPartition> partition(std::span<const LabeledSample> dataset,
                                       const PartitionSpec& spec, std::size_t num_classes);

/// Stratified K-fold; fold sizes differ by at most one.
KFoldSplit kfold_split(std::span<const LabeledSample> dataset, std::size_t k, std::uint64_t seed);

/// Rounds fractional quotas to integers summing to `total` by largest
/// remainder; ties go to the lower index.
std::vector<std::size_t> largest_remainder(std::span<const double> proportions, std::size_t total);

/// client_id,class_0_count,...,class_{n-1}_count
void write_partition_csv(std::ostream& out, std::span<const ClientPartition> partitions);

}  // namespace fedsim
