#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace fedsim {

/// Flat vector of every model weight; the unit exchanged between clients and
/// the server.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::size_t length, double fill = 0.0) : values_(length, fill) {}
  explicit ParameterVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool all_finite() const noexcept;

  friend bool operator==(const ParameterVector&, const ParameterVector&) = default;

 private:
  std::vector<double> values_;
};

/// Fully connected tanh network with a softmax head.
struct MlpArchitecture {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden_dims{32};
  std::size_t num_classes = 2;

  /// Where one dense layer lives inside the flat ParameterVector. Weights are
  /// row-major [out][in], followed by the `out` biases.
  struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
  };

  /// Throws ConfigError on zero dimensions or fewer than two classes.
  void validate() const;
  std::size_t parameter_count() const;
  std::vector<Layer> layers() const;

  friend bool operator==(const MlpArchitecture&, const MlpArchitecture&) = default;
};

struct LabeledSample {
  std::vector<double> features;
  std::size_t label = 0;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros(std::size_t length, double lr = 0.01);
};

struct TrainConfig {
  double learning_rate = 0.01;
  /// Only consulted when `linear_decay` is set; the rate then moves linearly
  /// from `learning_rate` at the first epoch to this value at the last one.
  double final_learning_rate = 0.01;
  bool linear_decay = false;
  std::size_t batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct LossAndGradient {
  double loss = 0.0;
  ParameterVector gradient;
};

/// Softmax class probabilities for one input.
std::vector<double> forward(const ParameterVector& params, const MlpArchitecture& arch,
                            std::span<const double> features);

/// Mean cross-entropy over `batch` plus mu * 0.5 * ||params - global||^2.
/// `global_params` may be null when mu == 0.
LossAndGradient loss_and_gradient(const ParameterVector& params, const MlpArchitecture& arch,
                                  std::span<const LabeledSample> batch,
                                  const ParameterVector* global_params, double mu);

/// One bias-corrected Adam update, in place. Throws NumericalError if the
/// gradient or the updated parameters are not finite.
void adam_step(ParameterVector& params, const ParameterVector& gradient, AdamState& state);

/// Mini-batch Adam over a local dataset, anchored (for mu > 0) at the
/// parameters it started from. Keeps its own optimizer state and shuffling
/// stream so it can be driven epoch by epoch.
class LocalTrainer {
 public:
  LocalTrainer(ParameterVector start, const MlpArchitecture& arch,
               std::span<const LabeledSample> dataset, double mu, std::uint64_t seed,
               const TrainConfig& config, std::size_t planned_epochs);

  /// Runs one pass over the dataset; returns the mean mini-batch loss.
  double run_epoch();

  const ParameterVector& params() const noexcept { return params_; }
  ParameterVector release() && { return std::move(params_); }
  std::size_t epochs_done() const noexcept { return epochs_done_; }

 private:
  double learning_rate_for_epoch(std::size_t epoch) const;

  ParameterVector params_;
  ParameterVector anchor_;
  MlpArchitecture arch_;
  std::span<const LabeledSample> dataset_;
  double mu_;
  TrainConfig config_;
  std::size_t planned_epochs_;
  std::size_t epochs_done_ = 0;
  AdamState adam_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  ParameterVector gradient_;
};

/// Deterministic in all arguments; `global_params` is left untouched.
ParameterVector train_local(const ParameterVector& global_params, const MlpArchitecture& arch,
                            std::span<const LabeledSample> dataset, std::size_t epochs, double mu,
                            std::uint64_t seed, const TrainConfig& config);

/// Parameters drawn i.i.d. from N(0, stddev^2).
ParameterVector init_params(const MlpArchitecture& arch, std::uint64_t seed, double stddev = 0.1);

/// Mean cross-entropy of `params` over `data` (no proximal term).
double mean_loss(const ParameterVector& params, const MlpArchitecture& arch,
                 std::span<const LabeledSample> data);

}  // namespace fedsim
