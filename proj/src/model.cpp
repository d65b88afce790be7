#include "fedsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedsim/errors.hpp"

namespace fedsim {

bool ParameterVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void MlpArchitecture::validate() const {
  if (input_dim == 0) throw ConfigError("architecture: input_dim must be positive");
  if (num_classes < 2) throw ConfigError("architecture: num_classes must be at least 2");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ConfigError("architecture: hidden layer widths must be positive");
  }
}

std::vector<MlpArchitecture::Layer> MlpArchitecture::layers() const {
  std::vector<Layer> out;
  std::size_t offset = 0;
  std::size_t in = input_dim;
  auto push = [&](std::size_t width) {
    Layer l{in, width, offset, offset + in * width};
    offset = l.bias_offset + width;
    out.push_back(l);
    in = width;
  };
  for (std::size_t h : hidden_dims) push(h);
  push(num_classes);
  return out;
}

std::size_t MlpArchitecture::parameter_count() const {
  const auto ls = layers();
  return ls.back().bias_offset + ls.back().out;
}

AdamState AdamState::zeros(std::size_t length, double lr) {
  AdamState s;
  s.first_moment.assign(length, 0.0);
  s.second_moment.assign(length, 0.0);
  s.lr = lr;
  return s;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (linear_decay && !(final_learning_rate > 0.0)) {
    throw ConfigError("train: final_learning_rate must be positive");
  }
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must lie in (0,1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("train: epsilon must be positive");
}

namespace {

void check_shapes(const ParameterVector& params, const MlpArchitecture& arch) {
  arch.validate();
  if (params.size() != arch.parameter_count()) {
    throw ConfigError("parameter vector has length " + std::to_string(params.size()) +
                      ", architecture needs " + std::to_string(arch.parameter_count()));
  }
}

// Activations of every layer for one sample; acts[0] is the input, the last
// entry holds softmax probabilities.
struct Pass {
  std::vector<std::vector<double>> acts;
  std::vector<double> logits;
  double log_norm = 0.0;  // log-sum-exp of the logits
};

void run_forward(std::span<const double> params, const std::vector<MlpArchitecture::Layer>& layers,
                 std::span<const double> features, Pass& pass) {
  pass.acts.resize(layers.size() + 1);
  pass.acts[0].assign(features.begin(), features.end());
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& l = layers[li];
    const auto& a = pass.acts[li];
    auto& z = pass.acts[li + 1];
    z.resize(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
      const double* w = params.data() + l.weight_offset + o * l.in;
      double acc = params[l.bias_offset + o];
      for (std::size_t i = 0; i < l.in; ++i) acc += w[i] * a[i];
      z[o] = acc;
    }
    const bool last = li + 1 == layers.size();
    if (!last) {
      for (double& v : z) v = std::tanh(v);
    } else {
      pass.logits = z;
      const double mx = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double& v : z) {
        v = std::exp(v - mx);
        sum += v;
      }
      for (double& v : z) v /= sum;
      pass.log_norm = mx + std::log(sum);
    }
  }
}

// Cross-entropy of one sample; adds scale * dCE/dparams into grad.
double accumulate_sample(std::span<const double> params,
                         const std::vector<MlpArchitecture::Layer>& layers,
                         const LabeledSample& sample, double scale, std::span<double> grad,
                         Pass& pass, std::vector<double>& delta, std::vector<double>& prev_delta) {
  run_forward(params, layers, sample.features, pass);
  const auto& probs = pass.acts.back();
  const double loss = pass.log_norm - pass.logits[sample.label];

  delta.assign(probs.begin(), probs.end());
  delta[sample.label] -= 1.0;
  for (double& d : delta) d *= scale;

  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& l = layers[li];
    const auto& a_in = pass.acts[li];
    for (std::size_t o = 0; o < l.out; ++o) {
      double* gw = grad.data() + l.weight_offset + o * l.in;
      const double d = delta[o];
      for (std::size_t i = 0; i < l.in; ++i) gw[i] += d * a_in[i];
      grad[l.bias_offset + o] += d;
    }
    if (li == 0) break;
    prev_delta.assign(l.in, 0.0);
    for (std::size_t o = 0; o < l.out; ++o) {
      const double* w = params.data() + l.weight_offset + o * l.in;
      const double d = delta[o];
      for (std::size_t i = 0; i < l.in; ++i) prev_delta[i] += w[i] * d;
    }
    for (std::size_t i = 0; i < l.in; ++i) prev_delta[i] *= 1.0 - a_in[i] * a_in[i];
    std::swap(delta, prev_delta);
  }
  return loss;
}

template <typename IndexRange>
double batch_loss_and_gradient(const ParameterVector& params,
                               const std::vector<MlpArchitecture::Layer>& layers,
                               std::span<const LabeledSample> data, const IndexRange& indices,
                               std::size_t count, const ParameterVector* anchor, double mu,
                               ParameterVector& grad) {
  std::fill(grad.begin(), grad.end(), 0.0);
  Pass pass;
  std::vector<double> delta, prev_delta;
  const double scale = 1.0 / static_cast<double>(count);
  double loss = 0.0;
  for (std::size_t idx : indices) {
    loss += accumulate_sample(params.values(), layers, data[idx], scale, grad.values(), pass, delta,
                              prev_delta);
  }
  loss *= scale;
  if (mu > 0.0) {
    double sq = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double diff = params[k] - (*anchor)[k];
      sq += diff * diff;
      grad[k] += mu * diff;
    }
    loss += mu * 0.5 * sq;
  }
  return loss;
}

void check_sample(const LabeledSample& s, const MlpArchitecture& arch) {
  if (s.features.size() != arch.input_dim) {
    throw ConfigError("sample has " + std::to_string(s.features.size()) +
                      " features, architecture expects " + std::to_string(arch.input_dim));
  }
  if (s.label >= arch.num_classes) {
    throw InvalidInputError("sample label " + std::to_string(s.label) + " out of range");
  }
}

}  // namespace

std::vector<double> forward(const ParameterVector& params, const MlpArchitecture& arch,
                            std::span<const double> features) {
  check_shapes(params, arch);
  if (features.size() != arch.input_dim) {
    throw ConfigError("forward: expected " + std::to_string(arch.input_dim) + " features, got " +
                      std::to_string(features.size()));
  }
  Pass pass;
  run_forward(params.values(), arch.layers(), features, pass);
  return std::move(pass.acts.back());
}

LossAndGradient loss_and_gradient(const ParameterVector& params, const MlpArchitecture& arch,
                                  std::span<const LabeledSample> batch,
                                  const ParameterVector* global_params, double mu) {
  check_shapes(params, arch);
  if (batch.empty()) throw InvalidInputError("loss_and_gradient: empty batch");
  if (mu < 0.0 || !std::isfinite(mu)) throw ConfigError("loss_and_gradient: mu must be >= 0");
  if (mu > 0.0) {
    if (global_params == nullptr) {
      throw ConfigError("loss_and_gradient: mu > 0 requires global parameters");
    }
    if (global_params->size() != params.size()) {
      throw ConfigError("loss_and_gradient: global parameters have the wrong length");
    }
  }
  for (const auto& s : batch) check_sample(s, arch);

  LossAndGradient out{0.0, ParameterVector(params.size())};
  std::vector<std::size_t> indices(batch.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  out.loss = batch_loss_and_gradient(params, arch.layers(), batch, indices, batch.size(),
                                     global_params, mu, out.gradient);
  return out;
}

void adam_step(ParameterVector& params, const ParameterVector& gradient, AdamState& state) {
  const std::size_t n = params.size();
  if (gradient.size() != n || state.first_moment.size() != n || state.second_moment.size() != n) {
    throw ConfigError("adam_step: parameter, gradient and moment lengths differ");
  }
  if (!gradient.all_finite()) {
    throw NumericalError("non-finite gradient at optimizer step " +
                         std::to_string(state.step_count + 1));
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < n; ++k) {
    const double g = gradient[k];
    double& m = state.first_moment[k];
    double& v = state.second_moment[k];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    params[k] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  if (!params.all_finite()) {
    throw NumericalError("non-finite parameters after optimizer step " +
                         std::to_string(state.step_count));
  }
}

LocalTrainer::LocalTrainer(ParameterVector start, const MlpArchitecture& arch,
                           std::span<const LabeledSample> dataset, double mu, std::uint64_t seed,
                           const TrainConfig& config, std::size_t planned_epochs)
    : params_(std::move(start)),
      arch_(arch),
      dataset_(dataset),
      mu_(mu),
      config_(config),
      planned_epochs_(planned_epochs),
      rng_(seed) {
  check_shapes(params_, arch_);
  config_.validate();
  if (dataset_.empty()) throw InvalidInputError("local training needs a non-empty dataset");
  if (mu_ < 0.0 || !std::isfinite(mu_)) throw ConfigError("mu must be a finite value >= 0");
  for (const auto& s : dataset_) check_sample(s, arch_);
  if (mu_ > 0.0) anchor_ = params_;
  adam_ = AdamState::zeros(params_.size(), config_.learning_rate);
  adam_.beta1 = config_.beta1;
  adam_.beta2 = config_.beta2;
  adam_.epsilon = config_.epsilon;
  order_.resize(dataset_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  gradient_ = ParameterVector(params_.size());
}

double LocalTrainer::learning_rate_for_epoch(std::size_t epoch) const {
  if (!config_.linear_decay || planned_epochs_ <= 1) return config_.learning_rate;
  const double frac = static_cast<double>(std::min(epoch, planned_epochs_ - 1)) /
                      static_cast<double>(planned_epochs_ - 1);
  return config_.learning_rate + (config_.final_learning_rate - config_.learning_rate) * frac;
}

double LocalTrainer::run_epoch() {
  adam_.lr = learning_rate_for_epoch(epochs_done_);
  std::shuffle(order_.begin(), order_.end(), rng_);
  const auto layers = arch_.layers();
  const ParameterVector* anchor = mu_ > 0.0 ? &anchor_ : nullptr;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t begin = 0; begin < order_.size(); begin += config_.batch_size) {
    const std::size_t end = std::min(order_.size(), begin + config_.batch_size);
    std::span<const std::size_t> idx(order_.data() + begin, end - begin);
    loss_sum += batch_loss_and_gradient(params_, layers, dataset_, idx, idx.size(), anchor, mu_,
                                        gradient_);
    adam_step(params_, gradient_, adam_);
    ++batches;
  }
  ++epochs_done_;
  return loss_sum / static_cast<double>(batches);
}

ParameterVector train_local(const ParameterVector& global_params, const MlpArchitecture& arch,
                            std::span<const LabeledSample> dataset, std::size_t epochs, double mu,
                            std::uint64_t seed, const TrainConfig& config) {
  LocalTrainer trainer(global_params, arch, dataset, mu, seed, config, epochs);
  for (std::size_t e = 0; e < epochs; ++e) trainer.run_epoch();
  return std::move(trainer).release();
}

ParameterVector init_params(const MlpArchitecture& arch, std::uint64_t seed, double stddev) {
  arch.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  ParameterVector p(arch.parameter_count());
  for (double& v : p) v = normal(rng);
  return p;
}

double mean_loss(const ParameterVector& params, const MlpArchitecture& arch,
                 std::span<const LabeledSample> data) {
  check_shapes(params, arch);
  if (data.empty()) throw InvalidInputError("mean_loss: empty dataset");
  const auto layers = arch.layers();
  Pass pass;
  double sum = 0.0;
  for (const auto& s : data) {
    check_sample(s, arch);
    run_forward(params.values(), layers, s.features, pass);
    sum += pass.log_norm - pass.logits[s.label];
  }
  return sum / static_cast<double>(data.size());
}

}  // namespace fedsim
