#include "fedsim/federation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <thread>

#include "fedsim/errors.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/seeding.hpp"

namespace fedsim {

std::string to_string(EvalMetric m) { return m == EvalMetric::kAccuracy ? "accuracy" : "macro_f1"; }

EvalMetric parse_eval_metric(const std::string& text) {
  if (text == "accuracy") return EvalMetric::kAccuracy;
  if (text == "macro_f1") return EvalMetric::kMacroF1;
  throw ConfigError("unknown eval metric '" + text + "'");
}

void ExperimentConfig::validate() const {
  if (num_clients == 0) throw ValidationError("num_clients", "must be positive");
  if (!(selection_fraction > 0.0 && selection_fraction <= 1.0)) {
    throw ValidationError("selection_fraction", "selection_fraction out of (0,1]");
  }
  if (global_epochs == 0) throw ValidationError("global_epochs", "must be positive");
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw ValidationError("mu", "must be a finite value >= 0");
  if (kfold < 2) throw ValidationError("kfold", "must be at least 2");
  if (threads == 0) throw ValidationError("threads", "must be positive");
  if (!(init_stddev > 0.0)) throw ValidationError("init_stddev", "must be positive");
  for (double t : target_metric_levels) {
    if (!std::isfinite(t)) throw ValidationError("targets", "must be finite");
  }
  arch.validate();
  data.validate();
  train.validate();
  resolved_partition().validate();
  const std::size_t total = data.num_classes * data.samples_per_class;
  const std::size_t smallest_train = total - (total + kfold - 1) / kfold;
  if (num_clients * partition.samples_per_client > smallest_train) {
    throw ValidationError("partition.samples_per_client",
                          "num_clients * samples_per_client exceeds the smallest training split (" +
                              std::to_string(smallest_train) + " samples)");
  }
  if (arch.input_dim != data.input_dim) {
    throw ValidationError("arch.input_dim", "must equal data.input_dim");
  }
  if (arch.num_classes != data.num_classes) {
    throw ValidationError("arch.num_classes", "must equal data.num_classes");
  }
}

std::size_t ExperimentConfig::clients_per_round() const {
  const auto m = static_cast<std::size_t>(std::llround(selection_fraction * static_cast<double>(num_clients)));
  return std::clamp<std::size_t>(m, 1, num_clients);
}

double ExperimentConfig::effective_mu() const { return uses_proximal_term(strategy) ? mu : 0.0; }

PartitionSpec ExperimentConfig::resolved_partition() const {
  PartitionSpec p = partition;
  p.num_clients = num_clients;
  p.seed = derive_seed(seed, {tag(StreamTag::kPartition)});
  return p;
}

SyntheticDatasetSpec ExperimentConfig::resolved_data() const {
  SyntheticDatasetSpec d = data;
  d.seed = derive_seed(seed, {tag(StreamTag::kData)});
  return d;
}

std::vector<std::pair<std::size_t, double>> RunResult::curve() const {
  std::vector<std::pair<std::size_t, double>> c;
  c.reserve(records.size());
  for (const auto& r : records) c.emplace_back(r.round_index, r.eval_metric);
  return c;
}

std::vector<FoldData> prepare_folds(const ExperimentConfig& config) {
  config.validate();
  const auto dataset = generate_synthetic(config.resolved_data());
  const auto split = kfold_split(dataset, config.kfold, config.seed);
  const auto base_partition = config.resolved_partition();

  std::vector<FoldData> folds;
  folds.reserve(config.kfold);
  for (std::size_t f = 0; f < config.kfold; ++f) {
    FoldData fd;
    fd.fold = f;
    std::vector<LabeledSample> train;
    for (std::size_t i : split.train_indices(f)) train.push_back(dataset[i]);
    for (std::size_t i : split.test_indices(f)) fd.test.push_back(dataset[i]);
    PartitionSpec ps = base_partition;
    ps.seed = derive_seed(base_partition.seed, {f});
    fd.partitions = partition(train, ps, config.data.num_classes);
    fd.initial = init_params(config.arch, derive_seed(config.seed, {tag(StreamTag::kInit), f}),
                             config.init_stddev);
    fd.stream_seed = derive_seed(config.seed, {f});
    folds.push_back(std::move(fd));
  }
  return folds;
}

std::vector<std::size_t> select_clients(std::size_t round_index, const ExperimentConfig& config,
                                        std::uint64_t stream_seed) {
  std::vector<std::size_t> ids(config.num_clients);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(stream_seed, {tag(StreamTag::kSelect), round_index}));
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(config.clients_per_round());
  std::sort(ids.begin(), ids.end());
  return ids;
}

double evaluate(const ParameterVector& params, const MlpArchitecture& arch,
                std::span<const LabeledSample> data, EvalMetric metric) {
  std::vector<std::vector<double>> probs;
  std::vector<std::size_t> labels;
  probs.reserve(data.size());
  labels.reserve(data.size());
  for (const auto& s : data) {
    probs.push_back(forward(params, arch, s.features));
    labels.push_back(s.label);
  }
  const auto scores = metrics::classification_metrics(probs, labels);
  return metric == EvalMetric::kAccuracy ? scores.accuracy : scores.macro_f1;
}

namespace {

struct ClientResult {
  ParameterVector params;
  double loss = 0.0;
  std::exception_ptr error;
};

template <typename Task>
void run_tasks(std::size_t count, std::size_t threads, Task&& task) {
  const std::size_t workers = std::min(threads, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) task(i);
    });
  }
}

[[noreturn]] void rethrow_with_context(std::exception_ptr error, std::size_t round_index,
                                       std::size_t client_id) {
  const std::string where =
      "round " + std::to_string(round_index) + ", client " + std::to_string(client_id) + ": ";
  try {
    std::rethrow_exception(error);
  } catch (const NumericalError& e) {
    throw NumericalError(where + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + e.what());
  } catch (const Error& e) {
    throw Error(where + e.what());
  }
}

}  // namespace

RoundOutcome run_round(const ParameterVector& global_params,
                       std::span<const ClientPartition> partitions, const ExperimentConfig& config,
                       std::size_t round_index, std::uint64_t stream_seed,
                       std::span<const LabeledSample> eval_set) {
  const auto started = std::chrono::steady_clock::now();
  if (partitions.size() != config.num_clients) {
    throw ConfigError("run_round: " + std::to_string(partitions.size()) + " partitions for " +
                      std::to_string(config.num_clients) + " clients");
  }
  RoundRecord record;
  record.round_index = round_index;
  record.selected_clients = select_clients(round_index, config, stream_seed);
  const double mu = config.effective_mu();

  std::vector<ClientResult> results(record.selected_clients.size());
  run_tasks(results.size(), config.threads, [&](std::size_t i) {
    const std::size_t id = record.selected_clients[i];
    const auto& data = partitions[id].samples;
    try {
      const auto seed = derive_seed(stream_seed, {tag(StreamTag::kClient), round_index, id});
      results[i].params =
          train_local(global_params, config.arch, data, config.local_epochs, mu, seed, config.train);
      results[i].loss = mean_loss(results[i].params, config.arch, data);
    } catch (...) {
      results[i].error = std::current_exception();
    }
  });

  std::vector<ClientUpdate> updates;
  updates.reserve(results.size());
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const std::size_t id = record.selected_clients[i];
    if (results[i].error) rethrow_with_context(results[i].error, round_index, id);
    loss_sum += results[i].loss;
    updates.push_back(
        ClientUpdate{id, std::move(results[i].params), partitions[id].histogram,
                     partitions[id].histogram.total()});
  }
  record.train_loss_mean = loss_sum / static_cast<double>(results.size());

  RoundOutcome out;
  try {
    record.weights = weights_for(config.strategy, updates);
    out.global = aggregate(updates, record.weights);
  } catch (const NumericalError& e) {
    throw NumericalError("round " + std::to_string(round_index) + ": " + e.what());
  }
  record.eval_metric = evaluate(out.global, config.arch, eval_set, config.eval_metric);
  record.wall_time = std::chrono::steady_clock::now() - started;
  out.record = std::move(record);
  return out;
}

RunResult summarize(std::vector<std::vector<RoundRecord>> fold_records,
                    std::span<const double> targets) {
  RunResult result;
  if (fold_records.empty()) return result;
  const std::size_t rounds = fold_records.front().size();
  for (std::size_t r = 0; r < rounds; ++r) {
    RoundRecord avg;
    avg.round_index = fold_records.front()[r].round_index;
    for (const auto& fr : fold_records) {
      avg.eval_metric += fr[r].eval_metric;
      avg.train_loss_mean += fr[r].train_loss_mean;
      avg.wall_time += fr[r].wall_time;
    }
    avg.eval_metric /= static_cast<double>(fold_records.size());
    avg.train_loss_mean /= static_cast<double>(fold_records.size());
    result.records.push_back(std::move(avg));
  }
  if (!result.records.empty()) result.final_metric = result.records.back().eval_metric;
  const auto curve = result.curve();
  for (double t : targets) {
    result.rounds_to_target.emplace_back(t, curve.empty() ? std::nullopt
                                                          : metrics::rounds_to_target(curve, t));
  }
  result.fold_records = std::move(fold_records);
  return result;
}

RunResult run_experiment(const ExperimentConfig& config, const RoundObserver& observer) {
  const auto folds = prepare_folds(config);
  return run_experiment(config, folds, observer);
}

RunResult run_experiment(const ExperimentConfig& config, std::span<const FoldData> folds,
                         const RoundObserver& observer) {
  config.validate();
  std::vector<std::vector<RoundRecord>> per_fold;
  for (const auto& fd : folds) {
    std::vector<RoundRecord> records;
    ParameterVector global = fd.initial;
    for (std::size_t r = 1; r <= config.global_epochs; ++r) {
      RoundOutcome outcome;
      try {
        outcome = run_round(global, fd.partitions, config, r, fd.stream_seed, fd.test);
      } catch (const NumericalError& e) {
        throw NumericalError("fold " + std::to_string(fd.fold) + ", " + e.what());
      } catch (const Error& e) {
        throw Error("fold " + std::to_string(fd.fold) + ", " + e.what());
      }
      global = std::move(outcome.global);
      outcome.record.fold = fd.fold;
      if (observer) observer(outcome.record);
      records.push_back(std::move(outcome.record));
    }
    per_fold.push_back(std::move(records));
  }
  return summarize(std::move(per_fold), config.target_metric_levels);
}

RunResult run_centralized_baseline(const ExperimentConfig& config, const RoundObserver& observer) {
  const auto folds = prepare_folds(config);
  return run_centralized_baseline(config, folds, observer);
}

RunResult run_centralized_baseline(const ExperimentConfig& config, std::span<const FoldData> folds,
                                   const RoundObserver& observer) {
  config.validate();
  std::vector<std::vector<RoundRecord>> per_fold;
  for (const auto& fd : folds) {
    std::vector<LabeledSample> pooled;
    for (const auto& p : fd.partitions) {
      pooled.insert(pooled.end(), p.samples.begin(), p.samples.end());
    }
    const std::size_t total_epochs = config.global_epochs * config.local_epochs;
    LocalTrainer trainer(fd.initial, config.arch, pooled, 0.0,
                         derive_seed(config.seed, {tag(StreamTag::kCentral), fd.fold}),
                         config.train, total_epochs);
    std::vector<RoundRecord> records;
    for (std::size_t r = 1; r <= config.global_epochs; ++r) {
      const auto started = std::chrono::steady_clock::now();
      double loss_sum = 0.0;
      for (std::size_t e = 0; e < config.local_epochs; ++e) loss_sum += trainer.run_epoch();
      RoundRecord rec;
      rec.round_index = r;
      rec.fold = fd.fold;
      rec.train_loss_mean = config.local_epochs > 0
                                ? loss_sum / static_cast<double>(config.local_epochs)
                                : mean_loss(trainer.params(), config.arch, pooled);
      rec.eval_metric = evaluate(trainer.params(), config.arch, fd.test, config.eval_metric);
      rec.wall_time = std::chrono::steady_clock::now() - started;
      if (observer) observer(rec);
      records.push_back(std::move(rec));
    }
    per_fold.push_back(std::move(records));
  }
  return summarize(std::move(per_fold), config.target_metric_levels);
}

}  // namespace fedsim
