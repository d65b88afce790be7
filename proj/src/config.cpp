#include "fedsim/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {

using nlohmann::json;

namespace {

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Reads typed values out of one JSON object and remembers which keys were
// consumed, so leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ValidationError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    used_.insert(key);
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_integer() || it->template get<std::int64_t>() < 0) {
          throw ValidationError(join(path_, key), "expected a non-negative integer");
        }
      }
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ValidationError(join(path_, key), "has the wrong type");
    }
  }

  const json* child(const std::string& key) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  std::string path(const std::string& key) const { return join(path_, key); }

  void reject_unknown() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!used_.count(it.key())) throw ValidationError(join(path_, it.key()), "unknown key");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

std::string list_or_string(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string joined;
    for (const auto& e : v) {
      if (!e.is_string()) throw ValidationError(key, "expected strings");
      if (!joined.empty()) joined += ',';
      joined += e.get<std::string>();
    }
    return joined;
  }
  throw ValidationError(key, "expected a string or a list of strings");
}

template <typename Fn>
auto rethrow_as_validation(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ValidationError&) {
    throw;
  } catch (const ConfigError& e) {
    throw ValidationError(key, e.what());
  }
}

}  // namespace

std::vector<StrategyId> parse_strategy_list(const std::string& text) {
  std::vector<StrategyId> out;
  for (const auto& item : split_csv(text)) {
    const StrategyId s = parse_strategy(item);
    if (std::find(out.begin(), out.end(), s) != out.end()) {
      throw ConfigError("strategy '" + item + "' listed twice");
    }
    out.push_back(s);
  }
  if (out.empty()) throw ConfigError("empty strategy list");
  return out;
}

std::vector<PartitionMode> parse_mode_list(const std::string& text) {
  if (text == "both" || text == "all") {
    return {PartitionMode::kIid, PartitionMode::kDirichletPreference};
  }
  std::vector<PartitionMode> out;
  for (const auto& item : split_csv(text)) {
    const PartitionMode md = parse_partition_mode(item);
    if (std::find(out.begin(), out.end(), md) != out.end()) {
      throw ConfigError("mode '" + item + "' listed twice");
    }
    out.push_back(md);
  }
  if (out.empty()) throw ConfigError("empty mode list");
  return out;
}

std::vector<double> parse_target_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_csv(text)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ValidationError("targets", "'" + item + "' is not a number");
    out.push_back(v);
  }
  return out;
}

void RunManifest::validate() const {
  config.validate();
  if (strategies.empty()) throw ValidationError("strategy", "strategy list is empty");
  std::set<StrategyId> uniq(strategies.begin(), strategies.end());
  if (uniq.size() != strategies.size()) {
    throw ValidationError("strategy", "strategy list contains duplicates");
  }
  if (modes.empty()) throw ValidationError("mode", "mode list is empty");
  std::set<PartitionMode> mode_set(modes.begin(), modes.end());
  if (mode_set.size() != modes.size()) throw ValidationError("mode", "mode list contains duplicates");
  if (output_dir.empty()) throw ValidationError("out", "output directory is required");
  if (!emit_csv && !emit_json) throw ValidationError("emit", "select at least one of csv, json");
  for (double t : targets) {
    if (!std::isfinite(t) || t < 0.0) throw ValidationError("targets", "targets must be >= 0");
    if (target_mode == TargetMode::kRelative && t > 1.0) {
      throw ValidationError("targets", "relative targets must lie in [0,1]");
    }
  }
  if (target_mode == TargetMode::kRelative && !targets.empty() && !run_central) {
    throw ValidationError("central", "relative targets need the centralized baseline");
  }
}

RunManifest parse_config(const json& doc, const FlagOverrides& flags) {
  RunManifest m;
  ExperimentConfig& c = m.config;

  Section root(doc, "");
  root.read("num_clients", c.num_clients);
  root.read("selection_fraction", c.selection_fraction);
  root.read("global_epochs", c.global_epochs);
  root.read("local_epochs", c.local_epochs);
  root.read("mu", c.mu);
  root.read("seed", c.seed);
  root.read("kfold", c.kfold);
  root.read("init_stddev", c.init_stddev);
  root.read("threads", c.threads);
  root.read("central", m.run_central);
  if (const json* v = root.child("eval_metric")) {
    rethrow_as_validation("eval_metric", [&] {
      c.eval_metric = parse_eval_metric(v->is_string() ? v->get<std::string>() : "");
      return 0;
    });
  }
  if (const json* v = root.child("strategy")) {
    const auto text = list_or_string(*v, "strategy");
    m.strategies = rethrow_as_validation("strategy", [&] { return parse_strategy_list(text); });
  }
  if (const json* v = root.child("mode")) {
    const auto text = list_or_string(*v, "mode");
    m.modes = rethrow_as_validation("mode", [&] { return parse_mode_list(text); });
  }
  if (const json* v = root.child("out")) {
    if (!v->is_string()) throw ValidationError("out", "expected a path string");
    m.output_dir = v->get<std::string>();
  }
  if (const json* v = root.child("targets")) {
    if (!v->is_array()) throw ValidationError("targets", "expected a list of numbers");
    m.targets.clear();
    for (const auto& e : *v) {
      if (!e.is_number()) throw ValidationError("targets", "expected a list of numbers");
      m.targets.push_back(e.get<double>());
    }
  }
  if (const json* v = root.child("target_mode")) {
    const std::string s = v->is_string() ? v->get<std::string>() : "";
    if (s == "relative") {
      m.target_mode = TargetMode::kRelative;
    } else if (s == "absolute") {
      m.target_mode = TargetMode::kAbsolute;
    } else {
      throw ValidationError("target_mode", "expected 'relative' or 'absolute'");
    }
  }
  if (const json* v = root.child("emit")) {
    m.emit_csv = m.emit_json = false;
    for (const auto& f : split_csv(list_or_string(*v, "emit"))) {
      if (f == "csv") {
        m.emit_csv = true;
      } else if (f == "json") {
        m.emit_json = true;
      } else {
        throw ValidationError("emit", "unknown format '" + f + "'");
      }
    }
  }
  if (const json* v = root.child("arch")) {
    Section s(*v, "arch");
    s.read("hidden_dims", c.arch.hidden_dims);
    s.reject_unknown();
  }
  if (const json* v = root.child("data")) {
    Section s(*v, "data");
    s.read("num_classes", c.data.num_classes);
    s.read("samples_per_class", c.data.samples_per_class);
    s.read("input_dim", c.data.input_dim);
    s.read("class_separation", c.data.class_separation);
    s.read("noise_std", c.data.noise_std);
    s.reject_unknown();
  }
  if (const json* v = root.child("partition")) {
    Section s(*v, "partition");
    s.read("alpha", c.partition.alpha);
    s.read("preference_boost", c.partition.preference_boost);
    s.read("samples_per_client", c.partition.samples_per_client);
    s.reject_unknown();
  }
  if (const json* v = root.child("train")) {
    Section s(*v, "train");
    s.read("learning_rate", c.train.learning_rate);
    s.read("final_learning_rate", c.train.final_learning_rate);
    s.read("linear_decay", c.train.linear_decay);
    s.read("batch_size", c.train.batch_size);
    s.read("beta1", c.train.beta1);
    s.read("beta2", c.train.beta2);
    s.read("epsilon", c.train.epsilon);
    s.reject_unknown();
  }
  root.reject_unknown();

  if (flags.strategy) m.strategies = rethrow_as_validation("strategy", [&] {
    return parse_strategy_list(*flags.strategy);
  });
  if (flags.mode) m.modes = rethrow_as_validation("mode", [&] { return parse_mode_list(*flags.mode); });
  if (flags.seed) c.seed = *flags.seed;
  if (flags.out) m.output_dir = *flags.out;
  if (flags.targets) m.targets = parse_target_list(*flags.targets);
  if (flags.threads) c.threads = *flags.threads;

  c.arch.input_dim = c.data.input_dim;
  c.arch.num_classes = c.data.num_classes;
  c.strategy = m.strategies.empty() ? StrategyId::kFedAvg : m.strategies.front();
  if (!m.modes.empty()) c.partition.mode = m.modes.front();

  rethrow_as_validation("config", [&] {
    m.validate();
    return 0;
  });
  return m;
}

RunManifest load_config(const std::optional<std::filesystem::path>& file,
                        const FlagOverrides& flags) {
  json doc = json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + file->string());
    try {
      doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
      throw ConfigError("config file " + file->string() + ": " + e.what());
    }
  }
  return parse_config(doc, flags);
}

json to_json(const RunManifest& m) {
  const ExperimentConfig& c = m.config;
  json strategies = json::array();
  for (auto s : m.strategies) strategies.push_back(to_string(s));
  json modes = json::array();
  for (auto md : m.modes) modes.push_back(to_string(md));
  json emit = json::array();
  if (m.emit_csv) emit.push_back("csv");
  if (m.emit_json) emit.push_back("json");
  return json{
      {"num_clients", c.num_clients},
      {"selection_fraction", c.selection_fraction},
      {"global_epochs", c.global_epochs},
      {"local_epochs", c.local_epochs},
      {"mu", c.mu},
      {"seed", c.seed},
      {"kfold", c.kfold},
      {"init_stddev", c.init_stddev},
      {"eval_metric", to_string(c.eval_metric)},
      {"central", m.run_central},
      {"strategy", strategies},
      {"mode", modes},
      {"target_mode", m.target_mode == TargetMode::kRelative ? "relative" : "absolute"},
      {"targets", m.targets},
      {"emit", emit},
      {"arch", {{"hidden_dims", c.arch.hidden_dims}}},
      {"data", {{"num_classes", c.data.num_classes},
                {"samples_per_class", c.data.samples_per_class},
                {"input_dim", c.data.input_dim},
                {"class_separation", c.data.class_separation},
                {"noise_std", c.data.noise_std}}},
      {"partition", {{"alpha", c.partition.alpha},
                     {"preference_boost", c.partition.preference_boost},
                     {"samples_per_client", c.partition.samples_per_client}}},
      {"train", {{"learning_rate", c.train.learning_rate},
                 {"final_learning_rate", c.train.final_learning_rate},
                 {"linear_decay", c.train.linear_decay},
                 {"batch_size", c.train.batch_size},
                 {"beta1", c.train.beta1},
                 {"beta2", c.train.beta2},
                 {"epsilon", c.train.epsilon}}},
  };
}

}  // namespace fedsim
