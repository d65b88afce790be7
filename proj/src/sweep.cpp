#include "fedsim/sweep.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <ostream>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {

using nlohmann::json;

std::string SweepRun::run_id() const {
  return to_string(mode) + "-" + (strategy ? to_string(*strategy) : std::string("central"));
}

namespace {

std::string format_metric(double v) { return fmt::format("{:.6f}", v); }

std::string target_label(double t) { return fmt::format("{:g}", t); }

std::string eg_cell(const std::optional<std::size_t>& r) {
  return r ? std::to_string(*r) : std::string("x");
}

std::string speedup_cell(const std::optional<double>& s) {
  return s ? fmt::format("{:.2f}", *s) : std::string("x");
}

const ComparisonRow* find_row(std::span<const ComparisonRow> rows, StrategyId s) {
  for (const auto& r : rows) {
    if (r.strategy == s && !r.failed) return &r;
  }
  return nullptr;
}

template <typename Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  writer(out);
  if (!out) throw ConfigError("failed while writing " + path.string());
}

std::string join_ids(const std::vector<std::size_t>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(ids[i]);
  }
  return s;
}

std::string join_weights(const RoundRecord& r) {
  std::string s;
  for (std::size_t i = 0; i < r.selected_clients.size(); ++i) {
    if (i) s += ';';
    const auto w = r.weights.weight_of(r.selected_clients[i]);
    s += w ? fmt::format("{:.6f}", *w) : std::string();
  }
  return s;
}

}  // namespace

void fill_speedups(std::span<ComparisonRow> rows) {
  const ComparisonRow* fedavg = find_row(rows, StrategyId::kFedAvg);
  const ComparisonRow* fedprox = find_row(rows, StrategyId::kFedProx);
  for (auto& row : rows) {
    row.speedup.assign(row.rounds_to_target.size(), std::nullopt);
    if (row.failed) continue;
    for (std::size_t t = 0; t < row.rounds_to_target.size(); ++t) {
      std::optional<std::size_t> base;
      if (fedavg && fedavg->rounds_to_target[t]) {
        base = fedavg->rounds_to_target[t];
      } else if (fedprox && fedprox->rounds_to_target[t]) {
        base = fedprox->rounds_to_target[t];
      }
      const auto& own = row.rounds_to_target[t];
      if (base && own) row.speedup[t] = static_cast<double>(*base) / static_cast<double>(*own);
    }
  }
}

SweepResult run_sweep(const RunManifest& manifest, bool write_outputs) {
  manifest.validate();
  SweepResult sweep;
  sweep.table.target_labels = manifest.targets;

  if (write_outputs) std::filesystem::create_directories(manifest.output_dir);

  for (PartitionMode mode : manifest.modes) {
    ExperimentConfig base = manifest.config;
    base.partition.mode = mode;
    ModeTargets mt;
    mt.mode = mode;

    std::vector<FoldData> folds;
    try {
      folds = prepare_folds(base);
    } catch (const Error& e) {
      spdlog::error("{}: preparing folds failed: {}", to_string(mode), e.what());
      sweep.any_failed = true;
      for (StrategyId s : manifest.strategies) {
        ComparisonRow row{mode, s, true, e.what(), 0.0, {}, {}};
        row.rounds_to_target.assign(manifest.targets.size(), std::nullopt);
        row.speedup.assign(manifest.targets.size(), std::nullopt);
        sweep.table.rows.push_back(std::move(row));
      }
      sweep.table.mode_targets.push_back(mt);
      continue;
    }

    if (write_outputs && manifest.emit_csv && !folds.empty()) {
      write_file(manifest.output_dir / ("partitions_" + to_string(mode) + ".csv"),
                 [&](std::ostream& out) { out << emit_partition_report(folds.front().partitions); });
    }

    if (manifest.run_central) {
      SweepRun run{mode, std::nullopt, std::nullopt, {}};
      try {
        spdlog::info("{}: centralized baseline", to_string(mode));
        run.result = run_centralized_baseline(base, folds);
        mt.central_final_metric = run.result->final_metric;
      } catch (const Error& e) {
        run.error = e.what();
        sweep.any_failed = true;
        spdlog::error("{}: centralized baseline failed: {}", to_string(mode), e.what());
      }
      sweep.runs.push_back(std::move(run));
    }

    bool targets_known = true;
    if (manifest.target_mode == TargetMode::kRelative) {
      if (mt.central_final_metric) {
        for (double t : manifest.targets) mt.absolute.push_back(t * *mt.central_final_metric);
      } else {
        targets_known = manifest.targets.empty();
      }
    } else {
      mt.absolute = manifest.targets;
    }

    const std::size_t first_row = sweep.table.rows.size();
    for (StrategyId s : manifest.strategies) {
      ExperimentConfig cfg = base;
      cfg.strategy = s;
      cfg.target_metric_levels = mt.absolute;
      SweepRun run{mode, s, std::nullopt, {}};
      ComparisonRow row{mode, s, false, {}, 0.0, {}, {}};
      try {
        if (!targets_known) throw Error("target levels unavailable: centralized baseline failed");
        spdlog::info("{}: {}", to_string(mode), to_string(s));
        run.result = run_experiment(cfg, folds);
        row.final_metric = run.result->final_metric;
        for (const auto& [level, round] : run.result->rounds_to_target) {
          row.rounds_to_target.push_back(round);
        }
      } catch (const Error& e) {
        run.error = e.what();
        row.failed = true;
        row.error = e.what();
        row.rounds_to_target.assign(manifest.targets.size(), std::nullopt);
        sweep.any_failed = true;
        spdlog::error("{}: {} failed: {}", to_string(mode), to_string(s), e.what());
      }
      sweep.runs.push_back(std::move(run));
      sweep.table.rows.push_back(std::move(row));
    }
    fill_speedups(std::span<ComparisonRow>(sweep.table.rows).subspan(first_row));
    sweep.table.mode_targets.push_back(std::move(mt));
  }

  if (write_outputs) {
    const auto& dir = manifest.output_dir;
    if (manifest.emit_csv) {
      write_file(dir / "rounds.csv", [&](std::ostream& out) { write_rounds_csv(out, sweep.runs); });
      write_file(dir / "table.csv", [&](std::ostream& out) { write_table_csv(out, sweep.table); });
    }
    if (manifest.emit_json) {
      write_file(dir / "table.json",
                 [&](std::ostream& out) { out << table_to_json(sweep.table).dump(2) << '\n'; });
    }
    write_file(dir / "manifest.json",
               [&](std::ostream& out) { out << to_json(manifest).dump(2) << '\n'; });
  }
  return sweep;
}

void write_rounds_csv(std::ostream& out, std::span<const SweepRun> runs) {
  out << "run_id,mode,strategy,fold,round,eval_metric,train_loss_mean,selected_clients,weights\n";
  for (const auto& run : runs) {
    if (!run.result) continue;
    const std::string id = run.run_id();
    const std::string mode = to_string(run.mode);
    const std::string strategy = run.strategy ? to_string(*run.strategy) : "central";
    auto row = [&](const RoundRecord& r, const std::string& fold) {
      out << id << ',' << mode << ',' << strategy << ',' << fold << ',' << r.round_index << ','
          << format_metric(r.eval_metric) << ',' << format_metric(r.train_loss_mean) << ','
          << join_ids(r.selected_clients) << ',' << join_weights(r) << '\n';
    };
    for (const auto& fold : run.result->fold_records) {
      for (const auto& r : fold) row(r, std::to_string(r.fold.value_or(0)));
    }
    for (const auto& r : run.result->records) row(r, "mean");
  }
}

void write_table_csv(std::ostream& out, const ComparisonTable& table) {
  out << "mode,strategy,final_metric";
  for (double t : table.target_labels) {
    out << ",eg_at_" << target_label(t) << ",speedup_at_" << target_label(t);
  }
  out << '\n';
  for (const auto& row : table.rows) {
    out << to_string(row.mode) << ',' << to_string(row.strategy) << ','
        << (row.failed ? std::string("failed") : format_metric(row.final_metric));
    for (std::size_t t = 0; t < table.target_labels.size(); ++t) {
      out << ',' << eg_cell(row.rounds_to_target[t]) << ',' << speedup_cell(row.speedup[t]);
    }
    out << '\n';
  }
}

json table_to_json(const ComparisonTable& table) {
  json modes = json::array();
  for (const auto& mt : table.mode_targets) {
    json targets = json::array();
    for (std::size_t t = 0; t < table.target_labels.size(); ++t) {
      json entry{{"level", table.target_labels[t]}};
      entry["absolute"] = t < mt.absolute.size() ? json(mt.absolute[t]) : json(nullptr);
      targets.push_back(entry);
    }
    json rows = json::array();
    for (const auto& row : table.rows) {
      if (row.mode != mt.mode) continue;
      json r{{"strategy", to_string(row.strategy)}, {"failed", row.failed}};
      r["final_metric"] = row.failed ? json(nullptr) : json(row.final_metric);
      if (row.failed) r["error"] = row.error;
      json cells = json::array();
      for (std::size_t t = 0; t < table.target_labels.size(); ++t) {
        json cell{{"level", table.target_labels[t]}};
        cell["eg"] = row.rounds_to_target[t] ? json(*row.rounds_to_target[t]) : json("x");
        cell["speedup"] = row.speedup[t] ? json(*row.speedup[t]) : json("x");
        cells.push_back(cell);
      }
      r["targets"] = cells;
      rows.push_back(r);
    }
    json m{{"mode", to_string(mt.mode)}, {"targets", targets}, {"rows", rows}};
    m["central_final_metric"] =
        mt.central_final_metric ? json(*mt.central_final_metric) : json(nullptr);
    modes.push_back(m);
  }
  return json{{"modes", modes}};
}

std::string emit_partition_report(std::span<const ClientPartition> partitions) {
  std::ostringstream out;
  write_partition_csv(out, partitions);
  return out.str();
}

}  // namespace fedsim
