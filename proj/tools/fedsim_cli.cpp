// fedsim: run strategy sweeps, inspect partitions, score detections.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "fedsim/config.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/sweep.hpp"

namespace {

struct CommonOptions {
  std::string config_file;
  fedsim::FlagOverrides flags;
  std::string strategy, mode, out, targets;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_file, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--strategy", o.strategy, "Comma-separated: fedavg,fedprox,fedavgl,fedla,fedprox_la");
  cmd->add_option("--mode", o.mode, "iid, noniid or both");
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--targets", o.targets, "Comma-separated target levels");
  cmd->add_option("--threads", o.threads, "Client training threads per round")->check(CLI::PositiveNumber);
}

fedsim::RunManifest resolve(CLI::App* cmd, CommonOptions& o) {
  auto given = [&](const char* name) { return cmd->count(name) > 0; };
  if (given("--strategy")) o.flags.strategy = o.strategy;
  if (given("--mode")) o.flags.mode = o.mode;
  if (given("--seed")) o.flags.seed = o.seed;
  if (given("--out")) o.flags.out = o.out;
  if (given("--targets")) o.flags.targets = o.targets;
  if (given("--threads")) o.flags.threads = o.threads;
  std::optional<std::filesystem::path> file;
  if (!o.config_file.empty()) file = o.config_file;
  return fedsim::load_config(file, o.flags);
}

int cmd_run(CLI::App* cmd, CommonOptions& o) {
  const auto manifest = resolve(cmd, o);
  const auto sweep = fedsim::run_sweep(manifest);
  fedsim::write_table_csv(std::cout, sweep.table);
  std::cerr << "artifacts written to " << manifest.output_dir.string() << '\n';
  return sweep.any_failed ? 1 : 0;
}

int cmd_partition(CLI::App* cmd, CommonOptions& o, std::size_t fold) {
  auto manifest = resolve(cmd, o);
  auto config = manifest.config;
  config.partition.mode = manifest.modes.front();
  if (fold >= config.kfold) throw fedsim::ConfigError("--fold must be below kfold");
  const auto folds = fedsim::prepare_folds(config);
  std::cout << fedsim::emit_partition_report(folds[fold].partitions);
  return 0;
}

int cmd_map(const std::string& det_path, const std::string& gt_path, double threshold, int classes) {
  std::ifstream det_in(det_path), gt_in(gt_path);
  if (!det_in) throw fedsim::ConfigError("cannot open " + det_path);
  if (!gt_in) throw fedsim::ConfigError("cannot open " + gt_path);
  const auto dets = fedsim::metrics::read_detections(det_in);
  const auto gts = fedsim::metrics::read_ground_truth(gt_in);
  if (classes <= 0) {
    for (const auto& g : gts) classes = std::max(classes, g.class_id + 1);
    for (const auto& d : dets) classes = std::max(classes, d.class_id + 1);
  }
  std::cout << "class,num_gt,tp,fp,fn,precision,recall,ap\n";
  for (int c = 0; c < classes; ++c) {
    const auto m = fedsim::metrics::match_detections(dets, gts, c, threshold);
    if (m.num_ground_truth == 0) continue;
    const auto [p, r] =
        fedsim::metrics::precision_recall(m.true_positives, m.false_positives, m.false_negatives);
    std::cout << c << ',' << m.num_ground_truth << ',' << m.true_positives << ','
              << m.false_positives << ',' << m.false_negatives << ',' << p << ',' << r << ','
              << fedsim::metrics::average_precision(m.labels, m.num_ground_truth) << '\n';
  }
  std::cout << "mAP@" << threshold << ','
            << fedsim::metrics::mean_average_precision(dets, gts, classes, threshold) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning strategy simulator"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  auto* run = app.add_subcommand("run", "Run a strategy sweep and write rounds/table artifacts");
  add_common(run, run_opts);

  CommonOptions part_opts;
  std::size_t fold = 0;
  auto* part = app.add_subcommand("partition", "Print the client x class count matrix");
  add_common(part, part_opts);
  part->add_option("--fold", fold, "Fold whose training split is partitioned");

  std::string det_path, gt_path;
  double threshold = fedsim::metrics::kDefaultIouThreshold;
  int classes = 0;
  auto* map = app.add_subcommand("map", "Score detections against ground truth");
  map->add_option("--detections", det_path, "image_id class_id confidence x0 y0 x1 y1 per line")
      ->required()
      ->check(CLI::ExistingFile);
  map->add_option("--ground-truth", gt_path, "image_id class_id x0 y0 x1 y1 per line")
      ->required()
      ->check(CLI::ExistingFile);
  map->add_option("--iou", threshold, "IoU threshold")->check(CLI::Range(0.0, 1.0));
  map->add_option("--classes", classes, "Number of classes (default: inferred)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run, run_opts);
    if (part->parsed()) return cmd_partition(part, part_opts, fold);
    if (map->parsed()) return cmd_map(det_path, gt_path, threshold, classes);
  } catch (const fedsim::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
