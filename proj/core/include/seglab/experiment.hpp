#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "seglab/data.hpp"
#include "seglab/metrics.hpp"
#include "seglab/trainer.hpp"

namespace seglab {

// One experiment = one dataset split + one trainer configuration, run once
// per seed. Loaded from a flat JSON document; unknown keys are rejected and
// the resolved form is written verbatim into every run directory.
struct ExperimentConfig {
  std::string name = "experiment";
  std::string dataset;
  std::string out_dir = "runs";
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  double labeled_ratio = 0.125;
  std::uint64_t split_seed = 0;
  TrainConfig train;

  void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);
void write_resolved_config(const ExperimentConfig& cfg, const std::string& path);

// Number of worker threads for per-seed runs: SEGLAB_JOBS if set, else the
// hardware concurrency, capped by the task count.
int run_jobs(std::size_t tasks);

struct SeedRun {
  std::uint64_t seed = 0;
  std::string dir;                 // seed_<s>/ under the experiment directory
  MetricsReport report;            // test-split metrics of the final checkpoint
  std::vector<StepLosses> trace;
};

struct ExperimentResult {
  std::string dir;                 // experiment directory
  std::vector<SeedRun> runs;
  MetricsReport aggregate;
};

// Trains every seed (in parallel), writing checkpoint.bin, losses.csv and
// the resolved config under <out_dir>/<name>/.
ExperimentResult cmd_train(const ExperimentConfig& cfg, std::ostream& log);

// Generates a synthetic dataset from a spec file and prints achieved ratios.
DatasetManifest cmd_gen_data(const std::string& spec_path, const std::string& out_dir,
                             std::ostream& log);

// Evaluates the checkpoints under run_dir (a single run or a directory of
// seed_*/ runs) against the manifest's test split and writes metrics.csv.
MetricsReport cmd_eval(const std::string& run_dir, const std::string& dataset,
                       const std::string& out_csv, std::ostream& log);

// The five ablation presets over both labeled ratios (1/8, 1/4); writes
// comparison.csv plus loss/IoU SVG charts under <out_dir>/<name>_ablation/.
struct AblatePreset {
  std::string name;
  TrainerVariant variant;
  StrongMix strong_mix;
  bool use_sufd;
};
const std::vector<AblatePreset>& ablate_presets();
std::string cmd_ablate(const ExperimentConfig& base, std::ostream& log);

// Loss-trace CSV (step, lr, loss_sup, loss_unsup, loss_gen, loss_disc).
void write_loss_csv(const std::string& path, const std::vector<StepLosses>& trace);
std::vector<StepLosses> read_loss_csv(const std::string& path);

// Metrics CSV with one row per seed plus an aggregate "mean+-std" row.
void write_metrics_csv(const std::string& path, const std::string& variant,
                       double labeled_ratio, const std::vector<std::string>& class_names,
                       const std::vector<MetricsReport>& per_seed,
                       const MetricsReport& aggregate);

}  // namespace seglab
