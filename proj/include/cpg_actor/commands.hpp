#pragma once

// The CLI subcommands as library calls, so tests and the acceptance suite can
// drive them without spawning processes.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cpg_actor/config.hpp"
#include "cpg_actor/trainer.hpp"

namespace cpg_actor {

// <out>/<actor name>/seed_<seed>
std::filesystem::path run_directory(const std::filesystem::path& out, ActorKind actor,
                                    std::uint64_t seed);

// Config stored with a single run: seeds narrowed to that seed.
ExperimentConfig run_config(const ExperimentConfig& cfg, std::uint64_t seed);

struct TrainLogRow {
  int update = 0;
  std::int64_t steps = 0;
  double mean_ep_reward = 0.0;
  double std_ep_reward = 0.0;
  double surrogate = 0.0;
  double value_loss = 0.0;
  double log_std = 0.0;
};

std::vector<TrainLogRow> read_train_log(const std::filesystem::path& path);

// Mean of mean_ep_reward over the last `fraction` of the logged updates.
double final_window_reward(const std::vector<TrainLogRow>& log, double fraction = 0.1);

// True when `dir` already holds a finished run of `cfg` for `seed`.
bool run_is_complete(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                     std::uint64_t seed);

// Trains one seed into `dir` unless an identical finished run is already
// there. Progress lines go to `progress` when it is non-null.
void ensure_trained(const ExperimentConfig& cfg, std::uint64_t seed,
                    const std::filesystem::path& dir, std::ostream* progress);

// Trains every seed of cfg.seeds into run_directory(cfg.out, ...). Returns
// the process exit code: 0 on success, 2 when training aborted on NaN.
int cmd_train(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);

struct EvalCommandOptions {
  int episodes = 10;
  bool deterministic = true;
  std::uint64_t seed = 1000000;
  // Receives metrics.json, trajectory_<k>.csv and oscillators_<k>.csv; empty writes nothing.
  std::filesystem::path out_dir;
};

struct LoadedRun {
  ExperimentConfig cfg;
  Agent agent;
  std::vector<double> params;
  RunningNormalizer normalizer;
  std::int64_t steps = 0;
};

LoadedRun load_run(const std::filesystem::path& checkpoint);

std::string metrics_json(const EvalMetrics& m, std::int64_t steps);
// Hopper trajectory at control rate: the initial state plus one row per step.
void write_trajectory_csv(const std::filesystem::path& path, const EpisodeRecord& rec,
                          double control_dt);
// Oscillator state after each step.
void write_oscillator_csv(const std::filesystem::path& path, const EpisodeRecord& rec,
                          double control_dt);

EvalMetrics cmd_eval(const std::filesystem::path& checkpoint, const EvalCommandOptions& opts);

struct CompareRow {
  ActorKind actor;
  std::vector<std::uint64_t> seeds;
  std::vector<double> final_rewards;
};

// Trains (or reuses) every actor x seed, then writes comparison.csv (aligned
// reward curves) and comparison_summary.csv (final-window means and the ratio
// and one-sided rank-sum p-value of each actor against the first one).
std::vector<CompareRow> cmd_compare(const ExperimentConfig& cfg,
                                    const std::vector<ActorKind>& actors, std::ostream* progress);

// Writes plot-ready CSVs for one run directory into `out_dir`.
void cmd_export_plots(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);

}  // namespace cpg_actor
