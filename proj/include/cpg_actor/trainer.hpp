#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cpg_actor/actors.hpp"
#include "cpg_actor/config.hpp"
#include "cpg_actor/normalizer.hpp"
#include "cpg_actor/ppo.hpp"

namespace cpg_actor {

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Worker threads: min(requested, CPG_ACTOR_THREADS if set, hardware threads).
std::size_t thread_budget(std::size_t requested);

Agent make_agent(const ExperimentConfig& cfg);

struct UpdateStats {
  int update = 0;
  std::int64_t steps = 0;
  double mean_ep_reward = 0.0;  // NaN when no episode finished in the rollout
  double std_ep_reward = 0.0;
  int episodes = 0;
  double surrogate = 0.0;
  double value_loss = 0.0;
  double log_std = 0.0;  // mean over action dimensions
  double grad_norm = 0.0;
  double grad_norm_cpg = 0.0;          // CPG parameter block (CPG actors only)
  double grad_norm_feedback_out = 0.0;  // feedback output layer (closed loop only)
  int faults = 0;                      // episodes cut short by a physics fault
};

struct TrainResult {
  std::vector<UpdateStats> log;
  std::vector<double> params;
  RunningNormalizer normalizer;
  std::int64_t steps = 0;
  std::optional<WarmStartResult> warm_start;
};

// Called after every update with the current parameters.
using UpdateHook = std::function<void(const UpdateStats&, std::span<const double> params)>;

// Runs PPO for cfg.actor from `seed` until at least total_steps environment
// steps have been collected. When out_dir is non-empty it receives
// train_log.csv, grad_log.csv, params.csv (CPG actors), warm_start_loss.csv
// (warm-started actors) and checkpoints.
TrainResult train(const ExperimentConfig& cfg, std::uint64_t seed, std::int64_t total_steps,
                  const std::filesystem::path& out_dir, const UpdateHook& hook = {});

// Mean of mean_ep_reward over the last `fraction` of the updates (at least one).
double final_window_reward(const std::vector<UpdateStats>& log, double fraction = 0.1);

struct EpisodeRecord {
  HopperState initial;
  std::vector<StepResult> steps;
  std::vector<CpgState> cpg;  // per step, when a CPG is present
  double reward = 0.0;
  double peak_height = 0.0;
};

struct EvalMetrics {
  int episodes = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double mean_length = 0.0;
  double mean_peak_height = 0.0;
  double mean_foot_slip = 0.0;
  double mean_abs_delta_action = 0.0;     // rad per control step
  double mean_desired_velocity = 0.0;     // |delta action| / dt, rad/s
  double velocity_band_fraction = 0.0;    // steps with every |desired velocity| <= limit
  // Per joint, |desired velocity| averaged over episodes at each step; share of
  // (step, joint) points of that profile within the limit.
  double velocity_profile_band_fraction = 0.0;
  bool has_cpg = false;
  double theta_dot_variance = 0.0;        // per-episode variance, averaged
  double r_ddot_variance = 0.0;
};

struct EvalOptions {
  int episodes = 10;
  bool deterministic = true;
  std::uint64_t seed = 1000000;
  bool keep_records = false;
};

struct EvalResult {
  EvalMetrics metrics;
  std::vector<EpisodeRecord> records;
};

EvalResult evaluate(const ExperimentConfig& cfg, const Agent& agent,
                    std::span<const double> params, const RunningNormalizer& normalizer,
                    const EvalOptions& opts);

}  // namespace cpg_actor
