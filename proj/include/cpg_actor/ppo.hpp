#pragma once

// Proximal policy optimization pieces: diagonal Gaussian policy head, GAE,
// the clipped surrogate, and the per-sample taped loss used for updates.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "cpg_actor/actors.hpp"
#include "cpg_actor/autodiff.hpp"
#include "cpg_actor/mlp.hpp"

namespace cpg_actor {

struct PpoConfig {
  double clip = 0.2;
  double gamma = 0.99;
  double lam = 0.95;
  double lr = 3e-4;
  std::size_t minibatch = 512;
  int epochs = 4;
  std::size_t rollout = 2048;  // steps per worker per update
  std::size_t workers = 8;
  double vf_coef = 0.5;
  double ent_coef = 0.0;
  double max_grad_norm = 0.5;
  double init_log_std = -1.0;
  std::vector<std::size_t> critic_hidden = {64, 64};

  void validate() const;
  bool operator==(const PpoConfig&) const = default;
};

double gaussian_log_prob(std::span<const double> action, std::span<const double> mean,
                         std::span<const double> log_std);
double gaussian_entropy(std::span<const double> log_std);

struct GaussianSample {
  std::vector<double> action;
  double log_prob = 0.0;
};

GaussianSample sample_action(std::span<const double> mean, std::span<const double> log_std,
                             std::mt19937_64& rng);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// values holds one entry per reward plus the bootstrap value.
// dones[t] != 0 means the episode ended after step t.
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const double> dones, double gamma, double lam);

// In place: zero mean, unit population standard deviation (+1e-8).
void normalize_advantages(std::span<double> adv);

// min(r A, clip(r, 1 - eps, 1 + eps) A)
double clipped_surrogate(double ratio, double advantage, double eps);

struct PpoLossTerms {
  double loss = 0.0;
  double surrogate = 0.0;   // mean clipped surrogate (to be maximized)
  double value_loss = 0.0;  // mean squared value error
  double entropy = 0.0;
};

PpoLossTerms ppo_loss(std::span<const double> ratios, std::span<const double> advantages,
                      std::span<const double> values, std::span<const double> returns,
                      std::span<const double> entropy, const PpoConfig& cfg);

// Actor, state-independent log std and critic over one flat parameter
// vector laid out [actor | log_std | critic].
class Agent {
 public:
  Agent(std::unique_ptr<Actor> actor, std::vector<std::size_t> critic_hidden);

  const Actor& actor() const { return *actor_; }
  const MlpArch& critic() const { return critic_; }
  std::size_t action_dim() const { return actor_->action_dim(); }
  std::size_t param_count() const { return critic_offset() + critic_.param_count(); }
  std::size_t log_std_offset() const { return actor_->param_count(); }
  std::size_t critic_offset() const { return log_std_offset() + action_dim(); }

  std::vector<double> init_params(std::uint64_t seed, double init_log_std) const;

  std::span<const double> actor_params(std::span<const double> all) const;
  std::span<const double> log_std(std::span<const double> all) const;
  std::span<const double> critic_params(std::span<const double> all) const;

  double value(std::span<const double> all, std::span<const double> obs) const;

 private:
  std::unique_ptr<Actor> actor_;
  MlpArch critic_;
};

struct PpoSample {
  std::span<const double> obs;
  std::span<const double> carried;
  std::span<const double> action;
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

struct SampleTerms {
  double ratio = 1.0;
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

// Scalar loss of one sample: -surrogate + vf_coef (V - R)^2 - ent_coef H.
ad::Var record_sample_loss(ad::Tape& tape, const Agent& agent, const ad::ParamRef& params,
                           const PpoSample& sample, const PpoConfig& cfg,
                           SampleTerms* terms = nullptr);

// Records the sample loss and adds weight * gradient into `grad`.
SampleTerms accumulate_sample_gradient(ad::Tape& tape, const Agent& agent,
                                       std::span<const double> params, std::span<double> grad,
                                       const PpoSample& sample, const PpoConfig& cfg,
                                       double weight);

// Per-step records of every worker stream, stored worker-major.
struct RolloutBuffer {
  std::size_t workers = 0;
  std::size_t length = 0;
  std::size_t obs_dim = 0;
  std::size_t carried_dim = 0;
  std::size_t action_dim = 0;

  std::vector<double> obs;      // normalized
  std::vector<double> raw_obs;  // for the normalizer update
  std::vector<double> carried;  // state entering each step
  std::vector<double> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> dones;
  std::vector<double> bootstrap;  // value of the observation after the last step, per worker
  std::vector<double> advantages;
  std::vector<double> returns;

  RolloutBuffer() = default;
  RolloutBuffer(std::size_t workers, std::size_t length, std::size_t obs_dim,
                std::size_t carried_dim, std::size_t action_dim);

  std::size_t size() const { return workers * length; }
  std::size_t index(std::size_t worker, std::size_t t) const { return worker * length + t; }

  // GAE per worker stream, then advantage normalization over the whole buffer.
  void finish(double gamma, double lam);

  PpoSample sample(std::size_t i) const;
};

}  // namespace cpg_actor
