#pragma once

// Interchangeable actors. Every actor maps a normalized observation (plus an
// optional carried recurrent state) to the mean of a diagonal Gaussian; the
// trainer treats them uniformly through this interface.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpg_actor/autodiff.hpp"
#include "cpg_actor/cpg.hpp"
#include "cpg_actor/feedback.hpp"
#include "cpg_actor/hopper.hpp"
#include "cpg_actor/mlp.hpp"

namespace cpg_actor {

enum class ActorKind { kCpgActor, kCpgActorOpenLoop, kMlpActor, kCpgInEnv };

std::string_view actor_name(ActorKind kind);
// Throws std::invalid_argument listing the accepted names.
ActorKind parse_actor_kind(std::string_view name);

// Affine map from oscillator output to joint targets.
struct JointMapping {
  Vec2 offset = {-0.2, 0.6};
  Vec2 range = {0.6, 0.9};

  bool operator==(const JointMapping&) const = default;
};

// Reference CPG values the CPG-in-environment policy is pre-trained to emit.
struct WarmStartTarget {
  double frequency_hz = 1.5;
  double amplitude = 0.4;
  double convergence = 10.0;
  double weight = 0.5;
  double phase = std::numbers::pi;

  std::vector<double> params(const CpgTopology& topo) const;
  bool operator==(const WarmStartTarget&) const = default;
};

struct WarmStartConfig {
  WarmStartTarget target;
  int epochs = 100;
  std::size_t samples = 2048;
  std::size_t minibatch = 256;
  double lr = 1e-2;
  double holdout_fraction = 0.2;

  bool operator==(const WarmStartConfig&) const = default;
};

struct ActorConfig {
  std::vector<std::vector<std::uint8_t>> adjacency = {{0, 1}, {1, 0}};
  CpgInitConfig cpg_init;
  double dt = 0.01;
  FeedbackArch feedback;
  JointMapping joints;
  std::vector<std::size_t> mlp_hidden = {64, 64};
  double mlp_output_gain = 0.01;
  WarmStartConfig warm_start;

  CpgTopology topology() const { return CpgTopology(adjacency); }
  CommandSignal command() const { return CommandSignal{{cpg_init.command}}; }

  bool operator==(const ActorConfig&) const = default;
};

class Actor {
 public:
  virtual ~Actor() = default;

  virtual ActorKind kind() const = 0;
  virtual std::size_t param_count() const = 0;
  // Dimension of the Gaussian the policy samples from.
  virtual std::size_t action_dim() const = 0;
  // Length of the recurrent state threaded by the caller; 0 when stateless.
  virtual std::size_t carried_dim() const { return 0; }

  virtual std::vector<double> init_params(std::uint64_t seed) const = 0;

  // Fresh carried state for a new episode.
  virtual void reset_state(std::span<const double> params, std::mt19937_64& rng,
                           std::span<double> carried) const;

  virtual void act(std::span<const double> params, std::span<const double> obs,
                   std::span<const double> carried_in, std::span<double> carried_out,
                   std::span<double> mean) const = 0;

  // Taped action mean. carried_in enters as a constant.
  virtual ad::Var record_mean(ad::Tape& tape, const ad::ParamRef& params, ad::Var obs,
                              std::span<const double> carried_in) const = 0;

  // Present only for actors that are pre-trained before reinforcement learning.
  virtual std::optional<std::vector<double>> warm_start_target() const { return std::nullopt; }
};

// CPG network driven by an optional feedback MLP. Parameters are
// V followed by the feedback weights (absent when open loop).
class CpgActor final : public Actor {
 public:
  CpgActor(const ActorConfig& cfg, bool closed_loop);

  ActorKind kind() const override {
    return closed_loop_ ? ActorKind::kCpgActor : ActorKind::kCpgActorOpenLoop;
  }
  std::size_t param_count() const override;
  std::size_t action_dim() const override { return 2; }
  std::size_t carried_dim() const override { return 5 * topo_.size(); }
  std::vector<double> init_params(std::uint64_t seed) const override;
  void reset_state(std::span<const double> params, std::mt19937_64& rng,
                   std::span<double> carried) const override;
  void act(std::span<const double> params, std::span<const double> obs,
           std::span<const double> carried_in, std::span<double> carried_out,
           std::span<double> mean) const override;
  ad::Var record_mean(ad::Tape& tape, const ad::ParamRef& params, ad::Var obs,
                      std::span<const double> carried_in) const override;

  const CpgTopology& topology() const { return topo_; }
  const FeedbackArch& feedback() const { return feedback_; }
  bool closed_loop() const { return closed_loop_; }
  std::size_t cpg_offset() const { return 0; }
  std::size_t feedback_offset() const { return topo_.param_count(); }

  // Full step including the derivatives, for diagnostics.
  CpgStepResult step(std::span<const double> params, std::span<const double> obs,
                     const CpgState& state) const;

 private:
  CpgTopology topo_;
  FeedbackArch feedback_;
  CommandSignal cmd_;
  CpgInitConfig init_;
  JointMapping joints_;
  double dt_;
  bool closed_loop_;
};

// Plain tanh MLP emitting joint targets directly.
class MlpActor final : public Actor {
 public:
  explicit MlpActor(const ActorConfig& cfg);

  ActorKind kind() const override { return ActorKind::kMlpActor; }
  std::size_t param_count() const override { return arch_.param_count(); }
  std::size_t action_dim() const override { return 2; }
  std::vector<double> init_params(std::uint64_t seed) const override;
  void act(std::span<const double> params, std::span<const double> obs,
           std::span<const double> carried_in, std::span<double> carried_out,
           std::span<double> mean) const override;
  ad::Var record_mean(ad::Tape& tape, const ad::ParamRef& params, ad::Var obs,
                      std::span<const double> carried_in) const override;

  const MlpArch& arch() const { return arch_; }

 private:
  MlpArch arch_;
  double output_gain_;
};

// Policy emitting a full CPG parameter vector every control step; the CPG
// itself runs inside the environment (see CpgEnvTask).
class CpgInEnvActor final : public Actor {
 public:
  explicit CpgInEnvActor(const ActorConfig& cfg);

  ActorKind kind() const override { return ActorKind::kCpgInEnv; }
  std::size_t param_count() const override { return arch_.param_count(); }
  std::size_t action_dim() const override { return arch_.output_size(); }
  std::vector<double> init_params(std::uint64_t seed) const override;
  void act(std::span<const double> params, std::span<const double> obs,
           std::span<const double> carried_in, std::span<double> carried_out,
           std::span<double> mean) const override;
  ad::Var record_mean(ad::Tape& tape, const ad::ParamRef& params, ad::Var obs,
                      std::span<const double> carried_in) const override;
  std::optional<std::vector<double>> warm_start_target() const override { return target_; }

  const MlpArch& arch() const { return arch_; }

 private:
  MlpArch arch_;
  double output_gain_;
  std::vector<double> target_;
};

std::unique_ptr<Actor> make_actor(ActorKind kind, const ActorConfig& cfg);

struct WarmStartResult {
  std::vector<double> epoch_loss;   // mean training MSE per epoch
  double initial_loss = 0.0;        // MSE before the first update
  double holdout_rel_error = 0.0;   // max over held-out obs of |emit - target| / |target|
};

// Supervised regression of the actor's mean onto `target` over the given
// normalized observations (row-major, kObservationSize per row). A trailing
// holdout_fraction of the rows is kept out of training for the held-out
// error. Updates `params` in place with Adam.
WarmStartResult warm_start(const Actor& actor, std::span<double> params,
                           std::span<const double> observations,
                           std::span<const double> target, const WarmStartConfig& cfg,
                           std::uint64_t seed);

}  // namespace cpg_actor
